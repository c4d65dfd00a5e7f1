#pragma once

#include "sfm/model.hpp"
#include "sfm/spatial.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sfm {

// Canonical subject table: id, time, status, z1..zp, then optional lon, lat and group.
struct SubjectTable {
  std::vector<std::string> ids;
  Eigen::VectorXd time;
  std::vector<int> status;
  Eigen::MatrixXd covariates;
  std::vector<GeoPoint> coordinates;  // empty without lon/lat columns
  std::vector<int> group;             // empty without a group column

  Eigen::Index size() const { return time.size(); }
  bool has_coordinates() const { return !coordinates.empty(); }
  bool has_group() const { return !group.empty(); }
};

// Schema and value errors carry the line number. `expected_covariates` rejects files with
// a different number of z columns.
SubjectTable read_subject_table(const std::string& path,
                                std::optional<int> expected_covariates = std::nullopt);

// Writes one row per subject. `group_locations` (one per group) fills lon/lat; the group
// column is written when `with_group` is set.
void write_subject_table(const std::string& path, const Dataset& data,
                         const std::vector<GeoPoint>& group_locations, bool with_group);

// Row-major G x G matrix, header row optional.
DistanceMatrix read_distance_matrix(const std::string& path);
void write_distance_matrix(const std::string& path, const DistanceMatrix& distances);

// Flat key=value records; '#' starts a comment line.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& values);
std::optional<std::string> find_value(const KeyValues& values, std::string_view key);
std::string require_value(const KeyValues& values, std::string_view key, std::string_view source);

// Round-trip formatting of doubles and comma-separated lists.
std::string format_double(double value);
std::string format_list(const std::vector<double>& values);
std::string format_list(const Eigen::VectorXd& values);
double parse_double(std::string_view text, std::string_view field);
std::vector<double> parse_list(std::string_view text, std::string_view field);

// kernel, cutpoints, hazards, beta, sigma2 and rho as key=value entries.
KeyValues params_to_key_values(const ModelParams& params);
ModelParams params_from_key_values(const KeyValues& values, std::string_view source);

}  // namespace sfm
