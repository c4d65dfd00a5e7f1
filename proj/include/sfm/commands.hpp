#pragma once

#include "sfm/inference.hpp"
#include "sfm/io.hpp"
#include "sfm/saem.hpp"
#include "sfm/simulate.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sfm {

// Exit codes of the command-line tool.
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNotConverged = 2;
inline constexpr int kExitNumerical = 3;

// Where subjects, groups and distances come from.
struct DataOptions {
  std::string data;              // subject CSV
  std::string distances;         // optional G x G matrix; groups index its rows
  std::string metric = "haversine";
  double merge_tolerance_km = 0.0;

  void describe(KeyValues& out) const;
};

struct PreparedData {
  Dataset data;
  DistanceMatrix distances;         // empty when the kernel needs none
  std::vector<GeoPoint> locations;  // per group, when coordinates were given
  std::string grouping;             // how groups were formed
};

// Groups subjects (coordinates first, then a group column, else one group per subject) and
// builds the distance matrix when `need_distances` is set.
PreparedData prepare_data(const DataOptions& options, bool need_distances,
                          std::optional<int> expected_covariates = std::nullopt);

// Explicit cutpoints when given, otherwise `intervals` intervals split at event-time quantiles.
std::vector<double> choose_cutpoints(const Dataset& data, const std::string& cutpoints, int intervals);

// Runs body(0..count-1) on up to `threads` workers (0: hardware concurrency). The first
// exception is rethrown after every worker finished.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

struct SimulateOptions {
  std::string model = "M1";
  long subjects = 300;
  long groups = 0;
  double censoring = 0.0;
  std::string cutpoints;  // truth overrides, empty for the defaults
  std::string hazards;
  std::string beta;
  std::optional<double> sigma2;
  std::optional<double> rho;
  std::string external_distances;
  double square_km = 10.0;
  std::uint64_t seed = 1;
  std::string output = "sim";
  int replications = 1;
  int threads = 0;

  KeyValues describe() const;
};

struct SimulateOutput {
  std::vector<std::string> datasets;
  std::vector<std::string> distance_files;
  std::vector<std::string> truth_files;
};

SimulateOutput cmd_simulate(const SimulateOptions& options);

struct FitOptions {
  DataOptions input;
  std::string kernel = "exp";
  std::string cutpoints;
  int intervals = 3;
  long burn_in = 200;
  long max_iterations = 2000;
  long warmup_sweeps = 200;
  long draws_per_iteration = 1;
  double tolerance = 1e-3;
  int block_size = 10;
  double target_acceptance = 0.3;
  double initial_scale = 0.5;
  double adaptation_rate = 0.5;
  int sweeps = 10;
  int adapt_window = 10;
  bool truncation = false;
  double init_sigma2 = 1.0;
  double init_rho = 1.0;
  long fisher_burn_in = 500;
  long fisher_draws = 5000;
  long mc_draws = 10000;
  std::uint64_t seed = 1;
  std::string output = "fit";
  int replications = 1;
  int threads = 0;

  SaemConfig saem_config() const;
  KeyValues describe() const;
};

struct FitOutcome {
  FitResult fit;
  std::optional<InferenceSummary> inference;
  std::optional<MarginalEstimate> marginal;
  std::string inference_error;  // why standard errors are missing
  std::vector<double> cutpoints;
  PreparedData prepared;
  std::string report_path, trace_path, estimates_path, model_path;
};

// Fits the model, writes <output>.report.txt, .trace.csv, .estimates.csv and .model.txt,
// and returns the exit code (0 converged, 2 max iterations, 3 numerical failure in the
// inference stage). Replications write <output>_r<k>.* from substream seeds.
int cmd_fit(const FitOptions& options, std::vector<FitOutcome>* outcomes = nullptr);

struct CompareOptions {
  DataOptions input;
  std::string model_a;
  std::string model_b;
  std::string draws = "10000";  // comma-separated sweep of C
  std::uint64_t seed = 1;
  std::string output = "compare.txt";

  KeyValues describe() const;
};

struct CompareRow {
  long draws = 0;
  MarginalEstimate a;
  MarginalEstimate b;
};

struct CompareOutcome {
  std::vector<CompareRow> rows;
  std::string preferred;  // "a" or "b"
  std::optional<LrtResult> lrt;
};

CompareOutcome cmd_compare(const CompareOptions& options);

struct CurvesOptions {
  std::string model;
  std::string output = "curves";
  int points = 1000;
  double max_time = 0.0;      // 0: twice the last cutpoint (or 1)
  double max_distance = 10.0;

  KeyValues describe() const;
};

struct CurvesOutput {
  std::string hazard_path;
  std::string correlation_path;
};

CurvesOutput cmd_curves(const CurvesOptions& options);

struct PhOptions {
  DataOptions input;
  std::string cutpoints;
  int intervals = 3;
  bool jackknife = true;  // clusters are the frailty groups
  std::string output = "ph";

  KeyValues describe() const;
};

int cmd_ph(const PhOptions& options);

// Maps library exceptions onto exit codes and prints the message to `err`.
int run_guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace sfm
