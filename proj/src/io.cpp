#include "sfm/io.hpp"

#include "sfm/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace sfm {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r' || s[a] == '\n')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '\n')) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  return out;
}

bool try_parse(std::string_view text, double& value) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), value);
  if (ec == std::errc::result_out_of_range) return false;
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::string located(const std::string& path, long line, const std::string& msg) {
  return path + ":" + std::to_string(line) + ": " + msg;
}

std::string expected_columns(int p) {
  std::string s = "id,time,status";
  if (p > 0) s += p == 1 ? ",z1" : ",z1..z" + std::to_string(p);
  else s += ",z1..zp";
  return s + "[,lon,lat][,group]";
}

}  // namespace

SubjectTable read_subject_table(const std::string& path, std::optional<int> expected_covariates) {
  std::ifstream in = open_input(path);
  std::string line;
  long line_no = 0;
  const int p_hint = expected_covariates.value_or(0);
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ValidationError(path + ": empty file, expected header " + expected_columns(p_hint));
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const std::vector<std::string> header = split(line, ',');

  // Column layout.
  auto schema_error = [&](const std::string& what) {
    return ValidationError(located(path, line_no, what + "; expected columns: " + expected_columns(p_hint)));
  };
  if (header.size() < 3 || header[0] != "id" || header[1] != "time" || header[2] != "status") {
    throw schema_error("header must start with id,time,status");
  }
  int p = 0;
  std::size_t col = 3;
  while (col < header.size() && header[col] == "z" + std::to_string(p + 1)) {
    ++p;
    ++col;
  }
  if (expected_covariates && p != *expected_covariates) {
    throw schema_error("found " + std::to_string(p) + " covariate column(s), need " +
                       std::to_string(*expected_covariates));
  }
  int lon_col = -1, lat_col = -1, group_col = -1;
  for (; col < header.size(); ++col) {
    const std::string& name = header[col];
    if (name == "lon") lon_col = static_cast<int>(col);
    else if (name == "lat") lat_col = static_cast<int>(col);
    else if (name == "group") group_col = static_cast<int>(col);
    else if (name.size() > 1 && name[0] == 'z') throw schema_error("covariate column '" + name + "' out of order or missing a predecessor");
    else throw schema_error("unknown column '" + name + "'");
  }
  if ((lon_col < 0) != (lat_col < 0)) throw schema_error("lon and lat must appear together");

  std::vector<std::string> ids;
  std::vector<double> time;
  std::vector<int> status, group;
  std::vector<double> z;
  std::vector<GeoPoint> coords;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw ValidationError(located(path, line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                                       std::to_string(cells.size())));
    }
    auto number = [&](std::size_t c) {
      double v = 0.0;
      if (!try_parse(cells[c], v) || !std::isfinite(v)) {
        throw ValidationError(located(path, line_no, "column '" + header[c] + "': '" + cells[c] + "' is not a finite number"));
      }
      return v;
    };
    ids.push_back(cells[0]);
    const double t = number(1);
    if (t < 0.0) throw ValidationError(located(path, line_no, "column 'time': must be nonnegative"));
    time.push_back(t);
    const double s = number(2);
    if (s != 0.0 && s != 1.0) throw ValidationError(located(path, line_no, "column 'status': must be 0 or 1"));
    status.push_back(static_cast<int>(s));
    for (int j = 0; j < p; ++j) z.push_back(number(3 + static_cast<std::size_t>(j)));
    if (lon_col >= 0) {
      coords.push_back({number(static_cast<std::size_t>(lon_col)), number(static_cast<std::size_t>(lat_col))});
    }
    if (group_col >= 0) {
      const double gv = number(static_cast<std::size_t>(group_col));
      if (gv < 0.0 || gv != std::floor(gv)) {
        throw ValidationError(located(path, line_no, "column 'group': must be a nonnegative integer"));
      }
      group.push_back(static_cast<int>(gv));
    }
  }
  if (time.empty()) throw ValidationError(path + ": no data rows");

  SubjectTable out;
  const auto n = static_cast<Eigen::Index>(time.size());
  out.ids = std::move(ids);
  out.time = Eigen::Map<const Eigen::VectorXd>(time.data(), n);
  out.status = std::move(status);
  out.covariates.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) out.covariates(i, j) = z[static_cast<std::size_t>(i * p + j)];
  out.coordinates = std::move(coords);
  out.group = std::move(group);
  return out;
}

void write_subject_table(const std::string& path, const Dataset& data,
                         const std::vector<GeoPoint>& group_locations, bool with_group) {
  const bool coords = !group_locations.empty();
  if (coords && static_cast<int>(group_locations.size()) != data.num_groups) {
    throw ValidationError("one location per frailty group is required");
  }
  std::ofstream out = open_output(path);
  out << "id,time,status";
  for (Eigen::Index j = 0; j < data.num_covariates(); ++j) out << ",z" << j + 1;
  if (coords) out << ",lon,lat";
  if (with_group) out << ",group";
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int g = data.group[static_cast<std::size_t>(i)];
    out << i + 1 << ',' << format_double(data.time(i)) << ',' << data.status[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < data.num_covariates(); ++j) out << ',' << format_double(data.covariates(i, j));
    if (coords) {
      const GeoPoint& pt = group_locations[static_cast<std::size_t>(g)];
      out << ',' << format_double(pt.lon) << ',' << format_double(pt.lat);
    }
    if (with_group) out << ',' << g;
    out << '\n';
  }
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

DistanceMatrix read_distance_matrix(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  long line_no = 0;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) numeric = numeric && try_parse(cells[c], row[c]);
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ValidationError(located(path, line_no, "non-numeric distance entry"));
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ValidationError(located(path, line_no, "row length differs from the first row"));
    }
    rows.push_back(std::move(row));
  }
  const auto g = static_cast<Eigen::Index>(rows.size());
  if (g == 0) throw ValidationError(path + ": no distance rows");
  if (static_cast<Eigen::Index>(rows.front().size()) != g) {
    throw ValidationError(path + ": distance matrix must be square, found " + std::to_string(g) + " rows of " +
                          std::to_string(rows.front().size()));
  }
  Eigen::MatrixXd d(g, g);
  for (Eigen::Index i = 0; i < g; ++i)
    for (Eigen::Index j = 0; j < g; ++j) d(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  try {
    return DistanceMatrix(std::move(d));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_distance_matrix(const std::string& path, const DistanceMatrix& distances) {
  std::ofstream out = open_output(path);
  const Eigen::Index g = distances.size();
  for (Eigen::Index i = 0; i < g; ++i) {
    for (Eigen::Index j = 0; j < g; ++j) {
      if (j) out << ',';
      out << format_double(distances(i, j));
    }
    out << '\n';
  }
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in = open_input(path);
  KeyValues out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ValidationError(located(path, line_no, "expected key=value"));
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

void write_key_values(const std::string& path, const KeyValues& values) {
  std::ofstream out = open_output(path);
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

std::optional<std::string> find_value(const KeyValues& values, std::string_view key) {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  return std::nullopt;
}

std::string require_value(const KeyValues& values, std::string_view key, std::string_view source) {
  auto v = find_value(values, key);
  if (!v) throw ValidationError(std::string(source) + ": missing key '" + std::string(key) + "'");
  return *v;
}

std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(value);
}

std::string format_list(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += format_double(values[i]);
  }
  return s;
}

std::string format_list(const Eigen::VectorXd& values) {
  return format_list(std::vector<double>(values.data(), values.data() + values.size()));
}

double parse_double(std::string_view text, std::string_view field) {
  double v = 0.0;
  const std::string t = trim(text);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (!try_parse(t, v)) throw ValidationError(std::string(field) + ": '" + t + "' is not a number");
  return v;
}

std::vector<double> parse_list(std::string_view text, std::string_view field) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const std::string& cell : split(text, ',')) out.push_back(parse_double(cell, field));
  return out;
}

KeyValues params_to_key_values(const ModelParams& params) {
  KeyValues kv;
  kv.emplace_back("kernel", std::string(to_string(params.kernel)));
  kv.emplace_back("cutpoints", format_list(params.baseline.cutpoints()));
  kv.emplace_back("hazards", format_list(params.baseline.hazards()));
  kv.emplace_back("beta", format_list(params.beta));
  kv.emplace_back("sigma2", format_double(params.sigma2));
  if (params.has_rho()) kv.emplace_back("rho", format_double(params.rho));
  return kv;
}

ModelParams params_from_key_values(const KeyValues& values, std::string_view source) {
  ModelParams p;
  p.kernel = parse_kernel(require_value(values, "kernel", source));
  p.baseline = PiecewiseBaseline(parse_list(require_value(values, "cutpoints", source), "cutpoints"),
                                 parse_list(require_value(values, "hazards", source), "hazards"));
  const std::vector<double> beta = parse_list(require_value(values, "beta", source), "beta");
  p.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  p.sigma2 = parse_double(require_value(values, "sigma2", source), "sigma2");
  if (p.has_rho()) p.rho = parse_double(require_value(values, "rho", source), "rho");
  return p;
}

}  // namespace sfm
