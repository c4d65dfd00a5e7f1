#include "sfm/commands.hpp"

#include "sfm/baselines.hpp"
#include "sfm/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace sfm {

namespace {

DistanceMetric parse_metric(const std::string& name) {
  if (name == "haversine") return DistanceMetric::Haversine;
  if (name == "euclidean") return DistanceMetric::Euclidean;
  throw ValidationError("metric: expected 'haversine' or 'euclidean', got '" + name + "'");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string prefix_for(const std::string& output, int replications, int r) {
  return replications > 1 ? output + "_r" + std::to_string(r + 1) : output;
}

void add(KeyValues& kv, const std::string& key, const std::string& value) { kv.emplace_back(key, value); }
void add(KeyValues& kv, const std::string& key, double value) { kv.emplace_back(key, format_double(value)); }
void add(KeyValues& kv, const std::string& key, long value) { kv.emplace_back(key, std::to_string(value)); }
void add(KeyValues& kv, const std::string& key, int value) { kv.emplace_back(key, std::to_string(value)); }
void add(KeyValues& kv, const std::string& key, std::uint64_t value) { kv.emplace_back(key, std::to_string(value)); }
void add(KeyValues& kv, const std::string& key, bool value) { kv.emplace_back(key, value ? "true" : "false"); }

void write_config(std::ostream& out, const KeyValues& config) {
  out << "\n[config]\n";
  for (const auto& [k, v] : config) out << k << '=' << v << '\n';
}

std::string interval_label(const PiecewiseBaseline& base, std::size_t m) {
  const auto& c = base.cutpoints();
  std::string hi = m + 1 < c.size() ? fmt("%.4g", c[m + 1]) : "inf";
  return "[" + fmt("%.4g", c[m]) + ", " + hi + ")";
}

double wald_p_value(double estimate, double se) {
  return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

double kernel_value(double d, double rho, KernelKind kernel) {
  if (d == 0.0) return 1.0;
  switch (kernel) {
    case KernelKind::Exp: return std::exp(-rho * d);
    case KernelKind::Pol: return 1.0 / (1.0 + std::exp(rho * std::log(d)));
    case KernelKind::Identity: return 0.0;
  }
  return 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Shared plumbing

void DataOptions::describe(KeyValues& out) const {
  add(out, "data", data);
  add(out, "distances", distances);
  add(out, "metric", metric);
  add(out, "merge-tolerance", merge_tolerance_km);
}

PreparedData prepare_data(const DataOptions& options, bool need_distances,
                          std::optional<int> expected_covariates) {
  if (options.data.empty()) throw ValidationError("data: a subject CSV file is required");
  if (!(options.merge_tolerance_km >= 0.0)) throw ValidationError("merge-tolerance: must be nonnegative");
  const DistanceMetric metric = parse_metric(options.metric);
  SubjectTable table = read_subject_table(options.data, expected_covariates);
  const auto n = static_cast<int>(table.size());

  PreparedData out;
  std::vector<int> group(static_cast<std::size_t>(n));
  if (!options.distances.empty()) {
    const DistanceMatrix full = read_distance_matrix(options.distances);
    if (table.has_group()) {
      group = table.group;
      out.grouping = "group column indexes the rows of " + options.distances;
    } else {
      std::iota(group.begin(), group.end(), 0);
      out.grouping = "one group per subject, subject i at row i of " + options.distances;
    }
    std::set<int> used(group.begin(), group.end());
    if (*used.rbegin() >= full.size()) {
      throw ValidationError("group " + std::to_string(*used.rbegin()) + " exceeds the " +
                            std::to_string(full.size()) + " rows of " + options.distances);
    }
    std::vector<int> rows(used.begin(), used.end());
    std::map<int, int> remap;
    for (std::size_t k = 0; k < rows.size(); ++k) remap[rows[k]] = static_cast<int>(k);
    for (int& g : group) g = remap[g];
    if (need_distances) {
      out.distances = static_cast<Eigen::Index>(rows.size()) == full.size() ? full : full.subset(rows);
    }
  } else if (table.has_coordinates()) {
    LocationGrouping lg = group_identical_locations(table.coordinates, options.merge_tolerance_km, metric);
    group = std::move(lg.group_of);
    out.locations = std::move(lg.locations);
    out.grouping = options.merge_tolerance_km > 0.0
                       ? "coordinates within " + format_double(options.merge_tolerance_km) + " km merged"
                       : "identical coordinates share a group";
    if (need_distances) out.distances = build_distance_matrix(out.locations, metric);
  } else if (table.has_group()) {
    if (need_distances) throw ValidationError("a spatial kernel needs lon/lat columns or a distance matrix file");
    std::map<int, int> remap;
    for (int i = 0; i < n; ++i) {
      auto [it, inserted] = remap.emplace(table.group[static_cast<std::size_t>(i)], static_cast<int>(remap.size()));
      group[static_cast<std::size_t>(i)] = it->second;
    }
    out.grouping = "group column";
  } else {
    if (need_distances) throw ValidationError("a spatial kernel needs lon/lat columns or a distance matrix file");
    std::iota(group.begin(), group.end(), 0);
    out.grouping = "one group per subject";
  }
  out.data = make_dataset(std::move(table.time), std::move(table.status), std::move(table.covariates),
                          std::move(group));
  return out;
}

std::vector<double> choose_cutpoints(const Dataset& data, const std::string& cutpoints, int intervals) {
  if (!cutpoints.empty()) return parse_list(cutpoints, "cutpoints");
  if (intervals < 1) throw ValidationError("intervals: must be positive");
  std::vector<double> events;
  for (Eigen::Index i = 0; i < data.size(); ++i)
    if (data.status[static_cast<std::size_t>(i)] == 1) events.push_back(data.time(i));
  if (events.empty()) throw ValidationError("data: no events, cannot place cutpoints");
  std::sort(events.begin(), events.end());
  std::vector<double> out{0.0};
  for (int m = 1; m < intervals; ++m) {
    const auto idx = static_cast<std::size_t>(static_cast<double>(m) / intervals * static_cast<double>(events.size()));
    const double c = events[std::min(idx, events.size() - 1)];
    if (c > out.back()) out.push_back(c);
  }
  return out;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (count <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNotConverged;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

// ---------------------------------------------------------------------------
// simulate

KeyValues SimulateOptions::describe() const {
  KeyValues kv;
  add(kv, "model", model);
  add(kv, "subjects", subjects);
  add(kv, "groups", groups);
  add(kv, "censoring", censoring);
  add(kv, "cutpoints", cutpoints);
  add(kv, "hazards", hazards);
  add(kv, "beta", beta);
  add(kv, "sigma2", sigma2 ? format_double(*sigma2) : std::string());
  add(kv, "rho", rho ? format_double(*rho) : std::string());
  add(kv, "external-distances", external_distances);
  add(kv, "square-km", square_km);
  add(kv, "seed", seed);
  add(kv, "output", output);
  add(kv, "replications", replications);
  return kv;
}

SimulateOutput cmd_simulate(const SimulateOptions& options) {
  ScenarioOptions so;
  so.model = parse_scenario(options.model);
  if (options.subjects < 1) throw ValidationError("subjects: must be positive");
  if (!(options.censoring >= 0.0 && options.censoring < 1.0)) {
    throw ValidationError("censoring: target must lie in [0, 1), got " + format_double(options.censoring));
  }
  if (options.replications < 1) throw ValidationError("replications: must be positive");
  if (!(options.square_km > 0.0)) throw ValidationError("square-km: must be positive");
  so.subjects = options.subjects;
  so.groups = options.groups;
  so.censoring = options.censoring;
  so.square_km = options.square_km;

  ModelParams truth = default_truth(so.model);
  std::vector<double> cut = truth.baseline.cutpoints();
  std::vector<double> haz = truth.baseline.hazards();
  if (!options.cutpoints.empty()) cut = parse_list(options.cutpoints, "cutpoints");
  if (!options.hazards.empty()) haz = parse_list(options.hazards, "hazards");
  if (cut.size() != haz.size()) throw ValidationError("hazards: need one value per cutpoint");
  truth.baseline = PiecewiseBaseline(cut, haz);
  if (!options.beta.empty()) {
    const std::vector<double> b = parse_list(options.beta, "beta");
    truth.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  if (options.sigma2) truth.sigma2 = *options.sigma2;
  if (options.rho) truth.rho = *options.rho;
  so.truth = truth;
  if (!options.external_distances.empty()) so.external = read_distance_matrix(options.external_distances);

  SimulateOutput out;
  out.datasets.resize(static_cast<std::size_t>(options.replications));
  out.distance_files.resize(out.datasets.size());
  out.truth_files.resize(out.datasets.size());
  const KeyValues config = options.describe();

  parallel_for(options.replications, options.threads, [&](int r) {
    Rng rng = substream(options.seed, static_cast<std::uint64_t>(r));
    const Scenario sc = generate_scenario(so, rng);
    const std::string prefix = prefix_for(options.output, options.replications, r);
    const auto ur = static_cast<std::size_t>(r);

    out.datasets[ur] = prefix + ".csv";
    write_subject_table(out.datasets[ur], sc.data, sc.locations, true);
    if (sc.distances.size() > 0) {
      out.distance_files[ur] = prefix + ".dist.csv";
      write_distance_matrix(out.distance_files[ur], sc.distances);
    }

    KeyValues truth_kv;
    add(truth_kv, "scenario", to_string(so.model));
    for (auto& kv : params_to_key_values(sc.truth)) truth_kv.push_back(kv);
    add(truth_kv, "subjects", static_cast<long>(sc.data.size()));
    add(truth_kv, "groups", static_cast<long>(sc.data.num_groups));
    add(truth_kv, "censoring_rate", sc.censoring_rate);
    long censored = 0;
    for (int s : sc.data.status) censored += s == 0;
    add(truth_kv, "censored_fraction", static_cast<double>(censored) / static_cast<double>(sc.data.size()));
    add(truth_kv, "replication", r + 1);
    add(truth_kv, "stream_seed", options.seed);
    for (const auto& [k, v] : config) truth_kv.emplace_back("config." + k, v);
    out.truth_files[ur] = prefix + ".truth.txt";
    write_key_values(out.truth_files[ur], truth_kv);
  });
  return out;
}

// ---------------------------------------------------------------------------
// fit

SaemConfig FitOptions::saem_config() const {
  SaemConfig c;
  c.burn_in = burn_in;
  c.max_iterations = max_iterations;
  c.warmup_sweeps = warmup_sweeps;
  c.draws_per_iteration = draws_per_iteration;
  c.tolerance = tolerance;
  c.sampler.block_size = block_size;
  c.sampler.target_acceptance = target_acceptance;
  c.sampler.initial_scale = initial_scale;
  c.sampler.adaptation_rate = adaptation_rate;
  c.sampler.sweeps_per_iteration = sweeps;
  c.sampler.adapt_window = adapt_window;
  c.truncation = truncation;
  return c;
}

KeyValues FitOptions::describe() const {
  KeyValues kv;
  input.describe(kv);
  add(kv, "kernel", kernel);
  add(kv, "cutpoints", cutpoints);
  add(kv, "intervals", intervals);
  add(kv, "burn-in", burn_in);
  add(kv, "max-iterations", max_iterations);
  add(kv, "warmup-sweeps", warmup_sweeps);
  add(kv, "draws-per-iteration", draws_per_iteration);
  add(kv, "tolerance", tolerance);
  add(kv, "block-size", block_size);
  add(kv, "target-acceptance", target_acceptance);
  add(kv, "initial-scale", initial_scale);
  add(kv, "adaptation-rate", adaptation_rate);
  add(kv, "sweeps", sweeps);
  add(kv, "adapt-window", adapt_window);
  add(kv, "truncation", truncation);
  add(kv, "init-sigma2", init_sigma2);
  add(kv, "init-rho", init_rho);
  add(kv, "fisher-burn-in", fisher_burn_in);
  add(kv, "fisher-draws", fisher_draws);
  add(kv, "mc-draws", mc_draws);
  add(kv, "seed", seed);
  add(kv, "output", output);
  add(kv, "replications", replications);
  return kv;
}

namespace {

void write_fit_report(const FitOutcome& o, const KeyValues& config, const std::string& kernel_name,
                      int replication, std::uint64_t seed) {
  const Dataset& d = o.prepared.data;
  const ModelParams& p = o.fit.params;
  long events = 0;
  for (int s : d.status) events += s;

  std::ofstream out(o.report_path);
  if (!out) throw ValidationError("cannot open '" + o.report_path + "' for writing");
  out << "Frailty survival model fit (" << kernel_name << " kernel)\n";
  out << "subjects: " << d.size() << "  groups: " << d.num_groups << "  events: " << events
      << "  censored: " << fmt("%.1f", 100.0 * static_cast<double>(d.size() - events) / static_cast<double>(d.size()))
      << "%\n";
  out << "grouping: " << o.prepared.grouping << "\n";
  out << "seed: " << seed << "  replication: " << replication << "\n";
  out << "converged: " << (o.fit.converged ? "yes" : "no") << " after " << o.fit.iterations
      << " iterations (restarts " << o.fit.restarts << ")\n";
  out << "sampler acceptance: " << fmt("%.3f", o.fit.acceptance) << "\n";
  if (o.marginal) {
    out << "marginal log-likelihood: " << fmt("%.3f", o.marginal->log_likelihood) << " (MC SE "
        << fmt("%.3f", o.marginal->mc_standard_error) << ", C = " << o.marginal->draws << ")\n";
  }
  for (const auto& w : o.fit.warnings) out << "warning: " << w << "\n";

  out << "\n" << pad("Parameter", 26) << pad("Estimate", 12) << pad("SE", 12) << "95% CI\n";
  const std::vector<std::string> labels = p.labels();
  const Eigen::VectorXd theta = p.to_vector();
  const auto m_count = p.baseline.num_intervals();
  for (std::size_t j = 0; j < labels.size(); ++j) {
    std::string name = labels[j];
    if (j < m_count) name += " " + interval_label(p.baseline, j);
    out << pad(name, 26) << pad(fmt("%.4f", theta(static_cast<Eigen::Index>(j))), 12);
    if (o.inference) {
      const ParameterSummary& s = o.inference->parameters[j];
      out << pad(fmt("%.4f", s.standard_error), 12) << "[" << fmt("%.4f", s.ci_low) << ", "
          << fmt("%.4f", s.ci_high) << "]";
    } else {
      out << pad("NA", 12) << "NA";
    }
    out << "\n";
  }

  out << "\n" << pad("Covariate", 12) << pad("HR", 12) << pad("95% CI", 24) << "p-value\n";
  for (Eigen::Index j = 0; j < p.beta.size(); ++j) {
    out << pad("z" + std::to_string(j + 1), 12) << pad(fmt("%.3f", std::exp(p.beta(j))), 12);
    if (o.inference) {
      const ParameterSummary& hr = o.inference->hazard_ratios[static_cast<std::size_t>(j)];
      const ParameterSummary& b = o.inference->parameters[m_count + static_cast<std::size_t>(j)];
      out << pad("[" + fmt("%.3f", hr.ci_low) + ", " + fmt("%.3f", hr.ci_high) + "]", 24)
          << fmt("%.3f", wald_p_value(b.estimate, b.standard_error));
    } else {
      out << pad("NA", 24) << "NA";
    }
    out << "\n";
  }

  out << "\nFrailty variance sigma2: " << fmt("%.4f", p.sigma2);
  if (o.inference) out << " (SE " << fmt("%.4f", o.inference->parameters[m_count + p.beta.size()].standard_error) << ")";
  out << "\n";
  if (p.has_rho()) {
    out << "Correlation parameter rho: " << fmt("%.4f", p.rho);
    if (o.inference) out << " (SE " << fmt("%.4f", o.inference->parameters.back().standard_error) << ")";
    out << "\n";
  }
  if (!o.inference_error.empty()) out << "standard errors unavailable: " << o.inference_error << "\n";
  write_config(out, config);
}

void write_trace(const FitOutcome& o) {
  std::ofstream out(o.trace_path);
  if (!out) throw ValidationError("cannot open '" + o.trace_path + "' for writing");
  out << "iteration";
  for (const auto& l : o.fit.labels) out << ',' << l;
  out << ",acceptance\n";
  for (std::size_t k = 0; k < o.fit.trace.size(); ++k) {
    out << k + 1;
    for (Eigen::Index j = 0; j < o.fit.trace[k].size(); ++j) out << ',' << format_double(o.fit.trace[k](j));
    out << ',' << format_double(o.fit.trace_acceptance[k]) << '\n';
  }
}

void write_estimates(const FitOutcome& o) {
  std::ofstream out(o.estimates_path);
  if (!out) throw ValidationError("cannot open '" + o.estimates_path + "' for writing");
  out << "parameter,estimate,se,ci_low,ci_high\n";
  if (o.inference) {
    for (const auto* list : {&o.inference->parameters, &o.inference->hazard_ratios})
      for (const ParameterSummary& s : *list)
        out << s.label << ',' << format_double(s.estimate) << ',' << format_double(s.standard_error) << ','
            << format_double(s.ci_low) << ',' << format_double(s.ci_high) << '\n';
  } else {
    const auto labels = o.fit.params.labels();
    const Eigen::VectorXd theta = o.fit.params.to_vector();
    for (std::size_t j = 0; j < labels.size(); ++j)
      out << labels[j] << ',' << format_double(theta(static_cast<Eigen::Index>(j))) << ",,,\n";
  }
}

void write_model(const FitOutcome& o, const KeyValues& config, std::uint64_t seed) {
  KeyValues kv = params_to_key_values(o.fit.params);
  add(kv, "converged", o.fit.converged);
  add(kv, "iterations", o.fit.iterations);
  if (o.marginal) {
    add(kv, "log_likelihood", o.marginal->log_likelihood);
    add(kv, "log_likelihood_mc_se", o.marginal->mc_standard_error);
  }
  add(kv, "stream_seed", seed);
  for (const auto& [k, v] : config) kv.emplace_back("config." + k, v);
  write_key_values(o.model_path, kv);
}

}  // namespace

int cmd_fit(const FitOptions& options, std::vector<FitOutcome>* outcomes) {
  const KernelKind kernel = parse_kernel(options.kernel);
  const SaemConfig base_config = options.saem_config();
  base_config.validate();
  if (options.replications < 1) throw ValidationError("replications: must be positive");
  if (options.fisher_draws < 2) throw ValidationError("fisher-draws: need at least 2");
  if (options.fisher_burn_in < 0 || options.mc_draws < 0) throw ValidationError("fisher-burn-in and mc-draws must be nonnegative");
  if (!(options.init_sigma2 > 0.0) || !(options.init_rho > 0.0)) throw ValidationError("init-sigma2 and init-rho must be positive");

  const PreparedData prepared = prepare_data(options.input, kernel != KernelKind::Identity);
  const std::vector<double> cutpoints = choose_cutpoints(prepared.data, options.cutpoints, options.intervals);
  base_config.sampler.validate(prepared.data.num_groups);
  const KeyValues config = options.describe();
  const ModelParams init = initial_params(prepared.data, cutpoints, kernel, options.init_sigma2, options.init_rho);

  std::vector<FitOutcome> results(static_cast<std::size_t>(options.replications));
  std::vector<int> codes(results.size(), kExitSuccess);
  parallel_for(options.replications, options.threads, [&](int r) {
    FitOutcome& o = results[static_cast<std::size_t>(r)];
    Rng rng = substream(options.seed, static_cast<std::uint64_t>(r));
    SaemConfig cfg = base_config;
    if (kernel == KernelKind::Identity) cfg.mstep.update_rho = false;
    o.prepared = prepared;
    o.cutpoints = cutpoints;
    o.fit = fit(prepared.data, prepared.distances, kernel, cfg, init, rng);

    const CorrelationFactor corr = factor_for(o.fit.params, prepared.distances, prepared.data.num_groups);
    try {
      const auto draws = posterior_draws(prepared.data, o.fit.params, corr, o.fit.sampler, cfg.sampler,
                                         options.fisher_burn_in, options.fisher_draws, rng);
      const FisherMatrix fisher = fisher_information(o.fit.params, prepared.data, corr, draws);
      o.inference = standard_errors(fisher, o.fit.params);
    } catch (const NumericalError& e) {
      o.inference_error = e.what();
    }
    if (options.mc_draws > 0) {
      try {
        o.marginal = marginal_log_likelihood_mc(o.fit.params, prepared.data, corr, options.mc_draws, rng);
      } catch (const NumericalError& e) {
        o.fit.warnings.push_back(std::string("marginal likelihood: ") + e.what());
      }
    }

    const std::string prefix = prefix_for(options.output, options.replications, r);
    o.report_path = prefix + ".report.txt";
    o.trace_path = prefix + ".trace.csv";
    o.estimates_path = prefix + ".estimates.csv";
    o.model_path = prefix + ".model.txt";
    write_fit_report(o, config, std::string(to_string(kernel)), r + 1, options.seed);
    write_trace(o);
    write_estimates(o);
    write_model(o, config, options.seed);

    int& code = codes[static_cast<std::size_t>(r)];
    if (!o.inference_error.empty()) code = kExitNumerical;
    else if (!o.fit.converged) code = kExitNotConverged;
  });

  if (outcomes) *outcomes = std::move(results);
  return *std::max_element(codes.begin(), codes.end());
}

// ---------------------------------------------------------------------------
// compare

KeyValues CompareOptions::describe() const {
  KeyValues kv;
  input.describe(kv);
  add(kv, "model-a", model_a);
  add(kv, "model-b", model_b);
  add(kv, "draws", draws);
  add(kv, "seed", seed);
  add(kv, "output", output);
  return kv;
}

CompareOutcome cmd_compare(const CompareOptions& options) {
  if (options.model_a.empty() || options.model_b.empty()) throw ValidationError("model-a and model-b are required");
  const KeyValues kva = read_key_values(options.model_a);
  const KeyValues kvb = read_key_values(options.model_b);
  for (const auto* kv : {&kva, &kvb}) {
    const auto conv = find_value(*kv, "converged");
    if (conv && *conv != "true") {
      throw ValidationError("model " + (kv == &kva ? options.model_a : options.model_b) + " did not converge");
    }
  }
  const ModelParams pa = params_from_key_values(kva, options.model_a);
  const ModelParams pb = params_from_key_values(kvb, options.model_b);
  pa.validate();
  pb.validate();

  std::vector<long> sweep_draws;
  for (double c : parse_list(options.draws, "draws")) {
    if (!(c >= 1.0) || c != std::floor(c)) throw ValidationError("draws: entries must be positive integers");
    sweep_draws.push_back(static_cast<long>(c));
  }
  if (sweep_draws.empty()) throw ValidationError("draws: at least one value is required");

  const PreparedData prepared = prepare_data(options.input, pa.has_rho() || pb.has_rho(),
                                             static_cast<int>(pa.beta.size()));
  if (pb.beta.size() != pa.beta.size()) throw ValidationError("the two models use different covariates");
  const Eigen::Index g = prepared.data.num_groups;
  const CorrelationFactor ca = factor_for(pa, prepared.distances, g);
  const CorrelationFactor cb = factor_for(pb, prepared.distances, g);

  CompareOutcome out;
  for (std::size_t k = 0; k < sweep_draws.size(); ++k) {
    CompareRow row;
    row.draws = sweep_draws[k];
    Rng ra = substream(options.seed, k);
    Rng rb = substream(options.seed, k);
    row.a = marginal_log_likelihood_mc(pa, prepared.data, ca, row.draws, ra);
    row.b = marginal_log_likelihood_mc(pb, prepared.data, cb, row.draws, rb);
    out.rows.push_back(row);
  }
  const CompareRow& last = out.rows.back();
  out.preferred = last.b.log_likelihood > last.a.log_likelihood ? "b" : "a";

  // Nested pairs: independent frailties inside a spatial model, or the same model twice.
  const bool same = pa.kernel == pb.kernel && pa.to_vector() == pb.to_vector();
  if (pa.kernel == KernelKind::Identity && pb.has_rho()) {
    out.lrt = lrt_boundary_pvalue(last.b.log_likelihood, last.a.log_likelihood);
  } else if (pb.kernel == KernelKind::Identity && pa.has_rho()) {
    out.lrt = lrt_boundary_pvalue(last.a.log_likelihood, last.b.log_likelihood);
  } else if (same) {
    out.lrt = lrt_boundary_pvalue(last.b.log_likelihood, last.a.log_likelihood);
  }

  std::ofstream rep(options.output);
  if (!rep) throw ValidationError("cannot open '" + options.output + "' for writing");
  rep << "Model comparison by Monte Carlo marginal log-likelihood\n";
  rep << "model a: " << options.model_a << " (" << to_string(pa.kernel) << ")\n";
  rep << "model b: " << options.model_b << " (" << to_string(pb.kernel) << ")\n";
  rep << "subjects: " << prepared.data.size() << "  groups: " << g << "  seed: " << options.seed << "\n\n";
  rep << pad("C", 10) << pad("loglik a", 14) << pad("MC SE a", 10) << pad("loglik b", 14) << "MC SE b\n";
  for (const CompareRow& r : out.rows) {
    rep << pad(std::to_string(r.draws), 10) << pad(fmt("%.3f", r.a.log_likelihood), 14)
        << pad(fmt("%.3f", r.a.mc_standard_error), 10) << pad(fmt("%.3f", r.b.log_likelihood), 14)
        << fmt("%.3f", r.b.mc_standard_error) << "\n";
  }
  rep << "\npreferred: model " << out.preferred << " ("
      << to_string(out.preferred == "a" ? pa.kernel : pb.kernel) << ")\n";
  if (out.lrt) {
    rep << "likelihood ratio statistic: " << fmt("%.3f", out.lrt->statistic)
        << "  p-value (0.5 chi2(0) + 0.5 chi2(1)): " << fmt("%.3f", out.lrt->p_value) << "\n";
    if (out.lrt->clamped) rep << "note: the larger model had the lower log-likelihood; statistic set to 0\n";
  } else {
    rep << "models are not nested; no likelihood ratio test\n";
  }
  write_config(rep, options.describe());
  return out;
}

// ---------------------------------------------------------------------------
// curves

KeyValues CurvesOptions::describe() const {
  KeyValues kv;
  add(kv, "model", model);
  add(kv, "output", output);
  add(kv, "points", points);
  add(kv, "max-time", max_time);
  add(kv, "max-distance", max_distance);
  return kv;
}

CurvesOutput cmd_curves(const CurvesOptions& options) {
  if (options.model.empty()) throw ValidationError("model: a fitted model file is required");
  if (options.points < 2) throw ValidationError("points: need at least 2");
  if (!(options.max_distance > 0.0)) throw ValidationError("max-distance: must be positive");
  if (!(options.max_time >= 0.0)) throw ValidationError("max-time: must be nonnegative");
  const ModelParams p = params_from_key_values(read_key_values(options.model), options.model);
  const PiecewiseBaseline& base = p.baseline;
  const double last_cut = base.cutpoints().back();
  const double t_max = options.max_time > 0.0 ? options.max_time : (last_cut > 0.0 ? 2.0 * last_cut : 1.0);

  // Uniform grid plus both one-sided limits at every interior cutpoint, so the trapezoid
  // rule integrates the step function exactly.
  std::vector<double> times;
  for (int k = 0; k < options.points; ++k) times.push_back(t_max * k / (options.points - 1));
  for (double c : base.cutpoints())
    if (c < t_max) times.push_back(c);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::pair<double, double>> grid;
  for (double t : times) {
    const std::size_t m = base.interval_of(t);
    if (m > 0 && base.cutpoints()[m] == t) grid.emplace_back(t, base.hazards()[m - 1]);
    grid.emplace_back(t, base.hazards()[m]);
  }

  CurvesOutput out;
  out.hazard_path = options.output + ".hazard.csv";
  out.correlation_path = options.output + ".correlation.csv";
  {
    std::ofstream h(out.hazard_path);
    if (!h) throw ValidationError("cannot open '" + out.hazard_path + "' for writing");
    h << "t,h0,H0\n";
    for (const auto& [t, v] : grid) h << format_double(t) << ',' << format_double(v) << ',' << format_double(base.cumulative(t)) << '\n';
  }
  {
    std::ofstream c(out.correlation_path);
    if (!c) throw ValidationError("cannot open '" + out.correlation_path + "' for writing");
    c << "d,correlation\n";
    for (int k = 0; k < options.points; ++k) {
      const double d = options.max_distance * k / (options.points - 1);
      c << format_double(d) << ',' << format_double(kernel_value(d, p.rho, p.kernel)) << '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// proportional hazards with grouped jackknife

KeyValues PhOptions::describe() const {
  KeyValues kv;
  input.describe(kv);
  add(kv, "cutpoints", cutpoints);
  add(kv, "intervals", intervals);
  add(kv, "jackknife", jackknife);
  add(kv, "output", output);
  return kv;
}

int cmd_ph(const PhOptions& options) {
  const PreparedData prepared = prepare_data(options.input, false);
  const std::vector<double> cutpoints = choose_cutpoints(prepared.data, options.cutpoints, options.intervals);
  const PhFit ph = fit_ph(prepared.data, cutpoints);
  const Eigen::VectorXd theta = ph.to_vector();
  const std::vector<std::string> labels = ph.labels();

  // Model-based SEs over the intervals with events.
  Eigen::VectorXd model_se = Eigen::VectorXd::Constant(theta.size(), std::nan(""));
  {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const bool flagged = std::find(ph.flagged_intervals.begin(), ph.flagged_intervals.end(),
                                     static_cast<std::size_t>(j)) != ph.flagged_intervals.end();
      if (!flagged) keep.push_back(j);
    }
    Eigen::MatrixXd info(keep.size(), keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a)
      for (std::size_t b = 0; b < keep.size(); ++b) info(a, b) = ph.information(keep[a], keep[b]);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    if (lu.isInvertible()) {
      const Eigen::MatrixXd cov = lu.inverse();
      for (std::size_t a = 0; a < keep.size(); ++a) model_se(keep[a]) = std::sqrt(std::max(cov(a, a), 0.0));
    }
  }
  std::optional<JackknifeResult> jk;
  if (options.jackknife) {
    jk = grouped_jackknife(prepared.data, cutpoints, prepared.data.group);
  }

  const std::string report = options.output + ".report.txt";
  std::ofstream out(report);
  if (!out) throw ValidationError("cannot open '" + report + "' for writing");
  out << "Piecewise-constant proportional hazards fit (no frailty)\n";
  out << "subjects: " << prepared.data.size() << "  clusters: " << prepared.data.num_groups << "\n";
  out << "log-likelihood: " << fmt("%.3f", ph.log_likelihood) << "  rounds: " << ph.rounds << "\n";
  for (std::size_t m : ph.flagged_intervals) out << "warning: interval " << m + 1 << " has no events\n";
  out << "\n" << pad("Parameter", 12) << pad("Estimate", 12) << pad("SE", 12) << "Jackknife SE\n";
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto uj = static_cast<Eigen::Index>(j);
    out << pad(labels[j], 12) << pad(fmt("%.4f", theta(uj)), 12) << pad(fmt("%.4f", model_se(uj)), 12)
        << (jk ? fmt("%.4f", jk->standard_errors(uj)) : std::string("NA")) << "\n";
  }
  write_config(out, options.describe());

  std::ofstream csv(options.output + ".estimates.csv");
  csv << "parameter,estimate,se,jackknife_se\n";
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto uj = static_cast<Eigen::Index>(j);
    csv << labels[j] << ',' << format_double(theta(uj)) << ',' << format_double(model_se(uj)) << ','
        << (jk ? format_double(jk->standard_errors(uj)) : std::string()) << '\n';
  }
  return kExitSuccess;
}

}  // namespace sfm
