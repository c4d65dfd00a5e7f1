#include "sfm/simulate.hpp"

#include "sfm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace sfm {

namespace {

// Degrees of latitude per km on the sphere used by the haversine formula.
constexpr double kDegreesPerKm = 180.0 / (std::numbers::pi * kEarthRadiusKm);

double draw_open_uniform(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 0.0;
  while (u <= 0.0) u = unif(rng);
  return u;
}

double pilot_censoring(const std::vector<double>& t, const std::vector<double>& e, double rate) {
  long censored = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (e[i] < rate * t[i]) ++censored;
  return static_cast<double>(censored) / static_cast<double>(t.size());
}

}  // namespace

std::string to_string(ScenarioModel model) {
  switch (model) {
    case ScenarioModel::M1: return "M1";
    case ScenarioModel::M2: return "M2";
    case ScenarioModel::M3: return "M3";
    case ScenarioModel::M4: return "M4";
  }
  return "M1";
}

ScenarioModel parse_scenario(std::string_view name) {
  if (name == "M1" || name == "m1") return ScenarioModel::M1;
  if (name == "M2" || name == "m2") return ScenarioModel::M2;
  if (name == "M3" || name == "m3") return ScenarioModel::M3;
  if (name == "M4" || name == "m4") return ScenarioModel::M4;
  throw ValidationError("model: unknown scenario '" + std::string(name) + "' (expected M1, M2, M3 or M4)");
}

ModelParams default_truth(ScenarioModel model) {
  ModelParams p;
  p.baseline = PiecewiseBaseline({0.0, 0.2, 0.8}, {2.0, 0.5, 1.0});
  p.beta = Eigen::Vector2d(2.0, 3.0);
  p.sigma2 = 1.5;
  p.rho = 1.0;
  switch (model) {
    case ScenarioModel::M1: p.kernel = KernelKind::Exp; break;
    case ScenarioModel::M2: p.kernel = KernelKind::Pol; break;
    case ScenarioModel::M3:
    case ScenarioModel::M4: p.kernel = KernelKind::Identity; break;
  }
  return p;
}

FrailtyState draw_frailties(double sigma2, const CorrelationFactor& corr, Rng& rng) {
  if (!(sigma2 >= 0.0)) throw ValidationError("frailty variance must be nonnegative");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd eps(corr.size());
  for (Eigen::Index g = 0; g < eps.size(); ++g) eps(g) = normal(rng);
  if (sigma2 == 0.0) return FrailtyState::Zero(corr.size());
  FrailtyState b = corr.lower().triangularView<Eigen::Lower>() * eps;
  return std::sqrt(sigma2) * b;
}

double event_time_from_uniform(const PiecewiseBaseline& baseline, double eta, double u) {
  if (!std::isfinite(eta)) throw ValidationError("linear predictor must be finite");
  return baseline.inverse_cumulative(-std::log(u) * std::exp(-eta));
}

double draw_event_time(const PiecewiseBaseline& baseline, double eta, Rng& rng) {
  return event_time_from_uniform(baseline, eta, draw_open_uniform(rng));
}

CensoringCalibration calibrate_censoring(double target, const EventModel& model, Rng& rng, long pilot,
                                         double accuracy, int max_steps) {
  if (!(target >= 0.0 && target < 1.0)) throw ValidationError("censoring: target must lie in [0, 1)");
  CensoringCalibration out;
  if (target == 0.0) return out;

  std::bernoulli_distribution coin(model.covariate_probability);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> unit_exp(1.0);
  const double sd = std::sqrt(std::max(model.sigma2, 0.0));
  std::vector<double> t(static_cast<std::size_t>(pilot));
  std::vector<double> e(static_cast<std::size_t>(pilot));
  for (long i = 0; i < pilot; ++i) {
    double eta = sd * normal(rng);
    for (Eigen::Index j = 0; j < model.beta.size(); ++j)
      if (coin(rng)) eta += model.beta(j);
    t[static_cast<std::size_t>(i)] = draw_event_time(model.baseline, eta, rng);
    e[static_cast<std::size_t>(i)] = unit_exp(rng);
  }

  double lo = 0.0;
  double hi = 1.0;
  while (pilot_censoring(t, e, hi) < target) {
    if (++out.steps > max_steps) throw ConvergenceError("censoring target unreachable");
    lo = hi;
    hi *= 2.0;
  }
  while (true) {
    const double mid = 0.5 * (lo + hi);
    const double f = pilot_censoring(t, e, mid);
    if (std::abs(f - target) <= accuracy) {
      out.rate = mid;
      out.achieved = f;
      return out;
    }
    if (++out.steps > max_steps) throw ConvergenceError("censoring target unreachable in bisection");
    (f < target ? lo : hi) = mid;
  }
}

std::vector<GeoPoint> synthetic_locations(long count, double side_km, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, side_km);
  std::vector<GeoPoint> out(static_cast<std::size_t>(count));
  for (GeoPoint& p : out) {
    const double x = unif(rng);
    const double y = unif(rng);
    p.lon = x * kDegreesPerKm;
    p.lat = y * kDegreesPerKm;
  }
  return out;
}

Scenario generate_scenario(const ScenarioOptions& options, Rng& rng) {
  if (options.subjects < 1) throw ValidationError("subjects: must be positive");
  if (options.groups < 0 || options.groups > options.subjects) {
    throw ValidationError("groups: must lie in [1, subjects] (0 for one group per subject)");
  }
  if (!(options.censoring >= 0.0 && options.censoring < 1.0)) {
    throw ValidationError("censoring: target must lie in [0, 1)");
  }
  Scenario out;
  out.truth = options.truth.value_or(default_truth(options.model));
  const bool spatial = options.model == ScenarioModel::M1 || options.model == ScenarioModel::M2;
  const bool frailty = options.model != ScenarioModel::M3;
  if (spatial) {
    out.truth.kernel = options.model == ScenarioModel::M1 ? KernelKind::Exp : KernelKind::Pol;
  } else {
    out.truth.kernel = KernelKind::Identity;
  }
  if (frailty) out.truth.validate();
  else out.truth.sigma2 = 0.0;

  const long n = options.subjects;
  const long g = options.groups == 0 ? n : options.groups;
  const auto p = out.truth.beta.size();

  // Group structure and frailties.
  if (spatial) {
    if (options.external) {
      const DistanceMatrix& ext = *options.external;
      if (ext.size() < g) throw ValidationError("distance matrix has fewer rows than requested groups");
      std::vector<int> rows(static_cast<std::size_t>(ext.size()));
      std::iota(rows.begin(), rows.end(), 0);
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(static_cast<std::size_t>(g));
      std::sort(rows.begin(), rows.end());
      out.external_rows = rows;
      out.distances = ext.subset(rows);
    } else {
      out.locations = synthetic_locations(g, options.square_km, rng);
      out.distances = build_distance_matrix(out.locations, DistanceMetric::Haversine);
    }
    const CorrelationFactor corr = correlation_matrix(out.distances, out.truth.rho, out.truth.kernel);
    out.frailty = draw_frailties(out.truth.sigma2, corr, rng);
  } else if (frailty) {
    out.locations = synthetic_locations(g, options.square_km, rng);
    out.frailty = draw_frailties(out.truth.sigma2, identity_correlation(g), rng);
  } else {
    out.locations = synthetic_locations(g, options.square_km, rng);
    out.frailty = FrailtyState::Zero(g);
  }

  std::vector<int> group(static_cast<std::size_t>(n));
  std::iota(group.begin(), group.begin() + g, 0);
  if (g < n) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(g) - 1);
    for (long i = g; i < n; ++i) group[static_cast<std::size_t>(i)] = pick(rng);
    std::shuffle(group.begin(), group.end(), rng);
  }

  // Censoring gets its own streams so that covariates, frailties and event times do not
  // depend on the censoring target.
  Rng pilot_rng(rng());
  Rng censor_rng(rng());
  EventModel em{out.truth.baseline, out.truth.beta, frailty ? out.truth.sigma2 : 0.0, 0.5};
  out.censoring_rate = calibrate_censoring(options.censoring, em, pilot_rng).rate;

  std::bernoulli_distribution coin(0.5);
  std::exponential_distribution<double> cens(out.censoring_rate > 0.0 ? out.censoring_rate : 1.0);
  Eigen::MatrixXd z(n, p);
  Eigen::VectorXd x(n);
  std::vector<int> status(static_cast<std::size_t>(n));
  out.event_time.resize(n);
  out.censor_time.resize(n);
  for (long i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = coin(rng) ? 1.0 : 0.0;
    const double eta = z.row(i).dot(out.truth.beta) + out.frailty(group[static_cast<std::size_t>(i)]);
    const double t = draw_event_time(out.truth.baseline, eta, rng);
    const double c = out.censoring_rate > 0.0 ? cens(censor_rng) : std::numeric_limits<double>::infinity();
    out.event_time(i) = t;
    out.censor_time(i) = c;
    x(i) = std::min(t, c);
    status[static_cast<std::size_t>(i)] = t <= c ? 1 : 0;
  }
  out.data = make_dataset(std::move(x), std::move(status), std::move(z), std::move(group));
  return out;
}

Rng substream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace sfm
