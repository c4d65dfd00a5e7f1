#include "sfm/baselines.hpp"

#include "sfm/error.hpp"

#include <cmath>
#include <map>

namespace sfm {

namespace {

constexpr double kHazardFloor = 1e-12;

double ph_log_likelihood(const Dataset& data, const PiecewiseBaseline& base,
                         const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double x = data.time(i);
    const double lp = data.covariates.row(i).dot(beta);
    if (data.status[static_cast<std::size_t>(i)] == 1) ll += std::log(base.hazard(x)) + lp;
    ll -= base.cumulative(x) * std::exp(lp);
  }
  return ll;
}

}  // namespace

std::vector<std::string> PhFit::labels() const {
  std::vector<std::string> out;
  for (std::size_t m = 0; m < hazards.size(); ++m) out.push_back("h" + std::to_string(m + 1));
  for (Eigen::Index j = 0; j < beta.size(); ++j) out.push_back("beta" + std::to_string(j + 1));
  return out;
}

Eigen::VectorXd PhFit::to_vector() const {
  const auto m = static_cast<Eigen::Index>(hazards.size());
  Eigen::VectorXd v(m + beta.size());
  for (Eigen::Index k = 0; k < m; ++k) v(k) = hazards[static_cast<std::size_t>(k)];
  v.tail(beta.size()) = beta;
  return v;
}

PiecewiseBaseline PhFit::baseline() const {
  std::vector<double> h = hazards;
  double smallest = 0.0;
  for (double v : h)
    if (v > 0.0 && (smallest == 0.0 || v < smallest)) smallest = v;
  for (double& v : h)
    if (v <= 0.0) v = smallest > 0.0 ? 1e-3 * smallest : 1e-6;
  return PiecewiseBaseline(cutpoints, std::move(h));
}

PhFit fit_ph(const Dataset& data, std::vector<double> cutpoints, double tolerance, int max_rounds) {
  data.validate();
  const std::size_t m_count = cutpoints.size();
  PhFit out;
  out.cutpoints = cutpoints;

  // Subjects with an event in each interval.
  std::vector<double> events(m_count, 0.0);
  double total_time = 0.0;
  double total_events = 0.0;
  {
    const PiecewiseBaseline probe(cutpoints, std::vector<double>(m_count, 1.0));
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      total_time += data.time(i);
      if (data.status[static_cast<std::size_t>(i)] == 1) {
        events[probe.interval_of(data.time(i))] += 1.0;
        total_events += 1.0;
      }
    }
  }
  const double crude = total_events > 0.0 && total_time > 0.0 ? total_events / total_time : 1.0;
  std::vector<double> h0(m_count, crude);
  for (std::size_t m = 0; m < m_count; ++m) {
    if (events[m] == 0.0) {
      out.flagged_intervals.push_back(m);
      h0[m] = kHazardFloor;
    }
  }

  PiecewiseBaseline base(cutpoints, h0);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.num_covariates());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.num_groups);
  MStepOptions newton;
  newton.beta_max_iterations = 50;
  newton.beta_tolerance = 1e-12;

  auto pack = [&](const PiecewiseBaseline& b, const Eigen::VectorXd& bt) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(m_count) + bt.size());
    for (std::size_t m = 0; m < m_count; ++m) v(static_cast<Eigen::Index>(m)) = b.hazards()[m];
    v.tail(bt.size()) = bt;
    return v;
  };

  Eigen::VectorXd prev = pack(base, beta);
  bool converged = false;
  for (int round = 1; round <= max_rounds; ++round) {
    beta = update_regression(data, base, beta, ones, newton).beta;
    base = base.with_hazards(update_hazards(data, base, beta, ones, nullptr));
    const Eigen::VectorXd cur = pack(base, beta);
    const double rel = (cur - prev).norm() / std::max(prev.norm(), 1e-300);
    prev = cur;
    out.rounds = round;
    if (rel < tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("proportional hazards fit did not converge in " +
                           std::to_string(max_rounds) + " rounds");
  }

  out.hazards = base.hazards();
  for (std::size_t m : out.flagged_intervals) out.hazards[m] = 0.0;
  out.beta = beta;
  out.log_likelihood = ph_log_likelihood(data, base, beta);

  // Observed information from the complete-data Hessian at b = 0 restricted to (h, beta).
  ModelParams p;
  p.baseline = base;
  p.beta = beta;
  p.sigma2 = 1.0;
  p.kernel = KernelKind::Identity;
  const CompleteDataDerivatives deriv(p, data, identity_correlation(data.num_groups));
  const auto k = static_cast<Eigen::Index>(m_count) + beta.size();
  out.information = -deriv.evaluate(FrailtyState::Zero(data.num_groups)).hessian.topLeftCorner(k, k);
  return out;
}

ModelParams initial_params(const Dataset& data, const std::vector<double>& cutpoints,
                           KernelKind kernel, double sigma2, double rho) {
  const PhFit ph = fit_ph(data, cutpoints);
  ModelParams p;
  p.baseline = ph.baseline();
  p.beta = ph.beta;
  p.sigma2 = sigma2;
  p.rho = rho;
  p.kernel = kernel;
  return p;
}

FitResult fit_univariate_frailty(const Dataset& data, const std::vector<double>& cutpoints,
                                 const SaemConfig& config, Rng& rng) {
  const ModelParams init = initial_params(data, cutpoints, KernelKind::Identity);
  SaemConfig cfg = config;
  cfg.mstep.update_rho = false;
  return fit(data, DistanceMatrix{}, KernelKind::Identity, cfg, init, rng);
}

Eigen::MatrixXd jackknife_covariance(const std::vector<Eigen::VectorXd>& leave_one_out,
                                     Eigen::VectorXd* mean) {
  const auto n = static_cast<double>(leave_one_out.size());
  if (leave_one_out.size() < 2) throw ValidationError("grouped jackknife needs at least two clusters");
  Eigen::VectorXd bar = Eigen::VectorXd::Zero(leave_one_out.front().size());
  for (const auto& t : leave_one_out) bar += t;
  bar /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(bar.size(), bar.size());
  for (const auto& t : leave_one_out) cov += (t - bar) * (t - bar).transpose();
  cov *= (n - 1.0) / n;
  if (mean) *mean = bar;
  return cov;
}

JackknifeResult grouped_jackknife(const Dataset& data, const std::vector<double>& cutpoints,
                                  std::span<const int> clusters) {
  if (static_cast<Eigen::Index>(clusters.size()) != data.size()) {
    throw ValidationError("cluster labels must cover every subject");
  }
  std::map<int, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < data.size(); ++i) members[clusters[static_cast<std::size_t>(i)]].push_back(i);
  if (members.size() < 2) throw ValidationError("grouped jackknife needs at least two clusters");

  const PhFit full = fit_ph(data, cutpoints);
  JackknifeResult out;
  out.labels = full.labels();
  out.estimate = full.to_vector();
  out.clusters = static_cast<int>(members.size());

  for (const auto& [label, rows] : members) {
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(data.size()));
    for (Eigen::Index i = 0; i < data.size(); ++i)
      if (clusters[static_cast<std::size_t>(i)] != label) keep.push_back(i);
    try {
      out.leave_one_out.push_back(fit_ph(data.subset(keep), cutpoints).to_vector());
    } catch (const Error& e) {
      throw ConvergenceError("jackknife refit without cluster " + std::to_string(label) +
                             " failed: " + e.what());
    }
  }
  out.covariance = jackknife_covariance(out.leave_one_out, &out.mean);
  out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace sfm
