#include "sfm/saem.hpp"

#include "sfm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sfm {

SufficientStats SufficientStats::of(const FrailtyState& b) {
  return {b * b.transpose(), b.array().exp().matrix()};
}

double SufficientStats::sup_norm() const {
  const double a = bb.size() ? bb.cwiseAbs().maxCoeff() : 0.0;
  const double e = expb.size() ? expb.cwiseAbs().maxCoeff() : 0.0;
  return std::max(a, e);
}

double step_size(long k, long burn_in) {
  if (k < 1) throw ValidationError("SAEM iterations are numbered from 1");
  if (k <= burn_in) return 1.0;
  return 1.0 / static_cast<double>(k - burn_in);
}

SufficientStats sa_update(const SufficientStats& s, const FrailtyState& b, double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ValidationError("SA step size must lie in (0, 1]");
  if (mu == 1.0) return SufficientStats::of(b);
  SufficientStats out;
  out.bb = s.bb + mu * (b * b.transpose() - s.bb);
  out.expb = s.expb + mu * (b.array().exp().matrix() - s.expb);
  return out;
}

SufficientStats sa_update(const SufficientStats& s, const SufficientStats& draw, double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ValidationError("SA step size must lie in (0, 1]");
  if (mu == 1.0) return draw;
  SufficientStats out;
  out.bb = s.bb + mu * (draw.bb - s.bb);
  out.expb = s.expb + mu * (draw.expb - s.expb);
  return out;
}

double TruncationSchedule::radius(int kappa) const {
  return initial_radius * std::pow(growth, kappa);
}

double TruncationSchedule::epsilon(long k, long burn_in) const {
  if (k <= burn_in) return std::numeric_limits<double>::infinity();
  return epsilon_scale / std::sqrt(static_cast<double>(k - burn_in));
}

TruncationOutcome truncation_check(const SufficientStats& candidate, const SufficientStats& previous,
                                   int kappa, const TruncationSchedule& schedule, double epsilon_k) {
  const double jump = std::max((candidate.bb - previous.bb).cwiseAbs().maxCoeff(),
                               (candidate.expb - previous.expb).cwiseAbs().maxCoeff());
  if (candidate.sup_norm() > schedule.radius(kappa) || jump > epsilon_k) {
    return {TruncationDecision::Restart, kappa + 1};
  }
  return {TruncationDecision::Accept, kappa};
}

void SaemConfig::validate() const {
  if (burn_in < 0) throw ValidationError("burn-in K0 must be nonnegative");
  if (warmup_sweeps < 0) throw ValidationError("warm-up sweeps must be nonnegative");
  if (draws_per_iteration < 1) throw ValidationError("draws per iteration must be positive");
  if (burn_in >= max_iterations) throw ValidationError("burn-in K0 must be below max iterations");
  if (!(tolerance > 0.0)) throw ValidationError("stopping threshold must be positive");
  if (consecutive_hits < 1) throw ValidationError("consecutive-hit requirement must be positive");
  if (mstep.rho_max_iterations < 0) throw ValidationError("rho inner iterations must be >= 0");
  if (!(mstep.rho_min > 0.0 && mstep.rho_max > mstep.rho_min)) {
    throw ValidationError("rho bounds must satisfy 0 < rho_min < rho_max");
  }
  if (mstep.fixed_sigma2 && !(*mstep.fixed_sigma2 > 0.0)) {
    throw ValidationError("fixed sigma2 must be positive");
  }
}

namespace {

struct SubjectCache {
  Eigen::VectorXd cumulative;  // H0(X_i)
  Eigen::VectorXd weight;      // frailty multiplier of subject i
};

SubjectCache subject_cache(const Dataset& data, const PiecewiseBaseline& baseline,
                           const Eigen::VectorXd& frailty_weight) {
  SubjectCache c;
  c.cumulative.resize(data.size());
  c.weight.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    c.cumulative(i) = baseline.cumulative(data.time(i));
    c.weight(i) = frailty_weight(data.group[static_cast<std::size_t>(i)]);
  }
  return c;
}

Eigen::VectorXd event_vector(const Dataset& data) {
  Eigen::VectorXd d(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) d(i) = data.status[static_cast<std::size_t>(i)];
  return d;
}

double regression_objective(const Dataset& data, const Eigen::VectorXd& events,
                            const SubjectCache& c, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd lp = data.covariates * beta;
  return events.dot(lp) - (c.cumulative.array() * c.weight.array() * lp.array().exp()).sum();
}

void add_warning(std::vector<std::string>* warnings, std::string message) {
  if (!warnings) return;
  if (std::find(warnings->begin(), warnings->end(), message) == warnings->end()) {
    warnings->push_back(std::move(message));
  }
}

double rho_objective(const CorrelationFactor& corr, const Eigen::MatrixXd& bb, double sigma2) {
  return -0.5 * corr.log_det() - (corr.inverse().array() * bb.array()).sum() / (2.0 * sigma2);
}

}  // namespace

RegressionUpdate update_regression(const Dataset& data, const PiecewiseBaseline& baseline,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& frailty_weight,
                                   const MStepOptions& options) {
  RegressionUpdate out{beta, 0};
  const Eigen::Index p = data.num_covariates();
  if (p == 0) return out;
  const SubjectCache c = subject_cache(data, baseline, frailty_weight);
  const Eigen::VectorXd events = event_vector(data);
  double current = regression_objective(data, events, c, out.beta);

  for (int it = 0; it < options.beta_max_iterations; ++it) {
    const Eigen::VectorXd lp = data.covariates * out.beta;
    const Eigen::VectorXd mass = (c.cumulative.array() * c.weight.array() * lp.array().exp()).matrix();
    const Eigen::VectorXd grad = data.covariates.transpose() * (events - mass);
    const Eigen::MatrixXd info = data.covariates.transpose() * mass.asDiagonal() * data.covariates;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError("regression information matrix is not positive definite");
    }
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) throw NumericalError("Newton step for beta is not finite");

    bool improved = false;
    for (int h = 0; h <= options.beta_max_halvings; ++h) {
      const Eigen::VectorXd candidate = out.beta + step;
      const double value = regression_objective(data, events, c, candidate);
      if (std::isfinite(value) && value >= current) {
        out.beta = candidate;
        current = value;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    out.iterations = it + 1;
    if (!improved) {
      if (step.norm() < 1e-8 * (1.0 + out.beta.norm())) break;
      throw ConvergenceError("Newton-Raphson for beta diverged after step halving");
    }
    if (step.norm() < options.beta_tolerance * (1.0 + out.beta.norm())) break;
  }
  return out;
}

std::vector<double> update_hazards(const Dataset& data, const PiecewiseBaseline& previous,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& frailty_weight,
                                   std::vector<std::string>* warnings) {
  const std::size_t m_count = previous.num_intervals();
  std::vector<double> numer(m_count, 0.0);
  std::vector<double> denom(m_count, 0.0);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double x = data.time(i);
    const double w =
        std::exp(data.covariates.row(i).dot(beta)) * frailty_weight(data.group[static_cast<std::size_t>(i)]);
    if (data.status[static_cast<std::size_t>(i)] == 1) numer[previous.interval_of(x)] += 1.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      const double e = previous.exposure(x, m);
      if (e == 0.0) break;
      denom[m] += w * e;
    }
  }
  std::vector<double> h = previous.hazards();
  for (std::size_t m = 0; m < m_count; ++m) {
    if (denom[m] <= 0.0) {
      add_warning(warnings, "interval " + std::to_string(m + 1) +
                                " has no subject at risk; keeping the previous hazard");
    } else if (numer[m] == 0.0) {
      add_warning(warnings, "interval " + std::to_string(m + 1) +
                                " has no events; keeping the previous hazard");
    } else {
      h[m] = numer[m] / denom[m];
    }
  }
  return h;
}

double saem_objective(const ModelParams& params, const SufficientStats& s, const Dataset& data,
                      const CorrelationFactor& corr) {
  double value = 0.0;
  const auto& base = params.baseline;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double x = data.time(i);
    const double lp = data.covariates.row(i).dot(params.beta);
    if (data.status[static_cast<std::size_t>(i)] == 1) value += std::log(base.hazard(x)) + lp;
    value -= base.cumulative(x) * std::exp(lp) * s.expb(data.group[static_cast<std::size_t>(i)]);
  }
  const double g = static_cast<double>(data.num_groups);
  value += -0.5 * g * std::log(params.sigma2) - 0.5 * corr.log_det() -
           (corr.inverse().array() * s.bb.array()).sum() / (2.0 * params.sigma2);
  return value;
}

MStepResult m_step(const SufficientStats& s, const Dataset& data, const ModelParams& previous,
                   const CorrelationFactor& previous_corr, const MStepOptions& options) {
  if (!(s.expb.array() > 0.0).all()) {
    throw NumericalError("smoothed exp(b) statistics must be positive");
  }
  MStepResult out{previous, previous_corr, {}};
  ModelParams& p = out.params;

  p.beta = update_regression(data, previous.baseline, previous.beta, s.expb, options).beta;
  p.baseline = previous.baseline.with_hazards(
      update_hazards(data, previous.baseline, p.beta, s.expb, &out.warnings));

  const double g = static_cast<double>(data.num_groups);
  if (options.fixed_sigma2) {
    p.sigma2 = *options.fixed_sigma2;
  } else {
    p.sigma2 = (previous_corr.inverse().array() * s.bb.array()).sum() / g;
    if (!(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) {
      throw NumericalError("sigma2 update is not positive");
    }
  }

  if (!p.has_rho() || !options.update_rho || options.rho_max_iterations == 0) return out;

  const DistanceMatrix& dist = previous_corr.distances();
  const double lam_lo = std::log(options.rho_min);
  const double lam_hi = std::log(options.rho_max);
  CorrelationFactor current = previous_corr;
  double current_value = rho_objective(current, s.bb, p.sigma2);

  for (int it = 0; it < options.rho_max_iterations; ++it) {
    const CovarianceDerivativeTerms terms = covariance_derivative_terms(current);
    const double rho = current.rho();
    const double d1 = -0.5 * terms.trace_first +
                      (terms.quad_first.array() * s.bb.array()).sum() / (2.0 * p.sigma2);
    const double d2 = -0.5 * terms.trace_second +
                      (terms.quad_second.array() * s.bb.array()).sum() / (2.0 * p.sigma2);
    // Derivatives in lambda = log rho.
    const double grad = rho * d1;
    const double curv = rho * rho * d2 + rho * d1;
    double step = curv < 0.0 ? grad / (-curv) : std::copysign(0.5, grad);
    step = std::clamp(options.rho_step * step, -2.0, 2.0);

    const double lam = std::log(rho);
    double lam_new = std::clamp(lam + step, lam_lo, lam_hi);
    if (lam_new == lam) break;

    bool accepted = false;
    for (int h = 0; h < 30; ++h) {
      // A pol kernel with a large exponent can stop being positive definite; such a
      // candidate counts as a failed step.
      std::optional<CorrelationFactor> cand;
      try {
        cand = correlation_matrix(dist, std::exp(lam_new), p.kernel);
      } catch (const NumericalError&) {
        lam_new = lam + 0.5 * (lam_new - lam);
        continue;
      }
      const double value = rho_objective(*cand, s.bb, p.sigma2);
      if (std::isfinite(value) && value >= current_value) {
        current = std::move(*cand);
        current_value = value;
        accepted = true;
        break;
      }
      lam_new = lam + 0.5 * (lam_new - lam);
    }
    if (!accepted) break;
    if (std::abs(lam_new - lam) < options.rho_tolerance) break;
  }
  p.rho = current.rho();
  out.corr = std::move(current);
  return out;
}

CorrelationFactor factor_for(const ModelParams& params, const DistanceMatrix& distances,
                             Eigen::Index num_groups) {
  if (!params.has_rho()) return identity_correlation(num_groups);
  if (distances.size() != num_groups) {
    throw ValidationError("distance matrix has " + std::to_string(distances.size()) +
                          " locations but the data have " + std::to_string(num_groups) + " groups");
  }
  return correlation_matrix(distances, params.rho, params.kernel);
}

FitResult fit(const Dataset& data, const DistanceMatrix& distances, KernelKind kernel,
              const SaemConfig& config, const ModelParams& init, Rng& rng) {
  config.validate();
  data.validate();
  ModelParams params = init;
  params.kernel = kernel;
  params.validate();
  if (config.mstep.fixed_sigma2) params.sigma2 = *config.mstep.fixed_sigma2;
  const Eigen::Index g = data.num_groups;

  CorrelationFactor corr = factor_for(params, distances, g);
  SamplerState state = make_sampler_state(g, config.sampler);
  if (config.warmup_sweeps > 0) {
    const PosteriorTarget target(params, data, corr);
    for (long w = 0; w < config.warmup_sweeps; ++w) {
      sweep(state, target, config.sampler, rng);
      if (state.sweeps % config.sampler.adapt_window == 0) adapt(state, config.sampler);
    }
  }

  SufficientStats initial_stats{params.sigma2 * corr.matrix(),
                                Eigen::VectorXd::Constant(g, std::exp(0.5 * params.sigma2))};
  SufficientStats stats = initial_stats;
  int kappa = 0;

  FitResult result;
  result.labels = params.labels();
  Eigen::VectorXd prev_theta = params.to_vector();
  int hits = 0;

  for (long k = 1; k <= config.max_iterations; ++k) {
    try {
      const PosteriorTarget target(params, data, corr);
      auto advance = [&] {
        for (int sw = 0; sw < config.sampler.sweeps_per_iteration; ++sw) {
          sweep(state, target, config.sampler, rng);
          if (k <= config.burn_in && state.sweeps % config.sampler.adapt_window == 0) {
            adapt(state, config.sampler);
          }
        }
      };
      const double mu = step_size(k, config.burn_in);
      SufficientStats candidate;
      if (config.draws_per_iteration == 1) {
        advance();
        candidate = sa_update(stats, state.b, mu);
      } else {
        SufficientStats mean{Eigen::MatrixXd::Zero(g, g), Eigen::VectorXd::Zero(g)};
        for (long d = 0; d < config.draws_per_iteration; ++d) {
          advance();
          mean.bb.noalias() += state.b * state.b.transpose();
          mean.expb += state.b.array().exp().matrix();
        }
        const double inv = 1.0 / static_cast<double>(config.draws_per_iteration);
        mean.bb *= inv;
        mean.expb *= inv;
        candidate = sa_update(stats, mean, mu);
      }
      if (config.truncation) {
        const TruncationOutcome t =
            truncation_check(candidate, stats, kappa, config.truncation_schedule,
                             config.truncation_schedule.epsilon(k, config.burn_in));
        if (t.decision == TruncationDecision::Restart) {
          kappa = t.kappa;
          ++result.restarts;
          candidate = initial_stats;
          state.b.setZero();
        }
      }
      stats = std::move(candidate);

      MStepResult m = m_step(stats, data, params, corr, config.mstep);
      params = std::move(m.params);
      corr = std::move(m.corr);
      for (auto& w : m.warnings) {
        if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end()) {
          result.warnings.push_back(std::move(w));
        }
      }
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "SAEM iteration " << k << ": " << e.what();
      if (dynamic_cast<const ValidationError*>(&e)) throw ValidationError(msg.str());
      if (dynamic_cast<const ConvergenceError*>(&e)) throw ConvergenceError(msg.str());
      throw NumericalError(msg.str());
    }

    const Eigen::VectorXd theta = params.to_vector();
    if (!theta.allFinite()) {
      throw NumericalError("SAEM iteration " + std::to_string(k) + ": parameters are not finite");
    }
    result.trace.push_back(theta);
    result.trace_acceptance.push_back(state.acceptance_rate());
    result.iterations = k;

    const double denom = prev_theta.norm();
    const double rel = (theta - prev_theta).norm() / (denom > 0.0 ? denom : 1.0);
    // The stopping rule only counts once the step sizes decrease.
    hits = k > config.burn_in && rel < config.tolerance ? hits + 1 : 0;
    prev_theta = theta;
    if (hits >= config.consecutive_hits) {
      result.converged = true;
      break;
    }
  }

  result.params = params;
  result.stats = std::move(stats);
  result.block_acceptance.resize(state.num_blocks());
  for (Eigen::Index j = 0; j < state.num_blocks(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    result.block_acceptance(j) =
        state.total_proposed[uj] ? static_cast<double>(state.total_accepted[uj]) /
                                       static_cast<double>(state.total_proposed[uj])
                                 : 0.0;
  }
  result.acceptance = state.acceptance_rate();
  result.sampler = std::move(state);
  return result;
}

std::vector<FrailtyState> posterior_draws(const Dataset& data, const ModelParams& params,
                                          const CorrelationFactor& corr, SamplerState state,
                                          const BlockGibbsConfig& config, long burn_in, long draws,
                                          Rng& rng) {
  const PosteriorTarget target(params, data, corr);
  for (long k = 0; k < burn_in; ++k) sweep(state, target, config, rng);
  std::vector<FrailtyState> out;
  out.reserve(static_cast<std::size_t>(std::max(draws, 0L)));
  for (long k = 0; k < draws; ++k) {
    sweep(state, target, config, rng);
    out.push_back(state.b);
  }
  return out;
}

}  // namespace sfm
