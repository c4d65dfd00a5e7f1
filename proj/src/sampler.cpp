#include "sfm/sampler.hpp"

#include "sfm/error.hpp"

#include <cmath>

namespace sfm {

void BlockGibbsConfig::validate(Eigen::Index num_groups) const {
  if (block_size < 1 || block_size > std::max<Eigen::Index>(num_groups, 1)) {
    throw ValidationError("block size must lie in [1, G]");
  }
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
    throw ValidationError("target acceptance must lie in (0, 1)");
  }
  if (!(initial_scale > 0.0)) throw ValidationError("initial proposal scale must be positive");
  if (!(adaptation_rate > 0.0)) throw ValidationError("adaptation rate must be positive");
  if (sweeps_per_iteration < 1) throw ValidationError("sweeps per iteration must be positive");
  if (adapt_window < 1) throw ValidationError("adaptation window must be positive");
}

double SamplerState::acceptance_rate() const {
  long acc = 0;
  long prop = 0;
  for (std::size_t j = 0; j < total_accepted.size(); ++j) {
    acc += total_accepted[j];
    prop += total_proposed[j];
  }
  return prop == 0 ? 0.0 : static_cast<double>(acc) / static_cast<double>(prop);
}

SamplerState make_sampler_state(FrailtyState initial, const BlockGibbsConfig& config) {
  config.validate(initial.size());
  const Eigen::Index g = initial.size();
  const Eigen::Index blocks = (g + config.block_size - 1) / config.block_size;
  SamplerState s;
  s.b = std::move(initial);
  s.log_scale = Eigen::VectorXd::Constant(blocks, std::log(config.initial_scale));
  const auto nb = static_cast<std::size_t>(blocks);
  s.accepted.assign(nb, 0);
  s.proposed.assign(nb, 0);
  s.total_accepted.assign(nb, 0);
  s.total_proposed.assign(nb, 0);
  return s;
}

SamplerState make_sampler_state(Eigen::Index num_groups, const BlockGibbsConfig& config) {
  return make_sampler_state(FrailtyState::Zero(num_groups), config);
}

PosteriorTarget::PosteriorTarget(const ModelParams& params, const Dataset& data,
                                 const CorrelationFactor& corr) {
  if (corr.size() != data.num_groups) {
    throw ValidationError("correlation matrix and data groups disagree in size");
  }
  const GroupedDataTerms terms(params, data);
  events_ = terms.events();
  risk_ = terms.risk();
  precision_ = corr.inverse() / params.sigma2;
}

double PosteriorTarget::log_density(const FrailtyState& b) const {
  return events_.dot(b) - risk_.dot(b.array().exp().matrix()) - 0.5 * b.dot(precision_ * b);
}

bool metropolis_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  return std::log(u) < log_ratio;
}

void sweep(SamplerState& state, const PosteriorTarget& target, const BlockGibbsConfig& config,
           Rng& rng) {
  const Eigen::Index g = target.size();
  if (state.b.size() != g) throw ValidationError("sampler state does not match the target size");
  const Eigen::Index k = config.block_size;
  const Eigen::Index blocks = (g + k - 1) / k;
  if (state.num_blocks() != blocks) throw ValidationError("sampler state has the wrong block count");

  const Eigen::MatrixXd& q = target.precision();
  const Eigen::VectorXd& events = target.events();
  const Eigen::VectorXd& risk = target.risk();

  Eigen::VectorXd qb = q * state.b;
  const double current = events.dot(state.b) - risk.dot(state.b.array().exp().matrix()) -
                         0.5 * state.b.dot(qb);
  if (!std::isfinite(current)) {
    throw NumericalError("log-posterior of the frailties is not finite at the current state");
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd delta(k);
  for (Eigen::Index j = 0; j < blocks; ++j) {
    const Eigen::Index start = j * k;
    const Eigen::Index len = std::min(k, g - start);
    const double scale = std::exp(state.log_scale(j));
    for (Eigen::Index t = 0; t < len; ++t) delta(t) = scale * normal(rng);
    const auto d = delta.head(len);

    double log_ratio = 0.0;
    for (Eigen::Index t = 0; t < len; ++t) {
      const Eigen::Index idx = start + t;
      const double bi = state.b(idx);
      log_ratio += events(idx) * d(t) - risk(idx) * (std::exp(bi + d(t)) - std::exp(bi));
    }
    log_ratio -= d.dot(qb.segment(start, len)) +
                 0.5 * d.dot(q.block(start, start, len, len) * d);

    const auto uj = static_cast<std::size_t>(j);
    ++state.proposed[uj];
    ++state.total_proposed[uj];
    if (metropolis_accept(log_ratio, rng)) {
      state.b.segment(start, len) += d;
      qb.noalias() += q.middleCols(start, len) * d;
      ++state.accepted[uj];
      ++state.total_accepted[uj];
    }
  }
  ++state.sweeps;
}

SamplerState sweep(SamplerState state, const ModelParams& params, const Dataset& data,
                   const CorrelationFactor& corr, const BlockGibbsConfig& config, Rng& rng) {
  const PosteriorTarget target(params, data, corr);
  sweep(state, target, config, rng);
  return state;
}

void adapt(SamplerState& state, const BlockGibbsConfig& config) {
  for (Eigen::Index j = 0; j < state.num_blocks(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (state.proposed[uj] == 0) continue;
    const double rate =
        static_cast<double>(state.accepted[uj]) / static_cast<double>(state.proposed[uj]);
    state.log_scale(j) += config.adaptation_rate * (rate - config.target_acceptance);
    state.accepted[uj] = 0;
    state.proposed[uj] = 0;
  }
}

}  // namespace sfm
