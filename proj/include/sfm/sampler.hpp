#pragma once

#include "sfm/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace sfm {

struct BlockGibbsConfig {
  int block_size = 10;
  double target_acceptance = 0.3;
  double initial_scale = 0.5;
  double adaptation_rate = 0.5;
  int sweeps_per_iteration = 10;
  // Sweeps between two adaptation steps.
  int adapt_window = 10;

  void validate(Eigen::Index num_groups) const;
};

struct SamplerState {
  FrailtyState b;
  Eigen::VectorXd log_scale;     // one proposal scale per block
  std::vector<long> accepted;    // since the last adaptation
  std::vector<long> proposed;
  std::vector<long> total_accepted;
  std::vector<long> total_proposed;
  long sweeps = 0;

  Eigen::Index num_blocks() const { return log_scale.size(); }
  double acceptance_rate() const;  // over the whole run
};

SamplerState make_sampler_state(Eigen::Index num_groups, const BlockGibbsConfig& config);
SamplerState make_sampler_state(FrailtyState initial, const BlockGibbsConfig& config);

// Unnormalized log pi_theta(b | X, Delta): the grouped data term plus the Gaussian prior
// quadratic form, with the precision matrix cached.
class PosteriorTarget {
 public:
  PosteriorTarget(const ModelParams& params, const Dataset& data, const CorrelationFactor& corr);

  double log_density(const FrailtyState& b) const;
  Eigen::Index size() const { return events_.size(); }
  const Eigen::VectorXd& events() const { return events_; }
  const Eigen::VectorXd& risk() const { return risk_; }
  const Eigen::MatrixXd& precision() const { return precision_; }

 private:
  Eigen::VectorXd events_;
  Eigen::VectorXd risk_;
  Eigen::MatrixXd precision_;  // Sigma^-1 / sigma2
};

// Accepts with probability min(1, exp(log_ratio)), comparing in log space.
bool metropolis_accept(double log_ratio, Rng& rng);

// One pass over the contiguous blocks [jK, min(G, (j+1)K)), each updated by a Gaussian
// random-walk Metropolis step. Only the proposed block's terms are recomputed.
void sweep(SamplerState& state, const PosteriorTarget& target, const BlockGibbsConfig& config,
           Rng& rng);

SamplerState sweep(SamplerState state, const ModelParams& params, const Dataset& data,
                   const CorrelationFactor& corr, const BlockGibbsConfig& config, Rng& rng);

// Robbins-Monro step on each block's log-scale toward the target acceptance; resets the
// windowed counters.
void adapt(SamplerState& state, const BlockGibbsConfig& config);

}  // namespace sfm
