#pragma once

#include "sfm/model.hpp"
#include "sfm/sampler.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace sfm {

// Smoothed sufficient statistics of the frailty vector: pairwise products and exponentials.
struct SufficientStats {
  Eigen::MatrixXd bb;    // G x G
  Eigen::VectorXd expb;  // G

  static SufficientStats of(const FrailtyState& b);
  double sup_norm() const;
};

// mu_k = 1 during the first burn_in iterations, 1 / (k - burn_in) afterwards.
double step_size(long k, long burn_in);

// s + mu (S(b) - s)
SufficientStats sa_update(const SufficientStats& s, const FrailtyState& b, double mu);
// s + mu (draw - s), for statistics already averaged over several frailty draws.
SufficientStats sa_update(const SufficientStats& s, const SufficientStats& draw, double mu);

// Truncation on random boundaries. The active compact set kappa is the sup-norm ball of
// radius initial_radius * growth^kappa.
struct TruncationSchedule {
  double initial_radius = 1e3;
  double growth = 2.0;
  double epsilon_scale = 10.0;

  double radius(int kappa) const;
  // eps_k = epsilon_scale / sqrt(k - burn_in) after burn-in; unbounded before.
  double epsilon(long k, long burn_in) const;
};

enum class TruncationDecision { Accept, Restart };

struct TruncationOutcome {
  TruncationDecision decision = TruncationDecision::Accept;
  int kappa = 0;
};

TruncationOutcome truncation_check(const SufficientStats& candidate, const SufficientStats& previous,
                                   int kappa, const TruncationSchedule& schedule, double epsilon_k);

struct MStepOptions {
  int beta_max_iterations = 20;
  int beta_max_halvings = 30;
  double beta_tolerance = 1e-10;
  int rho_max_iterations = 10;
  double rho_step = 1.0;
  double rho_tolerance = 1e-8;
  double rho_min = 1e-4;
  double rho_max = 1e4;
  bool update_rho = true;
  std::optional<double> fixed_sigma2;
};

struct SaemConfig {
  long burn_in = 200;
  long max_iterations = 2000;
  // Adaptive sampler sweeps at the initial theta before the first SA update.
  long warmup_sweeps = 200;
  // Frailty draws averaged into S(b) per iteration, each after sweeps_per_iteration sweeps.
  long draws_per_iteration = 1;
  double tolerance = 1e-3;
  int consecutive_hits = 3;
  MStepOptions mstep;
  BlockGibbsConfig sampler;
  bool truncation = false;
  TruncationSchedule truncation_schedule;

  void validate() const;
};

// theta-dependent part of the expected complete log-likelihood with smoothed statistics,
// i.e. log L(theta, s) up to a constant.
double saem_objective(const ModelParams& params, const SufficientStats& s, const Dataset& data,
                      const CorrelationFactor& corr);

// Building blocks shared with the proportional hazards fit. `frailty_weight` holds the
// per-group multiplier of the subject risk (S^exp for SAEM, all ones without frailty).
struct RegressionUpdate {
  Eigen::VectorXd beta;
  int iterations = 0;
};

RegressionUpdate update_regression(const Dataset& data, const PiecewiseBaseline& baseline,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& frailty_weight,
                                   const MStepOptions& options);

// Closed-form hazards at fixed beta. Intervals without exposure or without events keep the
// previous value and add a warning.
std::vector<double> update_hazards(const Dataset& data, const PiecewiseBaseline& previous,
                                   const Eigen::VectorXd& beta, const Eigen::VectorXd& frailty_weight,
                                   std::vector<std::string>* warnings);

struct MStepResult {
  ModelParams params;
  CorrelationFactor corr;
  std::vector<std::string> warnings;
};

// beta (damped Newton) -> h (closed form) -> sigma2 (closed form) -> rho (gradient ascent
// on log rho with curvature-scaled steps and backtracking).
MStepResult m_step(const SufficientStats& s, const Dataset& data, const ModelParams& previous,
                   const CorrelationFactor& previous_corr, const MStepOptions& options);

struct FitResult {
  ModelParams params;
  std::vector<std::string> labels;
  std::vector<Eigen::VectorXd> trace;
  std::vector<double> trace_acceptance;
  bool converged = false;
  long iterations = 0;
  int restarts = 0;
  Eigen::VectorXd block_acceptance;
  double acceptance = 0.0;
  SamplerState sampler;
  SufficientStats stats;
  std::vector<std::string> warnings;
};

FitResult fit(const Dataset& data, const DistanceMatrix& distances, KernelKind kernel,
              const SaemConfig& config, const ModelParams& init, Rng& rng);

// Continues the fitted chain at theta-hat: `burn_in` discarded sweeps, then `draws` retained.
std::vector<FrailtyState> posterior_draws(const Dataset& data, const ModelParams& params,
                                          const CorrelationFactor& corr, SamplerState state,
                                          const BlockGibbsConfig& config, long burn_in, long draws,
                                          Rng& rng);

// Correlation factor for fitted parameters; identity kernels need no distances.
CorrelationFactor factor_for(const ModelParams& params, const DistanceMatrix& distances,
                             Eigen::Index num_groups);

}  // namespace sfm
