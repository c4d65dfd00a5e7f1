#pragma once

#include "sfm/error.hpp"
#include "sfm/model.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace sfm {

struct MarginalEstimate {
  double log_likelihood = 0.0;
  double mc_standard_error = 0.0;  // delta-method error on the log scale
  long draws = 0;
  double max_log_weight = 0.0;
};

// log of (1/C) sum_c L_cond(theta | b_c) with b_c ~ N(0, sigma2 Sigma(rho)).
MarginalEstimate marginal_log_likelihood_mc(const ModelParams& params, const Dataset& data,
                                            const CorrelationFactor& corr, long draws, Rng& rng);

// Order-invariant log-mean-exp: values are sorted before a fixed pairwise reduction.
double log_mean_exp(std::span<const double> log_values);

// Conditional data log-likelihood log L_cond(theta | b).
double conditional_log_likelihood(const ModelParams& params, const Dataset& data,
                                  const FrailtyState& b);

struct FisherMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd information;
  long draws = 0;
};

class NotPositiveDefinite : public NumericalError {
 public:
  NotPositiveDefinite(const std::string& what, FisherMatrix fisher)
      : NumericalError(what), fisher_(std::move(fisher)) {}
  const FisherMatrix& fisher() const { return fisher_; }

 private:
  FisherMatrix fisher_;
};

// Louis' missing-information estimate from posterior draws b_1..b_L:
//   -mean(Hessian) - mean(score score') + mean(score) mean(score)'.
// Throws NotPositiveDefinite (carrying the matrix) when the estimate is not PD.
FisherMatrix fisher_information(const ModelParams& params, const Dataset& data,
                                const CorrelationFactor& corr, std::span<const FrailtyState> draws);

struct ParameterSummary {
  std::string label;
  double estimate = 0.0;
  double standard_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct InferenceSummary {
  std::vector<ParameterSummary> parameters;
  std::vector<ParameterSummary> hazard_ratios;  // exp(beta) with exponentiated CI
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

InferenceSummary standard_errors(const FisherMatrix& fisher, const ModelParams& params);

struct LrtResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool clamped = false;  // the full model's log-likelihood fell below the null's
};

// 50:50 mixture of a point mass at zero and chi-square(1).
LrtResult lrt_boundary_pvalue(double loglik_full, double loglik_null);

}  // namespace sfm
