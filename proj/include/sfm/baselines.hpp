#pragma once

#include "sfm/model.hpp"
#include "sfm/saem.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace sfm {

// Piecewise-constant proportional hazards fit without frailty.
struct PhFit {
  std::vector<double> cutpoints;
  std::vector<double> hazards;           // 0 for intervals without events
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;           // observed information over (h, beta)
  std::vector<std::size_t> flagged_intervals;
  double log_likelihood = 0.0;
  int rounds = 0;

  std::vector<std::string> labels() const;
  Eigen::VectorXd to_vector() const;     // (h, beta)
  // Baseline usable as a starting value: flagged intervals get a small positive hazard.
  PiecewiseBaseline baseline() const;
};

// Alternates the closed-form hazards with Newton on beta until the relative change in
// (h, beta) drops below `tolerance`; at most `max_rounds` rounds.
PhFit fit_ph(const Dataset& data, std::vector<double> cutpoints, double tolerance = 1e-8,
             int max_rounds = 200);

// Starting values for the frailty fits: (h, beta) from fit_ph, sigma2 = rho = 1.
ModelParams initial_params(const Dataset& data, const std::vector<double>& cutpoints,
                           KernelKind kernel, double sigma2 = 1.0, double rho = 1.0);

// Independent Gaussian frailties per group: the SAEM fit with the identity kernel.
FitResult fit_univariate_frailty(const Dataset& data, const std::vector<double>& cutpoints,
                                 const SaemConfig& config, Rng& rng);

struct JackknifeResult {
  std::vector<std::string> labels;
  Eigen::VectorXd estimate;      // full-data fit
  Eigen::VectorXd mean;          // mean of the leave-one-cluster-out fits
  Eigen::MatrixXd covariance;    // ((n_c - 1) / n_c) sum_c (t_c - mean)(t_c - mean)'
  Eigen::VectorXd standard_errors;
  std::vector<Eigen::VectorXd> leave_one_out;
  int clusters = 0;
};

// Grouped jackknife for the marginal (no-frailty) model; clusters maps subject -> cluster id.
JackknifeResult grouped_jackknife(const Dataset& data, const std::vector<double>& cutpoints,
                                  std::span<const int> clusters);

// Jackknife covariance from leave-one-out estimates.
Eigen::MatrixXd jackknife_covariance(const std::vector<Eigen::VectorXd>& leave_one_out,
                                     Eigen::VectorXd* mean = nullptr);

}  // namespace sfm
