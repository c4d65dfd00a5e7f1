#pragma once

#include "sfm/spatial.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <string>
#include <vector>

namespace sfm {

using Rng = std::mt19937_64;

// Right-censored survival records with a subject -> frailty-group map.
struct Dataset {
  Eigen::VectorXd time;         // X_i = min(T_i, C_i)
  std::vector<int> status;      // Delta_i, 1 = event observed
  Eigen::MatrixXd covariates;   // N x p
  std::vector<int> group;       // g(i) in [0, G)
  int num_groups = 0;

  Eigen::Index size() const { return time.size(); }
  Eigen::Index num_covariates() const { return covariates.cols(); }

  // Throws ValidationError when any invariant is violated.
  void validate() const;

  // Rows in the given order; groups are renumbered by first appearance.
  Dataset subset(std::span<const Eigen::Index> rows) const;

  // Subject indices per group.
  std::vector<std::vector<Eigen::Index>> members() const;
};

Dataset make_dataset(Eigen::VectorXd time, std::vector<int> status, Eigen::MatrixXd covariates,
                     std::vector<int> group);

// Piecewise-constant baseline hazard h0(t) = h_m on [tau_{m-1}, tau_m), last interval open.
class PiecewiseBaseline {
 public:
  PiecewiseBaseline() = default;
  // cutpoints holds tau_0 = 0 < tau_1 < ... < tau_{M-1}; hazards has length M.
  PiecewiseBaseline(std::vector<double> cutpoints, std::vector<double> hazards);

  std::size_t num_intervals() const { return hazards_.size(); }
  const std::vector<double>& cutpoints() const { return cutpoints_; }
  const std::vector<double>& hazards() const { return hazards_; }

  // Right-continuous lookup: t == tau_m belongs to interval m (0-based index m).
  std::size_t interval_of(double t) const;
  double hazard(double t) const { return hazards_[interval_of(t)]; }
  // Time spent in interval m during [0, t].
  double exposure(double t, std::size_t m) const;
  double cumulative(double t) const;
  // Smallest t with cumulative(t) = value.
  double inverse_cumulative(double value) const;

  PiecewiseBaseline with_hazards(std::vector<double> hazards) const;

 private:
  std::vector<double> cutpoints_;
  std::vector<double> hazards_;
};

double cumulative_hazard(const PiecewiseBaseline& baseline, double t);

struct ModelParams {
  PiecewiseBaseline baseline;
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  double rho = 1.0;
  KernelKind kernel = KernelKind::Exp;

  bool has_rho() const { return kernel != KernelKind::Identity; }
  // Free parameter count: M + p + 2, or M + p + 1 for the identity kernel.
  Eigen::Index dimension() const;
  // Stacked (h_1..h_M, beta_1..beta_p, sigma2[, rho]).
  Eigen::VectorXd to_vector() const;
  ModelParams from_vector(const Eigen::VectorXd& theta) const;
  std::vector<std::string> labels() const;
  void validate() const;
};

using FrailtyState = Eigen::VectorXd;

// h0(t) exp(z' beta + b)
double hazard_at(const ModelParams& params, double t, const Eigen::VectorXd& z, double frailty);

// Per-group reductions of the data term of the complete log-likelihood. For fixed baseline
// and beta the data part of log L_comp is
//   fixed_term + sum_g (events_g b_g - risk_g exp(b_g)).
class GroupedDataTerms {
 public:
  GroupedDataTerms(const ModelParams& params, const Dataset& data);

  double fixed_term() const { return fixed_term_; }
  const Eigen::VectorXd& events() const { return events_; }
  const Eigen::VectorXd& risk() const { return risk_; }
  double data_log_likelihood(const Eigen::VectorXd& b) const;

 private:
  friend class CompleteDataDerivatives;

  double fixed_term_ = 0.0;
  Eigen::VectorXd events_;
  Eigen::VectorXd risk_;
  // Derivative ingredients, per group.
  Eigen::VectorXd interval_events_;      // d_m, M
  Eigen::VectorXd event_covariates_;     // sum_i Delta_i Z_i, p
  Eigen::MatrixXd exposure_;             // G x M: sum_i e^{Z beta} E_im
  Eigen::MatrixXd covariate_risk_;       // G x p: sum_i Z_i H0 e^{Z beta}
  Eigen::MatrixXd covariate_outer_;      // G x p*p: sum_i Z Z' H0 e^{Z beta}
  Eigen::MatrixXd covariate_exposure_;   // G x p*M: sum_i Z_i e^{Z beta} E_im
};

// Log-density of N(0, sigma2 Sigma) at b.
double frailty_log_density(const Eigen::VectorXd& b, double sigma2, const CorrelationFactor& corr);

double complete_log_likelihood(const ModelParams& params, const Dataset& data,
                               const FrailtyState& b, const CorrelationFactor& corr);

struct DerivativeBundle {
  std::vector<std::string> labels;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Covariance-side matrices entering the rho derivatives:
//   trace_first  = tr(Sigma^-1 Sigma')
//   trace_second = tr(Sigma^-1 Sigma'') - tr(A),   A = Sigma^-1 Sigma' Sigma^-1 Sigma'
//   quad_first   = Sigma^-1 Sigma' Sigma^-1
//   quad_second  = Sigma^-1 Sigma'' Sigma^-1 - 2 A Sigma^-1
struct CovarianceDerivativeTerms {
  double trace_first = 0.0;
  double trace_second = 0.0;
  Eigen::MatrixXd quad_first;
  Eigen::MatrixXd quad_second;
};

CovarianceDerivativeTerms covariance_derivative_terms(const CorrelationFactor& corr);

// Evaluates the complete-data score and Hessian for many frailty draws at fixed theta.
class CompleteDataDerivatives {
 public:
  CompleteDataDerivatives(const ModelParams& params, const Dataset& data,
                          const CorrelationFactor& corr);

  DerivativeBundle evaluate(const FrailtyState& b) const;
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  ModelParams params_;
  GroupedDataTerms terms_;
  CorrelationFactor corr_;
  CovarianceDerivativeTerms cov_;
  std::vector<std::string> labels_;
};

DerivativeBundle score_and_hessian(const ModelParams& params, const Dataset& data,
                                   const FrailtyState& b, const CorrelationFactor& corr);

}  // namespace sfm
