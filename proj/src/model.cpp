#include "sfm/model.hpp"

#include "sfm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sfm {

// ---------------------------------------------------------------------------
// Dataset

void Dataset::validate() const {
  const Eigen::Index n = size();
  if (static_cast<Eigen::Index>(status.size()) != n || covariates.rows() != n ||
      static_cast<Eigen::Index>(group.size()) != n) {
    throw ValidationError("dataset columns have inconsistent lengths");
  }
  if (num_groups < 1 || num_groups > std::max<Eigen::Index>(n, 1)) {
    throw ValidationError("dataset must have between 1 and N frailty groups");
  }
  std::vector<int> count(static_cast<std::size_t>(num_groups), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(time(i) >= 0.0) || !std::isfinite(time(i))) {
      throw ValidationError("record " + std::to_string(i) + ": time must be finite and nonnegative");
    }
    if (status[i] != 0 && status[i] != 1) {
      throw ValidationError("record " + std::to_string(i) + ": status must be 0 or 1");
    }
    if (group[i] < 0 || group[i] >= num_groups) {
      throw ValidationError("record " + std::to_string(i) + ": group index out of range");
    }
    if (!covariates.row(i).allFinite()) {
      throw ValidationError("record " + std::to_string(i) + ": non-finite covariate");
    }
    ++count[static_cast<std::size_t>(group[i])];
  }
  for (int g = 0; g < num_groups; ++g) {
    if (count[static_cast<std::size_t>(g)] == 0) {
      throw ValidationError("frailty group " + std::to_string(g) + " has no subjects");
    }
  }
}

Dataset Dataset::subset(std::span<const Eigen::Index> rows) const {
  Dataset out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.time.resize(n);
  out.status.resize(rows.size());
  out.covariates.resize(n, covariates.cols());
  out.group.resize(rows.size());
  std::vector<int> remap(static_cast<std::size_t>(num_groups), -1);
  int next = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = rows[k];
    out.time(k) = time(i);
    out.status[k] = status[i];
    out.covariates.row(k) = covariates.row(i);
    int& g = remap[static_cast<std::size_t>(group[i])];
    if (g < 0) g = next++;
    out.group[k] = g;
  }
  out.num_groups = next;
  return out;
}

std::vector<std::vector<Eigen::Index>> Dataset::members() const {
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(num_groups));
  for (Eigen::Index i = 0; i < size(); ++i) out[static_cast<std::size_t>(group[i])].push_back(i);
  return out;
}

Dataset make_dataset(Eigen::VectorXd time, std::vector<int> status, Eigen::MatrixXd covariates,
                     std::vector<int> group) {
  Dataset d;
  d.time = std::move(time);
  d.status = std::move(status);
  d.covariates = std::move(covariates);
  d.group = std::move(group);
  d.num_groups = d.group.empty() ? 0 : *std::max_element(d.group.begin(), d.group.end()) + 1;
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// PiecewiseBaseline

PiecewiseBaseline::PiecewiseBaseline(std::vector<double> cutpoints, std::vector<double> hazards)
    : cutpoints_(std::move(cutpoints)), hazards_(std::move(hazards)) {
  if (cutpoints_.empty() || cutpoints_.front() != 0.0) {
    throw ValidationError("baseline cut-points must start at 0");
  }
  if (cutpoints_.size() != hazards_.size()) {
    throw ValidationError("baseline needs one hazard per interval (" +
                          std::to_string(cutpoints_.size()) + " intervals, " +
                          std::to_string(hazards_.size()) + " hazards)");
  }
  for (std::size_t m = 1; m < cutpoints_.size(); ++m) {
    if (!(cutpoints_[m] > cutpoints_[m - 1]) || !std::isfinite(cutpoints_[m])) {
      throw ValidationError("baseline cut-points must be finite and strictly increasing");
    }
  }
  for (double h : hazards_) {
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw ValidationError("baseline hazards must be positive and finite");
    }
  }
}

std::size_t PiecewiseBaseline::interval_of(double t) const {
  const auto it = std::upper_bound(cutpoints_.begin(), cutpoints_.end(), t);
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cutpoints_.begin() - 1, 0));
}

double PiecewiseBaseline::exposure(double t, std::size_t m) const {
  const double lo = cutpoints_[m];
  if (t <= lo) return 0.0;
  if (m + 1 == cutpoints_.size()) return t - lo;
  return std::min(t, cutpoints_[m + 1]) - lo;
}

double PiecewiseBaseline::cumulative(double t) const {
  double total = 0.0;
  for (std::size_t m = 0; m < hazards_.size(); ++m) {
    if (t <= cutpoints_[m]) break;
    total += hazards_[m] * exposure(t, m);
  }
  return total;
}

double PiecewiseBaseline::inverse_cumulative(double value) const {
  if (value <= 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t m = 0; m < hazards_.size(); ++m) {
    const bool last = m + 1 == hazards_.size();
    const double width = last ? std::numeric_limits<double>::infinity()
                              : cutpoints_[m + 1] - cutpoints_[m];
    const double block = hazards_[m] * width;
    if (last || acc + block >= value) return cutpoints_[m] + (value - acc) / hazards_[m];
    acc += block;
  }
  return cutpoints_.back();
}

PiecewiseBaseline PiecewiseBaseline::with_hazards(std::vector<double> hazards) const {
  return PiecewiseBaseline(cutpoints_, std::move(hazards));
}

double cumulative_hazard(const PiecewiseBaseline& baseline, double t) {
  return baseline.cumulative(t);
}

// ---------------------------------------------------------------------------
// ModelParams

Eigen::Index ModelParams::dimension() const {
  return static_cast<Eigen::Index>(baseline.num_intervals()) + beta.size() + (has_rho() ? 2 : 1);
}

Eigen::VectorXd ModelParams::to_vector() const {
  Eigen::VectorXd theta(dimension());
  const auto m = static_cast<Eigen::Index>(baseline.num_intervals());
  for (Eigen::Index k = 0; k < m; ++k) theta(k) = baseline.hazards()[static_cast<std::size_t>(k)];
  theta.segment(m, beta.size()) = beta;
  theta(m + beta.size()) = sigma2;
  if (has_rho()) theta(m + beta.size() + 1) = rho;
  return theta;
}

ModelParams ModelParams::from_vector(const Eigen::VectorXd& theta) const {
  if (theta.size() != dimension()) throw ValidationError("parameter vector has wrong length");
  ModelParams out = *this;
  const auto m = static_cast<Eigen::Index>(baseline.num_intervals());
  std::vector<double> h(theta.data(), theta.data() + m);
  out.baseline = baseline.with_hazards(std::move(h));
  out.beta = theta.segment(m, beta.size());
  out.sigma2 = theta(m + beta.size());
  if (has_rho()) out.rho = theta(m + beta.size() + 1);
  return out;
}

std::vector<std::string> ModelParams::labels() const {
  std::vector<std::string> out;
  for (std::size_t m = 0; m < baseline.num_intervals(); ++m) out.push_back("h" + std::to_string(m + 1));
  for (Eigen::Index j = 0; j < beta.size(); ++j) out.push_back("beta" + std::to_string(j + 1));
  out.emplace_back("sigma2");
  if (has_rho()) out.emplace_back("rho");
  return out;
}

void ModelParams::validate() const {
  if (baseline.num_intervals() == 0) throw ValidationError("model needs a baseline hazard");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("sigma2 must be positive");
  if (has_rho() && (!(rho > 0.0) || !std::isfinite(rho))) throw ValidationError("rho must be positive");
  if (!beta.allFinite()) throw ValidationError("beta must be finite");
}

double hazard_at(const ModelParams& params, double t, const Eigen::VectorXd& z, double frailty) {
  if (!(t >= 0.0)) throw ValidationError("hazard requested at negative time");
  return params.baseline.hazard(t) * std::exp(z.dot(params.beta) + frailty);
}

// ---------------------------------------------------------------------------
// Likelihood pieces

GroupedDataTerms::GroupedDataTerms(const ModelParams& params, const Dataset& data) {
  const Eigen::Index n = data.size();
  const Eigen::Index p = data.num_covariates();
  const Eigen::Index g_count = data.num_groups;
  const auto m_count = static_cast<Eigen::Index>(params.baseline.num_intervals());
  if (params.beta.size() != p) {
    throw ValidationError("beta has length " + std::to_string(params.beta.size()) + " but data has " +
                          std::to_string(p) + " covariates");
  }
  const auto& base = params.baseline;

  events_ = Eigen::VectorXd::Zero(g_count);
  risk_ = Eigen::VectorXd::Zero(g_count);
  interval_events_ = Eigen::VectorXd::Zero(m_count);
  event_covariates_ = Eigen::VectorXd::Zero(p);
  exposure_ = Eigen::MatrixXd::Zero(g_count, m_count);
  covariate_risk_ = Eigen::MatrixXd::Zero(g_count, p);
  covariate_outer_ = Eigen::MatrixXd::Zero(g_count, p * p);
  covariate_exposure_ = Eigen::MatrixXd::Zero(g_count, p * m_count);

  for (Eigen::Index i = 0; i < n; ++i) {
    const int g = data.group[static_cast<std::size_t>(i)];
    const double x = data.time(i);
    const auto z = data.covariates.row(i);
    const double lp = z.dot(params.beta);
    const double elp = std::exp(lp);
    const double cum = base.cumulative(x);
    if (data.status[static_cast<std::size_t>(i)] == 1) {
      const std::size_t m = base.interval_of(x);
      fixed_term_ += std::log(base.hazards()[m]) + lp;
      events_(g) += 1.0;
      interval_events_(static_cast<Eigen::Index>(m)) += 1.0;
      event_covariates_ += z.transpose();
    }
    risk_(g) += cum * elp;
    covariate_risk_.row(g) += cum * elp * z;
    for (Eigen::Index a = 0; a < p; ++a)
      for (Eigen::Index c = 0; c < p; ++c) covariate_outer_(g, a * p + c) += z(a) * z(c) * cum * elp;
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const double e = base.exposure(x, static_cast<std::size_t>(m));
      if (e == 0.0) continue;
      exposure_(g, m) += elp * e;
      for (Eigen::Index a = 0; a < p; ++a) covariate_exposure_(g, a * m_count + m) += z(a) * elp * e;
    }
  }
}

double GroupedDataTerms::data_log_likelihood(const Eigen::VectorXd& b) const {
  return fixed_term_ + events_.dot(b) - risk_.dot(b.array().exp().matrix());
}

double frailty_log_density(const Eigen::VectorXd& b, double sigma2, const CorrelationFactor& corr) {
  const auto g = static_cast<double>(b.size());
  return -0.5 * g * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * corr.log_det() -
         0.5 * corr.quad_form(b) / sigma2;
}

namespace {

void check_consistent(const ModelParams& params, const Dataset& data, const FrailtyState& b,
                      const CorrelationFactor& corr) {
  if (b.size() != data.num_groups || corr.size() != data.num_groups) {
    throw ValidationError("frailty vector, correlation matrix and data groups disagree in size");
  }
  if (corr.kernel() != params.kernel ||
      (params.has_rho() && corr.rho() != params.rho)) {
    throw ValidationError("correlation factor was built for different (kernel, rho)");
  }
}

}  // namespace

double complete_log_likelihood(const ModelParams& params, const Dataset& data,
                               const FrailtyState& b, const CorrelationFactor& corr) {
  check_consistent(params, data, b, corr);
  const GroupedDataTerms terms(params, data);
  const double value = terms.data_log_likelihood(b) + frailty_log_density(b, params.sigma2, corr);
  if (!std::isfinite(value)) throw NumericalError("complete log-likelihood is not finite");
  return value;
}

CovarianceDerivativeTerms covariance_derivative_terms(const CorrelationFactor& corr) {
  const auto deriv = correlation_derivatives(corr.distances(), corr.rho(), corr.kernel());
  const Eigen::MatrixXd& inv = corr.inverse();
  const Eigen::MatrixXd p1 = inv * deriv.first;    // Sigma^-1 Sigma'
  const Eigen::MatrixXd p2 = inv * deriv.second;   // Sigma^-1 Sigma''
  CovarianceDerivativeTerms out;
  out.trace_first = p1.trace();
  out.trace_second = p2.trace() - (p1.array() * p1.transpose().array()).sum();
  out.quad_first = p1 * inv;
  out.quad_second = p2 * inv - 2.0 * p1 * out.quad_first;
  out.quad_first = 0.5 * (out.quad_first + out.quad_first.transpose()).eval();
  out.quad_second = 0.5 * (out.quad_second + out.quad_second.transpose()).eval();
  return out;
}

CompleteDataDerivatives::CompleteDataDerivatives(const ModelParams& params, const Dataset& data,
                                                 const CorrelationFactor& corr)
    : params_(params), terms_(params, data), corr_(corr), labels_(params.labels()) {
  if (corr.size() != data.num_groups) {
    throw ValidationError("correlation matrix and data groups disagree in size");
  }
  if (params.has_rho()) cov_ = covariance_derivative_terms(corr_);
}

DerivativeBundle CompleteDataDerivatives::evaluate(const FrailtyState& b) const {
  const auto m_count = static_cast<Eigen::Index>(params_.baseline.num_intervals());
  const Eigen::Index p = params_.beta.size();
  const Eigen::Index dim = params_.dimension();
  const Eigen::Index i_beta = m_count;
  const Eigen::Index i_sigma = m_count + p;
  const Eigen::Index i_rho = i_sigma + 1;
  const double s2 = params_.sigma2;
  const double g_count = static_cast<double>(b.size());

  DerivativeBundle out;
  out.labels = labels_;
  out.gradient = Eigen::VectorXd::Zero(dim);
  out.hessian = Eigen::MatrixXd::Zero(dim, dim);

  const Eigen::VectorXd eb = b.array().exp().matrix();
  const auto& h = params_.baseline.hazards();

  // Baseline block.
  const Eigen::VectorXd exposure = terms_.exposure_.transpose() * eb;
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const double hm = h[static_cast<std::size_t>(m)];
    out.gradient(m) = terms_.interval_events_(m) / hm - exposure(m);
    out.hessian(m, m) = -terms_.interval_events_(m) / (hm * hm);
  }

  // Regression block.
  out.gradient.segment(i_beta, p) = terms_.event_covariates_ - terms_.covariate_risk_.transpose() * eb;
  const Eigen::VectorXd outer = terms_.covariate_outer_.transpose() * eb;
  const Eigen::VectorXd cross = terms_.covariate_exposure_.transpose() * eb;
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index c = 0; c < p; ++c) out.hessian(i_beta + a, i_beta + c) = -outer(a * p + c);
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const double v = -cross(a * m_count + m);
      out.hessian(i_beta + a, m) = v;
      out.hessian(m, i_beta + a) = v;
    }
  }

  // Variance block.
  const double q0 = b.dot(corr_.inverse() * b);
  out.gradient(i_sigma) = -g_count / (2.0 * s2) + q0 / (2.0 * s2 * s2);
  out.hessian(i_sigma, i_sigma) = g_count / (2.0 * s2 * s2) - q0 / (s2 * s2 * s2);

  if (params_.has_rho()) {
    const double q1 = b.dot(cov_.quad_first * b);
    const double q2 = b.dot(cov_.quad_second * b);
    out.gradient(i_rho) = -0.5 * cov_.trace_first + q1 / (2.0 * s2);
    out.hessian(i_rho, i_rho) = -0.5 * cov_.trace_second + q2 / (2.0 * s2);
    const double rs = -q1 / (2.0 * s2 * s2);
    out.hessian(i_rho, i_sigma) = rs;
    out.hessian(i_sigma, i_rho) = rs;
  }
  return out;
}

DerivativeBundle score_and_hessian(const ModelParams& params, const Dataset& data,
                                   const FrailtyState& b, const CorrelationFactor& corr) {
  check_consistent(params, data, b, corr);
  return CompleteDataDerivatives(params, data, corr).evaluate(b);
}

}  // namespace sfm
