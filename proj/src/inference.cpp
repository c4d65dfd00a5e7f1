#include "sfm/inference.hpp"

#include "sfm/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sfm {

namespace {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

constexpr Eigen::Index kDrawBatch = 256;

}  // namespace

double log_mean_exp(std::span<const double> log_values) {
  if (log_values.empty()) throw ValidationError("log-mean-exp of an empty set");
  std::vector<double> sorted(log_values.begin(), log_values.end());
  std::sort(sorted.begin(), sorted.end());
  const double top = sorted.back();
  if (!std::isfinite(top)) return top;
  for (double& x : sorted) x = std::exp(x - top);
  return top + std::log(pairwise_sum(sorted) / static_cast<double>(sorted.size()));
}

double conditional_log_likelihood(const ModelParams& params, const Dataset& data,
                                  const FrailtyState& b) {
  if (b.size() != data.num_groups) throw ValidationError("frailty vector has the wrong length");
  return GroupedDataTerms(params, data).data_log_likelihood(b);
}

MarginalEstimate marginal_log_likelihood_mc(const ModelParams& params, const Dataset& data,
                                            const CorrelationFactor& corr, long draws, Rng& rng) {
  if (draws < 1) throw ValidationError("marginal likelihood needs at least one draw");
  const Eigen::Index g = data.num_groups;
  if (corr.size() != g) throw ValidationError("correlation matrix and data groups disagree in size");
  const GroupedDataTerms terms(params, data);
  const double sigma = std::sqrt(params.sigma2);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> log_w;
  log_w.reserve(static_cast<std::size_t>(draws));
  Eigen::MatrixXd eps(g, kDrawBatch);
  for (long done = 0; done < draws; done += kDrawBatch) {
    const Eigen::Index batch = std::min<Eigen::Index>(kDrawBatch, draws - done);
    for (Eigen::Index c = 0; c < batch; ++c)
      for (Eigen::Index r = 0; r < g; ++r) eps(r, c) = normal(rng);
    Eigen::MatrixXd b = corr.lower().triangularView<Eigen::Lower>() * eps.leftCols(batch);
    b *= sigma;
    const Eigen::VectorXd linear = b.transpose() * terms.events();
    const Eigen::VectorXd expo = b.array().exp().matrix().transpose() * terms.risk();
    for (Eigen::Index c = 0; c < batch; ++c) log_w.push_back(terms.fixed_term() + linear(c) - expo(c));
  }

  MarginalEstimate out;
  out.draws = draws;
  out.max_log_weight = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(out.max_log_weight)) {
    std::ostringstream msg;
    msg << "all Monte Carlo draws underflow (max log-weight " << out.max_log_weight << ")";
    throw NumericalError(msg.str());
  }
  out.log_likelihood = log_mean_exp(log_w);

  std::vector<double> w(log_w.size());
  for (std::size_t c = 0; c < w.size(); ++c) w[c] = std::exp(log_w[c] - out.max_log_weight);
  std::sort(w.begin(), w.end());
  const double n = static_cast<double>(w.size());
  const double mean = pairwise_sum(w) / n;
  std::vector<double> sq(w.size());
  for (std::size_t c = 0; c < w.size(); ++c) sq[c] = (w[c] - mean) * (w[c] - mean);
  const double var = w.size() > 1 ? pairwise_sum(sq) / (n - 1.0) : 0.0;
  out.mc_standard_error = std::sqrt(var / n) / mean;
  return out;
}

FisherMatrix fisher_information(const ModelParams& params, const Dataset& data,
                                const CorrelationFactor& corr, std::span<const FrailtyState> draws) {
  if (draws.size() < 2) throw ValidationError("Fisher information needs at least two posterior draws");
  const CompleteDataDerivatives deriv(params, data, corr);
  const Eigen::Index dim = params.dimension();
  Eigen::MatrixXd mean_hess = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd mean_outer = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd mean_score = Eigen::VectorXd::Zero(dim);
  for (const FrailtyState& b : draws) {
    const DerivativeBundle d = deriv.evaluate(b);
    mean_hess += d.hessian;
    mean_outer.selfadjointView<Eigen::Lower>().rankUpdate(d.gradient);
    mean_score += d.gradient;
  }
  const double l = static_cast<double>(draws.size());
  mean_hess /= l;
  mean_outer = mean_outer.selfadjointView<Eigen::Lower>();
  mean_outer /= l;
  mean_score /= l;

  FisherMatrix out;
  out.labels = deriv.labels();
  out.draws = static_cast<long>(draws.size());
  out.information = -mean_hess - mean_outer + mean_score * mean_score.transpose();
  out.information = 0.5 * (out.information + out.information.transpose()).eval();

  const Eigen::LLT<Eigen::MatrixXd> llt(out.information);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("observed Fisher information is not positive definite", std::move(out));
  }
  return out;
}

InferenceSummary standard_errors(const FisherMatrix& fisher, const ModelParams& params) {
  const Eigen::Index dim = fisher.information.rows();
  if (dim != params.dimension()) throw ValidationError("Fisher matrix does not match the parameters");
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(fisher.information);
  if (!lu.isInvertible()) throw NumericalError("Fisher information matrix is singular");
  const Eigen::MatrixXd cov = lu.inverse();
  const Eigen::VectorXd theta = params.to_vector();
  const std::vector<std::string> labels = params.labels();

  InferenceSummary out;
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double var = cov(j, j);
    if (!(var > 0.0)) {
      throw NumericalError("inverse Fisher information has a non-positive variance for " +
                           labels[static_cast<std::size_t>(j)]);
    }
    const double se = std::sqrt(var);
    out.parameters.push_back({labels[static_cast<std::size_t>(j)], theta(j), se,
                              theta(j) - kNormalQuantile975 * se, theta(j) + kNormalQuantile975 * se});
  }
  const auto m = static_cast<Eigen::Index>(params.baseline.num_intervals());
  for (Eigen::Index j = 0; j < params.beta.size(); ++j) {
    const ParameterSummary& b = out.parameters[static_cast<std::size_t>(m + j)];
    out.hazard_ratios.push_back({"HR" + std::to_string(j + 1), std::exp(b.estimate), b.standard_error,
                                 std::exp(b.ci_low), std::exp(b.ci_high)});
  }
  return out;
}

LrtResult lrt_boundary_pvalue(double loglik_full, double loglik_null) {
  LrtResult out;
  const double diff = loglik_full - loglik_null;
  if (!std::isfinite(diff)) throw ValidationError("log-likelihoods must be finite");
  if (diff < -1e-6) out.clamped = true;
  out.statistic = std::max(0.0, 2.0 * diff);
  out.p_value = out.statistic > 0.0 ? 0.5 * std::erfc(std::sqrt(out.statistic / 2.0)) : 1.0;
  return out;
}

}  // namespace sfm
