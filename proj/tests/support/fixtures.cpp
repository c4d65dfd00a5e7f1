#include "fixtures.hpp"

#include <algorithm>
#include <numeric>
#include <numeric>
#include <vector>

namespace fixture {

sfm::Dataset random_data(std::mt19937_64& rng, int n, int g, int p, double censor_fraction) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd time(n);
  std::vector<int> status(static_cast<std::size_t>(n));
  Eigen::MatrixXd cov(n, p);
  std::vector<int> group(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    time(i) = 0.05 + 1.5 * u(rng);
    status[static_cast<std::size_t>(i)] = u(rng) < censor_fraction ? 0 : 1;
    for (int j = 0; j < p; ++j) cov(i, j) = j % 2 == 0 ? (u(rng) < 0.5 ? 1.0 : 0.0) : z(rng);
    group[static_cast<std::size_t>(i)] = i < g ? i : static_cast<int>(u(rng) * g);
  }
  return sfm::make_dataset(std::move(time), std::move(status), std::move(cov), std::move(group));
}

Instance random_instance(std::mt19937_64& rng, int n, int g, int m, int p, sfm::KernelKind kernel) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Instance out;
  out.data = random_data(rng, n, g, p);
  std::vector<double> cut{0.0};
  for (int k = 1; k < m; ++k) cut.push_back(cut.back() + 0.2 + 0.4 * u(rng));
  std::vector<double> haz(static_cast<std::size_t>(m));
  for (auto& h : haz) h = 0.3 + 2.0 * u(rng);
  out.params.baseline = sfm::PiecewiseBaseline(cut, haz);
  out.params.beta = Eigen::VectorXd(p);
  for (int j = 0; j < p; ++j) out.params.beta(j) = 0.8 * z(rng);
  out.params.sigma2 = 0.3 + 1.5 * u(rng);
  out.params.rho = 0.3 + 1.5 * u(rng);
  out.params.kernel = kernel;
  std::vector<sfm::GeoPoint> pts(static_cast<std::size_t>(g));
  for (auto& q : pts) q = {3.0 * u(rng), 3.0 * u(rng)};
  out.distances = sfm::build_distance_matrix(pts, sfm::DistanceMetric::Euclidean);
  out.b = Eigen::VectorXd(g);
  for (int k = 0; k < g; ++k) out.b(k) = 0.7 * z(rng);
  return out;
}

}  // namespace fixture

#include "oracles.hpp"

namespace fixture {

sfm::CorrelationFactor factor(const sfm::ModelParams& params, const sfm::DistanceMatrix& d, Eigen::Index g) {
  if (params.kernel == sfm::KernelKind::Identity) return sfm::identity_correlation(g);
  return sfm::correlation_matrix(d, params.rho, params.kernel);
}

DerivativeErrors derivative_errors(const Instance& in, double step) {
  const Eigen::Index g = in.data.num_groups;
  const Eigen::VectorXd theta = in.params.to_vector();
  auto sigma_of = [&](const sfm::ModelParams& q) {
    return q.kernel == sfm::KernelKind::Identity ? Eigen::MatrixXd::Identity(g, g)
                                                 : oracle::kernel(in.distances.values(), q.rho, q.kernel);
  };
  auto loglik = [&](const Eigen::VectorXd& t) {
    const sfm::ModelParams q = in.params.from_vector(t);
    return oracle::complete_log_likelihood(q, in.data, in.b, sigma_of(q));
  };
  auto score = [&](const Eigen::VectorXd& t) {
    const sfm::ModelParams q = in.params.from_vector(t);
    return sfm::score_and_hessian(q, in.data, in.b, factor(q, in.distances, g)).gradient;
  };

  const sfm::DerivativeBundle bundle =
      sfm::score_and_hessian(in.params, in.data, in.b, factor(in.params, in.distances, g));
  DerivativeErrors out;
  const Eigen::VectorXd fd = oracle::fd_gradient(loglik, theta, step);
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    out.gradient = std::max(out.gradient, oracle::relative_error(bundle.gradient(i), fd(i)));
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Eigen::VectorXd up = theta, dn = theta;
    up(j) += step;
    dn(j) -= step;
    const Eigen::VectorXd col = (score(up) - score(dn)) / (2.0 * step);
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      out.hessian = std::max(out.hessian, oracle::relative_error(bundle.hessian(i, j), col(i)));
  }
  return out;
}

}  // namespace fixture

#include "sfm/simulate.hpp"

namespace fixture {

ChainMoments chain_moments(const sfm::PosteriorTarget& target, const sfm::BlockGibbsConfig& config,
                           long burn_in, long sweeps, std::mt19937_64& rng) {
  sfm::SamplerState state = sfm::make_sampler_state(target.size(), config);
  for (long s = 0; s < burn_in; ++s) {
    sfm::sweep(state, target, config, rng);
    if (state.sweeps % config.adapt_window == 0) sfm::adapt(state, config);
  }
  const long acc0 = std::accumulate(state.total_accepted.begin(), state.total_accepted.end(), 0L);
  const long prop0 = std::accumulate(state.total_proposed.begin(), state.total_proposed.end(), 0L);
  const Eigen::Index g = target.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(g, g);
  for (long s = 0; s < sweeps; ++s) {
    sfm::sweep(state, target, config, rng);
    sum += state.b;
    outer.noalias() += state.b * state.b.transpose();
  }
  ChainMoments out;
  out.mean = sum / static_cast<double>(sweeps);
  out.covariance = outer / static_cast<double>(sweeps) - out.mean * out.mean.transpose();
  const long acc = std::accumulate(state.total_accepted.begin(), state.total_accepted.end(), 0L) - acc0;
  const long prop = std::accumulate(state.total_proposed.begin(), state.total_proposed.end(), 0L) - prop0;
  out.acceptance = static_cast<double>(acc) / static_cast<double>(prop);
  return out;
}

Instance grouped_instance(const Eigen::VectorXd& b, const Eigen::MatrixXd& distances, sfm::KernelKind kernel,
                          double rho, int per_group, std::uint64_t seed) {
  Instance out;
  out.params.baseline = sfm::PiecewiseBaseline({0.0, 0.5}, {1.0, 0.6});
  out.params.beta = Eigen::VectorXd::Constant(1, 0.5);
  out.params.sigma2 = 1.0;
  out.params.rho = rho;
  out.params.kernel = kernel;
  if (kernel != sfm::KernelKind::Identity) out.distances = sfm::DistanceMatrix(distances);
  out.b = b;
  const auto g = static_cast<int>(b.size());
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::exponential_distribution<double> cens(0.4);
  const int n = g * per_group;
  Eigen::VectorXd time(n);
  std::vector<int> status(static_cast<std::size_t>(n)), group(static_cast<std::size_t>(n));
  Eigen::MatrixXd z(n, 1);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    group[ui] = i % g;
    z(i, 0) = coin(rng) ? 1.0 : 0.0;
    const double t = sfm::draw_event_time(out.params.baseline, 0.5 * z(i, 0) + b(group[ui]), rng);
    const double c = cens(rng);
    time(i) = std::min(t, c);
    status[ui] = t <= c ? 1 : 0;
  }
  out.data = sfm::make_dataset(std::move(time), std::move(status), std::move(z), std::move(group));
  return out;
}

Instance two_group_instance() {
  Eigen::MatrixXd d(2, 2);
  d << 0, 1, 1, 0;
  return grouped_instance(Eigen::Vector2d(0.8, -0.6), d, sfm::KernelKind::Exp, 0.5, 30, 2024);
}

Instance three_group_instance() {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 2, 1, 0, 2.5, 2, 2.5, 0;
  return grouped_instance(Eigen::Vector3d(0.9, 0.5, -0.9), d, sfm::KernelKind::Exp, 0.5, 40, 1);
}

}  // namespace fixture
