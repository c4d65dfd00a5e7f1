#pragma once

// Small random model instances shared by the unit and acceptance tests.

#include "sfm/model.hpp"
#include "sfm/spatial.hpp"

#include <Eigen/Dense>

#include <random>

namespace fixture {

struct Instance {
  sfm::ModelParams params;
  sfm::Dataset data;
  sfm::DistanceMatrix distances;
  Eigen::VectorXd b;
};

// N subjects spread over G groups at random planar locations, M intervals, p covariates,
// random interior parameters and a random frailty vector.
Instance random_instance(std::mt19937_64& rng, int n, int g, int m, int p, sfm::KernelKind kernel);

// Dataset with groups laid out as 0..G-1 first, then uniformly at random.
sfm::Dataset random_data(std::mt19937_64& rng, int n, int g, int p, double censor_fraction = 0.3);

}  // namespace fixture

namespace fixture {

// Largest relative errors (denominator max(|fd|, 1)) of the analytic score against central
// differences of the direct-summation log-likelihood, and of the analytic Hessian against
// central differences of the analytic score.
struct DerivativeErrors {
  double gradient = 0.0;
  double hessian = 0.0;
};

DerivativeErrors derivative_errors(const Instance& instance, double step = 1e-5);

sfm::CorrelationFactor factor(const sfm::ModelParams& params, const sfm::DistanceMatrix& d, Eigen::Index g);

}  // namespace fixture

#include "sfm/sampler.hpp"

namespace fixture {

struct ChainMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double acceptance = 0.0;  // over the retained sweeps
};

// Adapts for `burn_in` sweeps, then freezes the proposal and averages over `sweeps` sweeps.
ChainMoments chain_moments(const sfm::PosteriorTarget& target, const sfm::BlockGibbsConfig& config,
                           long burn_in, long sweeps, std::mt19937_64& rng);

// `per_group` subjects in each group of b, generated from h = (1, 0.6) on [0, 0.5), [0.5, inf),
// one binary covariate with beta = 0.5, and exponential censoring with rate 0.4.
Instance grouped_instance(const Eigen::VectorXd& b, const Eigen::MatrixXd& distances, sfm::KernelKind kernel,
                          double rho, int per_group, std::uint64_t seed);

// Two groups one kilometre apart with 30 subjects each, generated at b = (0.8, -0.6).
Instance two_group_instance();

// Three groups at distances 1, 2 and 2.5 km with 40 subjects each, generated at
// b = (0.9, 0.5, -0.9) under the exp kernel.
Instance three_group_instance();

}  // namespace fixture
