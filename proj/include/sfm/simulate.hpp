#pragma once

#include "sfm/model.hpp"
#include "sfm/spatial.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sfm {

// M1: Exp-kernel spatial frailty, M2: Pol-kernel spatial frailty, M3: no frailty,
// M4: independent Gaussian frailty per group.
enum class ScenarioModel { M1, M2, M3, M4 };

std::string to_string(ScenarioModel model);
ScenarioModel parse_scenario(std::string_view name);

// h = (2, 0.5, 1) on [0, 0.2), [0.2, 0.8), [0.8, inf); beta = (2, 3); sigma2 = 1.5; rho = 1.
ModelParams default_truth(ScenarioModel model);

// b = sigma L eps with eps standard normal.
FrailtyState draw_frailties(double sigma2, const CorrelationFactor& corr, Rng& rng);

// T = H0^{-1}(-log(u) exp(-eta)).
double event_time_from_uniform(const PiecewiseBaseline& baseline, double eta, double u);
double draw_event_time(const PiecewiseBaseline& baseline, double eta, Rng& rng);

// Generating mechanism of the latent event times, enough to calibrate censoring.
struct EventModel {
  PiecewiseBaseline baseline;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;            // marginal frailty variance, 0 without frailty
  double covariate_probability = 0.5;
};

struct CensoringCalibration {
  double rate = 0.0;
  double achieved = 0.0;  // censoring fraction over the pilot sample
  int steps = 0;
};

// Bisection on the exponential censoring rate over a fixed pilot sample (common random
// numbers) until the pilot censoring fraction is within `accuracy` of the target.
CensoringCalibration calibrate_censoring(double target, const EventModel& model, Rng& rng,
                                         long pilot = 10000, double accuracy = 0.01,
                                         int max_steps = 60);

struct ScenarioOptions {
  ScenarioModel model = ScenarioModel::M1;
  long subjects = 300;
  long groups = 0;                         // 0: one group per subject
  std::optional<ModelParams> truth;        // default_truth(model) when empty
  double censoring = 0.0;                  // target censoring fraction in [0, 1)
  std::optional<DistanceMatrix> external;  // groups drawn as a random subset of its rows
  double square_km = 10.0;                 // side of the synthetic location square
};

struct Scenario {
  Dataset data;
  ModelParams truth;
  Eigen::VectorXd event_time;
  Eigen::VectorXd censor_time;  // +inf without censoring
  FrailtyState frailty;
  std::vector<GeoPoint> locations;  // per group; empty for an external matrix
  DistanceMatrix distances;         // empty for M3 and M4
  std::vector<int> external_rows;   // rows of the external matrix used
  double censoring_rate = 0.0;
};

// Uniform points in a side x side km square mapped to degrees near (0, 0), where haversine
// distances match planar ones to high accuracy.
std::vector<GeoPoint> synthetic_locations(long count, double side_km, Rng& rng);

Scenario generate_scenario(const ScenarioOptions& options, Rng& rng);

// Independent stream for replication `index` of a run seeded with `seed`.
Rng substream(std::uint64_t seed, std::uint64_t index);

}  // namespace sfm
