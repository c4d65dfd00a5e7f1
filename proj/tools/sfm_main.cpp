// sfm: simulate, fit, compare and plot spatially correlated frailty survival models.

#include "sfm/commands.hpp"
#include "sfm/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

void add_data_options(CLI::App* cmd, sfm::DataOptions& d) {
  cmd->add_option("--data", d.data, "subject CSV: id,time,status,z1..zp[,lon,lat][,group]")->required();
  cmd->add_option("--distances", d.distances,
                  "G x G distance matrix CSV in km (rows indexed by the group column, or by subject)");
  cmd->add_option("--metric", d.metric, "distance between lon/lat pairs: haversine (km) or euclidean")
      ->capture_default_str();
  cmd->add_option("--merge-tolerance", d.merge_tolerance_km,
                  "merge locations closer than this many km into one group (0: exact equality)")
      ->capture_default_str();
}

// Values from a flat key=value file fill every option not given on the command line.
void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  for (const auto& [key, value] : sfm::read_key_values(path)) {
    if (key == "config") continue;
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) throw sfm::ValidationError(path + ": unknown key '" + key + "' for command " + cmd->get_name());
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw sfm::ValidationError(path + ": " + key + ": " + e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially correlated frailty survival models fitted by SAEM with MCMC.\n"
               "Distances are in kilometres: rho is per km for the exp kernel and a\n"
               "dimensionless exponent for the pol kernel."};
  app.require_subcommand(1);
  std::string config;

  // simulate
  sfm::SimulateOptions sim;
  std::optional<double> sim_sigma2, sim_rho;
  auto* simulate = app.add_subcommand("simulate", "generate datasets under M1 (exp), M2 (pol), M3 (none) or M4 (iid)");
  simulate->add_option("--model", sim.model, "scenario M1, M2, M3 or M4")->capture_default_str();
  simulate->add_option("--subjects", sim.subjects, "number of subjects N")->capture_default_str();
  simulate->add_option("--groups", sim.groups, "number of frailty groups (0: one per subject)")->capture_default_str();
  simulate->add_option("--censoring", sim.censoring, "target censoring fraction in [0, 1)")->capture_default_str();
  simulate->add_option("--cutpoints", sim.cutpoints, "baseline cutpoints, default 0,0.2,0.8");
  simulate->add_option("--hazards", sim.hazards, "baseline hazards, default 2,0.5,1");
  simulate->add_option("--beta", sim.beta, "regression coefficients, default 2,3");
  simulate->add_option("--sigma2", sim_sigma2, "frailty variance, default 1.5");
  simulate->add_option("--rho", sim_rho, "correlation parameter, default 1");
  simulate->add_option("--external-distances", sim.external_distances,
                       "distance matrix CSV to draw group locations from");
  simulate->add_option("--square-km", sim.square_km, "side of the synthetic location square")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "master seed")->capture_default_str();
  simulate->add_option("--output", sim.output, "output prefix")->capture_default_str();
  simulate->add_option("--replications", sim.replications, "independent datasets from substream seeds")
      ->capture_default_str();
  simulate->add_option("--threads", sim.threads, "worker threads (0: all cores)")->capture_default_str();
  simulate->add_option("--config", config, "flat key=value file; command-line flags win");

  // fit
  sfm::FitOptions fo;
  auto* fit = app.add_subcommand("fit", "fit a frailty model and report estimates, SEs and hazard ratios");
  add_data_options(fit, fo.input);
  fit->add_option("--kernel", fo.kernel, "exp, pol or identity (independent frailties)")->capture_default_str();
  fit->add_option("--cutpoints", fo.cutpoints, "baseline cutpoints starting at 0, e.g. 0,0.2,0.8");
  fit->add_option("--intervals", fo.intervals, "intervals at event-time quantiles when no cutpoints are given")
      ->capture_default_str();
  fit->add_option("--burn-in", fo.burn_in, "SAEM iterations with unit step size")->capture_default_str();
  fit->add_option("--max-iterations", fo.max_iterations)->capture_default_str();
  fit->add_option("--warmup-sweeps", fo.warmup_sweeps, "adaptive sweeps at the initial values")
      ->capture_default_str();
  fit->add_option("--tolerance", fo.tolerance, "relative change in theta for the stopping rule")->capture_default_str();
  fit->add_option("--block-size", fo.block_size, "frailties per Metropolis block")->capture_default_str();
  fit->add_option("--target-acceptance", fo.target_acceptance)->capture_default_str();
  fit->add_option("--initial-scale", fo.initial_scale, "initial random-walk scale")->capture_default_str();
  fit->add_option("--adaptation-rate", fo.adaptation_rate)->capture_default_str();
  fit->add_option("--sweeps", fo.sweeps, "sampler sweeps per SAEM iteration")->capture_default_str();
  fit->add_option("--draws-per-iteration", fo.draws_per_iteration,
                  "frailty draws averaged into the statistics per iteration")
      ->capture_default_str();
  fit->add_option("--adapt-window", fo.adapt_window, "sweeps between proposal adaptations")->capture_default_str();
  fit->add_flag("--truncation", fo.truncation, "enable truncation on random boundaries");
  fit->add_option("--init-sigma2", fo.init_sigma2)->capture_default_str();
  fit->add_option("--init-rho", fo.init_rho)->capture_default_str();
  fit->add_option("--fisher-burn-in", fo.fisher_burn_in, "sweeps discarded before the Fisher draws")
      ->capture_default_str();
  fit->add_option("--fisher-draws", fo.fisher_draws, "posterior draws for the Fisher information")
      ->capture_default_str();
  fit->add_option("--mc-draws", fo.mc_draws, "prior draws for the marginal likelihood (0: skip)")
      ->capture_default_str();
  fit->add_option("--seed", fo.seed)->capture_default_str();
  fit->add_option("--output", fo.output, "output prefix")->capture_default_str();
  fit->add_option("--replications", fo.replications, "independent chains from substream seeds")
      ->capture_default_str();
  fit->add_option("--threads", fo.threads, "worker threads (0: all cores)")->capture_default_str();
  fit->add_option("--config", config, "flat key=value file; command-line flags win");

  // compare
  sfm::CompareOptions co;
  auto* compare = app.add_subcommand("compare", "Monte Carlo marginal log-likelihoods of two fitted models");
  add_data_options(compare, co.input);
  compare->add_option("--model-a", co.model_a, "model file written by fit")->required();
  compare->add_option("--model-b", co.model_b, "model file written by fit")->required();
  compare->add_option("--draws", co.draws, "comma-separated numbers of prior draws C")->capture_default_str();
  compare->add_option("--seed", co.seed)->capture_default_str();
  compare->add_option("--output", co.output, "report path")->capture_default_str();
  compare->add_option("--config", config, "flat key=value file; command-line flags win");

  // curves
  sfm::CurvesOptions cu;
  auto* curves = app.add_subcommand("curves", "baseline hazard and correlation-vs-distance curves as CSV");
  curves->add_option("--model", cu.model, "model file written by fit")->required();
  curves->add_option("--output", cu.output, "output prefix")->capture_default_str();
  curves->add_option("--points", cu.points, "grid size")->capture_default_str();
  curves->add_option("--max-time", cu.max_time, "end of the time grid (0: twice the last cutpoint)")
      ->capture_default_str();
  curves->add_option("--max-distance", cu.max_distance, "end of the distance grid in km")->capture_default_str();
  curves->add_option("--config", config, "flat key=value file; command-line flags win");

  // ph
  sfm::PhOptions po;
  auto* ph = app.add_subcommand("ph", "proportional hazards fit without frailty, with grouped-jackknife SEs");
  add_data_options(ph, po.input);
  ph->add_option("--cutpoints", po.cutpoints, "baseline cutpoints starting at 0");
  ph->add_option("--intervals", po.intervals)->capture_default_str();
  ph->add_option("--jackknife", po.jackknife, "leave-one-group-out variance")->capture_default_str();
  ph->add_option("--output", po.output, "output prefix")->capture_default_str();
  ph->add_option("--config", config, "flat key=value file; command-line flags win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? sfm::kExitSuccess : sfm::kExitUsage;
  }

  return sfm::run_guarded(
      [&]() -> int {
        CLI::App* active = app.get_subcommands().front();
        apply_config(active, config);
        if (active == simulate) {
          sim.sigma2 = sim_sigma2;
          sim.rho = sim_rho;
          const auto out = sfm::cmd_simulate(sim);
          for (const auto& f : out.datasets) std::cout << "wrote " << f << '\n';
          return sfm::kExitSuccess;
        }
        if (active == fit) {
          std::vector<sfm::FitOutcome> outcomes;
          const int code = sfm::cmd_fit(fo, &outcomes);
          for (const auto& o : outcomes) {
            std::cout << "wrote " << o.report_path << (o.fit.converged ? "" : " (not converged)") << '\n';
            if (!o.inference_error.empty()) std::cerr << "standard errors unavailable: " << o.inference_error << '\n';
          }
          return code;
        }
        if (active == compare) {
          const auto out = sfm::cmd_compare(co);
          std::cout << "preferred model " << out.preferred << "; report in " << co.output << '\n';
          return sfm::kExitSuccess;
        }
        if (active == curves) {
          const auto out = sfm::cmd_curves(cu);
          std::cout << "wrote " << out.hazard_path << " and " << out.correlation_path << '\n';
          return sfm::kExitSuccess;
        }
        const int code = sfm::cmd_ph(po);
        std::cout << "wrote " << po.output << ".report.txt\n";
        return code;
      },
      std::cerr);
}
