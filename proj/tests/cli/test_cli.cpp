// Runs the sfm executable end to end in a scratch directory.

#include "sfm/baselines.hpp"
#include "sfm/commands.hpp"
#include "sfm/io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

using namespace sfm;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("sfm_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string at(const std::string& name) { return (scratch() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run sfm_cli(const std::string& args) {
  const std::string o = at("stdout.txt"), e = at("stderr.txt");
  const std::string cmd = "cd '" + scratch().string() + "' && '" SFM_BINARY "' " + args + " >'" + o + "' 2>'" + e + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

long count_lines(const std::string& path) {
  std::ifstream in(path);
  long n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

const std::string kQuickFit =
    " --cutpoints 0,0.2,0.8 --burn-in 20 --max-iterations 60 --warmup-sweeps 20 --sweeps 2"
    " --fisher-burn-in 20 --fisher-draws 200 --mc-draws 500";

// A small M4 dataset shared by the fitting tests.
const std::string& small_data() {
  static const std::string path = [] {
    const Run r = sfm_cli("simulate --model M4 --subjects 200 --groups 20 --seed 3 --output small");
    REQUIRE(r.code == 0);
    return at("small.csv");
  }();
  return path;
}

}  // namespace

TEST_CASE("simulate writes reproducible datasets") {
  Run r = sfm_cli("simulate --seed 11 --output a");
  REQUIRE(r.code == 0);
  CHECK(count_lines(at("a.csv")) == 301);
  CHECK(fs::exists(at("a.dist.csv")));
  const KeyValues truth = read_key_values(at("a.truth.txt"));
  CHECK(find_value(truth, "scenario") == "M1");
  CHECK(find_value(truth, "config.seed") == "11");

  REQUIRE(sfm_cli("simulate --seed 11 --output b").code == 0);
  CHECK(slurp(at("a.csv")) == slurp(at("b.csv")));
  REQUIRE(sfm_cli("simulate --seed 12 --output c").code == 0);
  CHECK(slurp(at("a.csv")) != slurp(at("c.csv")));

  REQUIRE(sfm_cli("simulate --model M3 --replications 3 --output rep").code == 0);
  for (int k = 1; k <= 3; ++k) CHECK(fs::exists(at("rep_r" + std::to_string(k) + ".csv")));
  CHECK_FALSE(fs::exists(at("rep_r1.dist.csv")));
}

TEST_CASE("invalid input is a usage error naming the field") {
  Run r = sfm_cli("simulate --censoring 1.2");
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("censoring") != std::string::npos);

  r = sfm_cli("simulate --model M7");
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("model") != std::string::npos);

  CHECK(sfm_cli("frobnicate").code == kExitUsage);
  CHECK(sfm_cli("fit").code == kExitUsage);
  CHECK(sfm_cli("--help").code == kExitSuccess);

  // A covariate column missing relative to the model being compared.
  std::ofstream(at("nocov.csv")) << "id,time,status,z1\n1,0.5,1,0\n2,0.7,0,1\n";
  std::ofstream(at("two.model.txt")) << "kernel=identity\ncutpoints=0\nhazards=1\nbeta=0.1,0.2\nsigma2=1\n";
  r = sfm_cli("compare --data nocov.csv --model-a two.model.txt --model-b two.model.txt");
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("id,time,status,z1..z2") != std::string::npos);
}

TEST_CASE("fit, compare, curves and ph round trip") {
  const std::string data = small_data();

  Run r = sfm_cli("fit --data small.csv --kernel identity --output m4" + kQuickFit);
  REQUIRE(r.code != kExitUsage);
  const KeyValues model = read_key_values(at("m4.model.txt"));
  CHECK(find_value(model, "kernel") == "identity");
  const std::string report = slurp(at("m4.report.txt"));
  CHECK(report.find("Frailty variance sigma2") != std::string::npos);
  CHECK(report.find("HR") != std::string::npos);
  CHECK(count_lines(at("m4.trace.csv")) > 20);
  CHECK(count_lines(at("m4.estimates.csv")) >= 7);

  SUBCASE("identity kernel reproduces the independent-frailty fit") {
    FitOptions fo;
    fo.input.data = data;
    fo.kernel = "identity";
    fo.cutpoints = "0,0.2,0.8";
    fo.burn_in = 20;
    fo.max_iterations = 60;
    fo.warmup_sweeps = 20;
    fo.sweeps = 2;
    fo.fisher_burn_in = 20;
    fo.fisher_draws = 200;
    fo.mc_draws = 0;
    fo.output = at("lib");
    std::vector<FitOutcome> out;
    cmd_fit(fo, &out);
    Rng rng = substream(1, 0);
    SaemConfig cfg = fo.saem_config();
    const FitResult m4 = fit_univariate_frailty(out[0].prepared.data, {0.0, 0.2, 0.8}, cfg, rng);
    CHECK(m4.params.to_vector() == out[0].fit.params.to_vector());
    const ModelParams cli = params_from_key_values(model, "m4");
    CHECK((cli.to_vector() - m4.params.to_vector()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("same model compared with itself") {
    r = sfm_cli("compare --data small.csv --model-a m4.model.txt --model-b m4.model.txt --draws 100,400 --output cmp.txt");
    REQUIRE(r.code == 0);
    const std::string rep = slurp(at("cmp.txt"));
    CHECK(rep.find("likelihood ratio statistic: 0.000") != std::string::npos);
    CHECK(rep.find("p-value (0.5 chi2(0) + 0.5 chi2(1)): 1.000") != std::string::npos);
  }
  SUBCASE("curves") {
    std::ofstream(at("pol.model.txt")) << "kernel=pol\ncutpoints=0,0.2,0.8\nhazards=2,0.5,1\nbeta=1\nsigma2=1\nrho=1\n";
    r = sfm_cli("curves --model pol.model.txt --output pol --points 201 --max-distance 4");
    REQUIRE(r.code == 0);
    const auto corr = read_csv(at("pol.correlation.csv"));
    CHECK(corr.front()[1] == 1.0);
    CHECK(corr[50][0] == 1.0);
    CHECK(corr[50][1] == doctest::Approx(0.5).epsilon(1e-12));
    const auto haz = read_csv(at("pol.hazard.csv"));
    double integral = 0.0;
    bool ok = true;
    for (std::size_t k = 1; k < haz.size(); ++k) {
      integral += 0.5 * (haz[k][1] + haz[k - 1][1]) * (haz[k][0] - haz[k - 1][0]);
      ok = ok && std::abs(integral - haz[k][2]) < 1e-3;
    }
    CHECK(ok);
    CHECK(haz.back()[0] == doctest::Approx(1.6));
  }
  SUBCASE("ph with jackknife") {
    r = sfm_cli("ph --data small.csv --cutpoints 0,0.2,0.8 --output ph");
    REQUIRE(r.code == 0);
    const std::string rep = slurp(at("ph.report.txt"));
    CHECK(rep.find("Jackknife SE") != std::string::npos);
    CHECK(rep.find("NA") == std::string::npos);
  }
}

TEST_CASE("config files fill options and flags win") {
  small_data();
  std::ofstream(at("sim.cfg")) << "# scenario\nmodel=M3\nsubjects=50\nseed=5\noutput=cfg\n";
  REQUIRE(sfm_cli("simulate --config sim.cfg --subjects 40").code == 0);
  CHECK(count_lines(at("cfg.csv")) == 41);
  CHECK(find_value(read_key_values(at("cfg.truth.txt")), "scenario") == "M3");

  std::ofstream(at("bad.cfg")) << "nonsense=1\n";
  const Run r = sfm_cli("simulate --config bad.cfg");
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("nonsense") != std::string::npos);

  std::ofstream(at("fit.cfg")) << "kernel=exp\nburn-in=2\nmax-iterations=5\nwarmup-sweeps=5\nsweeps=1\ntolerance=1e-15\n"
                                  "fisher-burn-in=5\nfisher-draws=50\nmc-draws=0\ncutpoints=0,0.5\n";
  const Run f = sfm_cli("fit --data small.csv --config fit.cfg --output capped");
  // No five-iteration run meets a 1e-15 tolerance.
  CHECK((f.code == kExitNotConverged || f.code == kExitNumerical));
  CHECK(slurp(at("capped.report.txt")).find("converged: no after 5 iterations") != std::string::npos);
}
