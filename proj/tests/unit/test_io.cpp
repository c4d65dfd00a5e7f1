#include "sfm/error.hpp"
#include "sfm/io.hpp"
#include "sfm/simulate.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

using namespace sfm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sfm_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(file(name)) << text;
    return file(name);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("subject table round trip") {
  TempDir dir;
  ScenarioOptions opt;
  opt.groups = 40;
  opt.censoring = 0.3;
  Rng rng(1);
  const Scenario sc = generate_scenario(opt, rng);
  const std::string path = dir.file("data.csv");
  write_subject_table(path, sc.data, sc.locations, true);
  const SubjectTable t = read_subject_table(path, 2);
  CHECK(t.time == sc.data.time);
  CHECK(t.status == sc.data.status);
  CHECK(t.covariates == sc.data.covariates);
  CHECK(t.group == sc.data.group);
  REQUIRE(t.has_coordinates());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const GeoPoint& p = sc.locations[static_cast<std::size_t>(sc.data.group[i])];
    CHECK(t.coordinates[static_cast<std::size_t>(i)].lon == p.lon);
    CHECK(t.coordinates[static_cast<std::size_t>(i)].lat == p.lat);
  }

  write_subject_table(path, sc.data, {}, false);
  const SubjectTable bare = read_subject_table(path);
  CHECK_FALSE(bare.has_coordinates());
  CHECK_FALSE(bare.has_group());
  CHECK(bare.ids.front() == "1");
}

TEST_CASE("subject table schema errors") {
  TempDir dir;
  const std::string ok = "id,time,status,z1\na,1.0,1,0\n";
  CHECK_NOTHROW(read_subject_table(dir.write("ok.csv", ok)));

  std::string msg = error_of([&] { read_subject_table(dir.write("a.csv", ok), 2); });
  CHECK(msg.find("a.csv:1:") != std::string::npos);
  CHECK(msg.find("expected columns: id,time,status,z1..z2[,lon,lat][,group]") != std::string::npos);

  msg = error_of([&] { read_subject_table(dir.write("b.csv", "id,time,status,z1\na,1.0,1,0\nb,-1,0,1\n")); });
  CHECK(msg.find("b.csv:3:") != std::string::npos);
  CHECK(msg.find("time") != std::string::npos);

  msg = error_of([&] { read_subject_table(dir.write("c.csv", "id,time,status,z1\na,1.0,2,0\n")); });
  CHECK(msg.find("c.csv:2:") != std::string::npos);
  CHECK(msg.find("status") != std::string::npos);

  msg = error_of([&] { read_subject_table(dir.write("d.csv", "id,time,status,z1\na,1.0,1\n")); });
  CHECK(msg.find("d.csv:2:") != std::string::npos);

  msg = error_of([&] { read_subject_table(dir.write("e.csv", "id,time,status,z1\na,x,1,0\n")); });
  CHECK(msg.find("'x' is not a finite number") != std::string::npos);

  CHECK_FALSE(error_of([&] { read_subject_table(dir.write("f.csv", "id,time,z1\n")); }).empty());
  CHECK_FALSE(error_of([&] { read_subject_table(dir.write("g.csv", "id,time,status,z2\na,1,1,0\n")); }).empty());
  CHECK_FALSE(error_of([&] { read_subject_table(dir.write("h.csv", "id,time,status,lon\na,1,1,0\n")); }).empty());
  CHECK_FALSE(error_of([&] { read_subject_table(dir.write("i.csv", "id,time,status\n")); }).empty());
  CHECK_FALSE(error_of([&] { read_subject_table(dir.write("j.csv", "")); }).empty());
  CHECK_FALSE(error_of([&] { read_subject_table(dir.file("missing.csv")); }).empty());
}

TEST_CASE("distance matrix files") {
  TempDir dir;
  const DistanceMatrix d = read_distance_matrix(dir.write("d.csv", "0,1.5,2\n1.5,0,3\n2,3,0\n"));
  CHECK(d.size() == 3);
  CHECK(d(1, 2) == 3.0);
  const DistanceMatrix h = read_distance_matrix(dir.write("h.csv", "a,b,c\n0,1.5,2\n1.5,0,3\n2,3,0\n"));
  CHECK(h.values() == d.values());

  write_distance_matrix(dir.file("w.csv"), d);
  CHECK(read_distance_matrix(dir.file("w.csv")).values() == d.values());

  CHECK_THROWS_AS(read_distance_matrix(dir.write("r.csv", "0,1\n1,0,2\n")), ValidationError);
  CHECK_THROWS_AS(read_distance_matrix(dir.write("s.csv", "0,1,2\n1,0,2\n")), ValidationError);
  CHECK_THROWS_AS(read_distance_matrix(dir.write("n.csv", "0,1\n1,x\n")), ValidationError);
  CHECK_THROWS_AS(read_distance_matrix(dir.write("a.csv", "0,1\n2,0\n")), ValidationError);
}

TEST_CASE("key=value files and parameter records") {
  TempDir dir;
  const KeyValues kv = read_key_values(dir.write("k.txt", "# comment\nalpha = 1\n\nbeta=x,y\n"));
  CHECK(find_value(kv, "alpha") == "1");
  CHECK(find_value(kv, "beta") == "x,y");
  CHECK_FALSE(find_value(kv, "gamma"));
  CHECK_THROWS_AS(require_value(kv, "gamma", "k.txt"), ValidationError);
  CHECK_THROWS_AS(read_key_values(dir.write("bad.txt", "novalue\n")), ValidationError);

  ModelParams p = default_truth(ScenarioModel::M2);
  p.sigma2 = 0.1 + 0.2;  // not exactly representable in short decimal
  write_key_values(dir.file("m.txt"), params_to_key_values(p));
  const ModelParams q = params_from_key_values(read_key_values(dir.file("m.txt")), "m.txt");
  CHECK(q.to_vector() == p.to_vector());
  CHECK(q.kernel == KernelKind::Pol);
  CHECK(q.baseline.cutpoints() == p.baseline.cutpoints());

  CHECK(parse_double(format_double(1.0 / 3.0), "x") == 1.0 / 3.0);
  CHECK(parse_list("1, 2.5,3", "x") == std::vector<double>{1.0, 2.5, 3.0});
  CHECK_THROWS_AS(parse_double("1.0abc", "x"), ValidationError);
  CHECK_THROWS_AS(parse_list("1,,2", "x"), ValidationError);
}
