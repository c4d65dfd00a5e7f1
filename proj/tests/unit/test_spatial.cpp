#include "oracles.hpp"

#include "sfm/error.hpp"
#include "sfm/spatial.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace sfm;

namespace {

DistanceMatrix random_distances(int n, std::mt19937_64& rng, double side = 5.0) {
  std::uniform_real_distribution<double> u(0.0, side);
  std::vector<GeoPoint> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) p = {u(rng), u(rng)};
  return build_distance_matrix(pts, DistanceMetric::Euclidean);
}

}  // namespace

TEST_CASE("haversine distance of one degree along a meridian") {
  CHECK(std::abs(haversine_km({0.0, 0.0}, {0.0, 1.0}) - 111.19) < 0.01);
  CHECK(haversine_km({10.0, 20.0}, {10.0, 20.0}) == 0.0);
}

TEST_CASE("distance matrix construction") {
  SUBCASE("single location gives a 1x1 zero matrix") {
    std::vector<GeoPoint> one{{1.0, 2.0}};
    const auto d = build_distance_matrix(one);
    REQUIRE(d.size() == 1);
    CHECK(d(0, 0) == 0.0);
  }
  SUBCASE("identical coordinates are rejected") {
    std::vector<GeoPoint> dup{{1.0, 2.0}, {1.0, 2.0}};
    CHECK_THROWS_AS(build_distance_matrix(dup), ValidationError);
  }
  SUBCASE("symmetric with zero diagonal") {
    std::mt19937_64 rng(4);
    const auto d = random_distances(12, rng);
    CHECK((d.values() - d.values().transpose()).norm() == 0.0);
    CHECK(d.values().diagonal().norm() == 0.0);
    CHECK(d.min_off_diagonal() > 0.0);
  }
  SUBCASE("invalid matrices") {
    Eigen::MatrixXd asym(2, 2);
    asym << 0, 1, 2, 0;
    CHECK_THROWS_AS(DistanceMatrix{asym}, ValidationError);
    Eigen::MatrixXd diag(2, 2);
    diag << 1, 1, 1, 0;
    CHECK_THROWS_AS(DistanceMatrix{diag}, ValidationError);
    CHECK_THROWS_AS(DistanceMatrix{Eigen::MatrixXd::Zero(2, 3)}, ValidationError);
  }
  SUBCASE("subset keeps the selected rows") {
    std::mt19937_64 rng(5);
    const auto d = random_distances(6, rng);
    std::vector<int> rows{4, 1, 5};
    const auto s = d.subset(rows);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(s(i, j) == d(rows[i], rows[j]));
  }
}

TEST_CASE("grouping identical locations") {
  std::vector<GeoPoint> pts{{1, 2}, {1, 2}, {3, 4}};
  auto g = group_identical_locations(pts);
  CHECK(g.group_of == std::vector<int>{0, 0, 1});
  CHECK(g.locations.size() == 2);

  std::vector<GeoPoint> distinct{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  g = group_identical_locations(distinct);
  CHECK(g.group_of == std::vector<int>{0, 1, 2, 3});

  // Household roster with clusters of size 1..11.
  std::mt19937_64 rng(9);
  std::vector<GeoPoint> roster;
  std::vector<int> sizes;
  for (int h = 0; h < 200; ++h) {
    const int size = 1 + h % 11;
    sizes.push_back(size);
    for (int k = 0; k < size; ++k) roster.push_back({0.001 * h, 0.002 * h});
  }
  std::shuffle(roster.begin(), roster.end(), rng);
  g = group_identical_locations(roster);
  CHECK(g.locations.size() == 200);
  std::vector<int> count(g.locations.size(), 0);
  for (int x : g.group_of) ++count[x];
  CHECK(*std::max_element(count.begin(), count.end()) == 11);
  CHECK(*std::min_element(count.begin(), count.end()) == 1);
  build_distance_matrix(g.locations);  // every pair is now distinct

  // Tolerance merging.
  std::vector<GeoPoint> near{{0, 0}, {0, 0.00001}, {0, 1}};
  CHECK(group_identical_locations(near, 0.01).locations.size() == 2);
  CHECK(group_identical_locations(near, 0.0).locations.size() == 3);
}

TEST_CASE("kernel values") {
  Eigen::MatrixXd d(2, 2);
  d << 0, 1, 1, 0;
  for (double rho : {0.1, 1.0, 3.7}) {
    const auto pol = correlation_matrix(DistanceMatrix(d), rho, KernelKind::Pol);
    CHECK(pol.matrix()(0, 1) == doctest::Approx(0.5));
    for (auto kind : {KernelKind::Exp, KernelKind::Pol}) {
      const auto c = correlation_matrix(DistanceMatrix(d), rho, kind);
      CHECK(c.matrix().diagonal().isOnes());
    }
  }
  Eigen::MatrixXd d2(2, 2);
  d2 << 0, std::log(2.0), std::log(2.0), 0;
  CHECK(correlation_matrix(DistanceMatrix(d2), 1.0, KernelKind::Exp).matrix()(0, 1) == doctest::Approx(0.5));
  CHECK(parse_kernel("pol") == KernelKind::Pol);
  CHECK(to_string(KernelKind::Identity) == "identity");
  CHECK_THROWS_AS(parse_kernel("gauss"), ValidationError);
}

TEST_CASE("factorization is consistent on random instances") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_distances(15, rng);
    // 1 / (1 + d^rho) is only guaranteed positive definite in the plane for rho <= 2.
    const double rho = 0.1 + 0.1 * rep;
    for (auto kind : {KernelKind::Exp, KernelKind::Pol}) {
      const auto c = correlation_matrix(d, rho, kind);
      const Eigen::MatrixXd ref = oracle::kernel(d.values(), rho, kind);
      CHECK((c.matrix() - ref).cwiseAbs().maxCoeff() < 1e-14);
      const Eigen::MatrixXd loaded = ref + c.jitter() * Eigen::MatrixXd::Identity(15, 15);
      const Eigen::MatrixXd l = c.lower();
      CHECK((l * l.transpose() - loaded).norm() < 1e-10);
      CHECK((c.inverse() * loaded - Eigen::MatrixXd::Identity(15, 15)).norm() < 1e-8);
      CHECK(c.log_det() == doctest::Approx(std::log(loaded.determinant())).epsilon(1e-9));
      Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(15, -1.0, 2.0);
      CHECK(c.quad_form(b) == doctest::Approx(b.dot(loaded.lu().solve(b))).epsilon(1e-9));
    }
  }
}

TEST_CASE("an indefinite pol matrix is a numerical error") {
  // Four corners of a unit square: with a large exponent the diagonal pairs decorrelate
  // much faster than the sides.
  std::vector<GeoPoint> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::vector<GeoPoint> pts;
  for (int k = 0; k < 3; ++k)
    for (const auto& p : sq) pts.push_back({p.lon + 0.37 * k, p.lat + 0.61 * k * k});
  const auto d = build_distance_matrix(pts, DistanceMetric::Euclidean);
  CHECK_NOTHROW(correlation_matrix(d, 1.0, KernelKind::Pol));
  bool threw = false;
  for (double rho : {20.0, 40.0, 80.0}) {
    try {
      correlation_matrix(d, rho, KernelKind::Pol);
    } catch (const NumericalError&) {
      threw = true;
    }
  }
  CHECK(threw);
}

TEST_CASE("exp kernel tends to the identity as rho grows") {
  std::mt19937_64 rng(2);
  const auto d = random_distances(8, rng);
  const auto c = correlation_matrix(d, 1e3, KernelKind::Exp);
  CHECK((c.matrix() - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
  const auto id = identity_correlation(8);
  CHECK(id.matrix().isIdentity());
  CHECK(id.log_det() == 0.0);
}

TEST_CASE("near-singular correlation gets diagonal jitter") {
  // Two points almost on top of each other relative to the range.
  Eigen::MatrixXd d(3, 3);
  d << 0, 1e-18, 5, 1e-18, 0, 5, 5, 5, 0;
  const auto c = correlation_matrix(DistanceMatrix(d), 1.0, KernelKind::Exp);
  CHECK(c.jitter() >= 1e-10);
  CHECK(c.jitter() <= 1e-6);
  // The stored Sigma is not loaded.
  CHECK(c.matrix()(0, 0) == 1.0);
}

TEST_CASE("derivatives in rho match central differences") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = random_distances(6, rng);
    const double rho = 0.3 + 0.25 * rep;
    for (auto kind : {KernelKind::Exp, KernelKind::Pol}) {
      const auto der = correlation_derivatives(d, rho, kind);
      const double h = 1e-5;
      const Eigen::MatrixXd up = kernel_matrix(d.values(), rho + h, kind);
      const Eigen::MatrixXd dn = kernel_matrix(d.values(), rho - h, kind);
      const Eigen::MatrixXd mid = kernel_matrix(d.values(), rho, kind);
      const Eigen::MatrixXd fd1 = (up - dn) / (2 * h);
      const Eigen::MatrixXd fd2 = (up - 2 * mid + dn) / (h * h);
      CHECK((der.first - fd1).cwiseAbs().maxCoeff() < 1e-6);
      const double h2 = 1e-4;
      const auto up_d = correlation_derivatives(d, rho + h2, kind).first;
      const auto dn_d = correlation_derivatives(d, rho - h2, kind).first;
      CHECK((der.second - (up_d - dn_d) / (2 * h2)).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((der.second - fd2).cwiseAbs().maxCoeff() < 1e-3);
      CHECK(der.first.diagonal().cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("exp correlations decrease with rho") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = random_distances(7, rng);
    const Eigen::MatrixXd a = kernel_matrix(d.values(), 0.5, KernelKind::Exp);
    const Eigen::MatrixXd b = kernel_matrix(d.values(), 0.9, KernelKind::Exp);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        if (i != j) CHECK(b(i, j) < a(i, j));
  }
}
