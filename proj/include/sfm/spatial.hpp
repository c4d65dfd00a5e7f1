#pragma once

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sfm {

// Correlation structure of the frailty vector.
//   Exp:      Sigma_ij = exp(-rho d_ij)
//   Pol:      Sigma_ij = 1 / (1 + d_ij^rho)
//   Identity: independent frailties, rho unused
enum class KernelKind { Exp, Pol, Identity };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel(std::string_view name);

struct GeoPoint {
  double lon = 0.0;  // degrees
  double lat = 0.0;  // degrees
};

enum class DistanceMetric { Haversine, Euclidean };

inline constexpr double kEarthRadiusKm = 6371.0;

double haversine_km(const GeoPoint& a, const GeoPoint& b);

// Symmetric G x G matrix of inter-location distances in kilometres.
// Storage is shared and immutable, so copies are cheap.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  // Validates zero diagonal, symmetry, and strictly positive off-diagonal entries.
  explicit DistanceMatrix(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const { return *values_; }
  Eigen::Index size() const { return values_ ? values_->rows() : 0; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return (*values_)(i, j); }
  double min_off_diagonal() const;

  DistanceMatrix subset(std::span<const int> indices) const;

 private:
  std::shared_ptr<const Eigen::MatrixXd> values_ = std::make_shared<const Eigen::MatrixXd>();
};

// Great-circle distances (radius 6371 km) for Haversine; plain planar distances otherwise,
// in which case coordinates are interpreted as kilometres.
DistanceMatrix build_distance_matrix(std::span<const GeoPoint> locations,
                                     DistanceMetric metric = DistanceMetric::Haversine);

struct LocationGrouping {
  std::vector<int> group_of;        // subject -> group, first-appearance order
  std::vector<GeoPoint> locations;  // one per group
};

// Subjects sharing a coordinate pair share a frailty group. With merge_tolerance_km > 0 a
// subject joins the first existing group whose representative lies within the tolerance.
LocationGrouping group_identical_locations(std::span<const GeoPoint> raw,
                                           double merge_tolerance_km = 0.0,
                                           DistanceMetric metric = DistanceMetric::Haversine);

// Correlation matrix Sigma(rho) with its Cholesky factor and inverse.
class CorrelationFactor {
 public:
  const Eigen::MatrixXd& matrix() const { return sigma_; }
  const Eigen::MatrixXd& lower() const { return lower_; }
  const Eigen::MatrixXd& inverse() const { return inverse_; }
  double log_det() const { return log_det_; }
  double rho() const { return rho_; }
  KernelKind kernel() const { return kernel_; }
  // Diagonal loading that was needed for the factorization to succeed (0 when none).
  double jitter() const { return jitter_; }
  const DistanceMatrix& distances() const { return distances_; }
  Eigen::Index size() const { return sigma_.rows(); }

  // b' Sigma^{-1} b
  double quad_form(const Eigen::VectorXd& b) const;

 private:
  friend CorrelationFactor correlation_matrix(const DistanceMatrix&, double, KernelKind);
  friend CorrelationFactor identity_correlation(Eigen::Index);

  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd inverse_;
  double log_det_ = 0.0;
  double rho_ = 1.0;
  KernelKind kernel_ = KernelKind::Identity;
  double jitter_ = 0.0;
  DistanceMatrix distances_;
};

// Elementwise kernel evaluation without factorization.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& distances, double rho, KernelKind kernel);

// Builds Sigma(rho) and factorizes it. If the plain Cholesky fails, diagonal jitter
// 1e-10 I is added and escalated by factors of ten up to 1e-6 I before giving up.
CorrelationFactor correlation_matrix(const DistanceMatrix& distances, double rho, KernelKind kernel);

// Identity correlation of the given size, for models without spatial structure.
CorrelationFactor identity_correlation(Eigen::Index size);

struct CorrelationDerivatives {
  Eigen::MatrixXd first;   // d Sigma / d rho
  Eigen::MatrixXd second;  // d^2 Sigma / d rho^2
};

CorrelationDerivatives correlation_derivatives(const DistanceMatrix& distances, double rho,
                                               KernelKind kernel);

}  // namespace sfm
