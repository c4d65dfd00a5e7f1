#include "sfm/spatial.hpp"

#include "sfm/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace sfm {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Exp: return "exp";
    case KernelKind::Pol: return "pol";
    case KernelKind::Identity: return "identity";
  }
  return "unknown";
}

KernelKind parse_kernel(std::string_view name) {
  if (name == "exp") return KernelKind::Exp;
  if (name == "pol") return KernelKind::Pol;
  if (name == "identity") return KernelKind::Identity;
  throw ValidationError("unknown kernel '" + std::string(name) + "' (expected exp, pol or identity)");
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double phi1 = a.lat * deg;
  const double phi2 = b.lat * deg;
  const double dphi = (b.lat - a.lat) * deg;
  const double dlambda = (b.lon - a.lon) * deg;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

namespace {

double point_distance(const GeoPoint& a, const GeoPoint& b, DistanceMetric metric) {
  if (metric == DistanceMetric::Haversine) return haversine_km(a, b);
  return std::hypot(a.lon - b.lon, a.lat - b.lat);
}

void check_coordinates(const GeoPoint& p, std::size_t index, DistanceMetric metric) {
  if (!std::isfinite(p.lon) || !std::isfinite(p.lat)) {
    throw ValidationError("location " + std::to_string(index) + " has non-finite coordinates");
  }
  if (metric == DistanceMetric::Haversine &&
      (p.lat < -90.0 || p.lat > 90.0 || p.lon < -180.0 || p.lon > 180.0)) {
    throw ValidationError("location " + std::to_string(index) + " is outside the lon/lat range");
  }
}

}  // namespace

DistanceMatrix::DistanceMatrix(Eigen::MatrixXd values) {
  if (values.rows() != values.cols()) throw ValidationError("distance matrix must be square");
  const Eigen::Index n = values.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values(i, i) != 0.0) {
      throw ValidationError("distance matrix diagonal entry " + std::to_string(i) + " is not zero");
    }
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dij = values(i, j);
      if (!std::isfinite(dij) || dij != values(j, i)) {
        throw ValidationError("distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      if (dij <= 0.0) {
        throw ValidationError("locations " + std::to_string(i) + " and " + std::to_string(j) +
                              " coincide; group identical locations first");
      }
    }
  }
  values_ = std::make_shared<const Eigen::MatrixXd>(std::move(values));
}

double DistanceMatrix::min_off_diagonal() const {
  double best = std::numeric_limits<double>::infinity();
  const auto& d = values();
  for (Eigen::Index j = 0; j < d.cols(); ++j)
    for (Eigen::Index i = j + 1; i < d.rows(); ++i) best = std::min(best, d(i, j));
  return best;
}

DistanceMatrix DistanceMatrix::subset(std::span<const int> indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = (*values_)(indices[i], indices[j]);
  return DistanceMatrix(std::move(out));
}

DistanceMatrix build_distance_matrix(std::span<const GeoPoint> locations, DistanceMetric metric) {
  const auto n = static_cast<Eigen::Index>(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) check_coordinates(locations[i], i, metric);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double dij = point_distance(locations[i], locations[j], metric);
      d(i, j) = dij;
      d(j, i) = dij;
    }
  }
  return DistanceMatrix(std::move(d));
}

LocationGrouping group_identical_locations(std::span<const GeoPoint> raw, double merge_tolerance_km,
                                           DistanceMetric metric) {
  LocationGrouping out;
  out.group_of.reserve(raw.size());
  for (const GeoPoint& p : raw) {
    int found = -1;
    for (std::size_t g = 0; g < out.locations.size(); ++g) {
      const GeoPoint& q = out.locations[g];
      const bool same = merge_tolerance_km > 0.0
                            ? point_distance(p, q, metric) <= merge_tolerance_km
                            : (p.lon == q.lon && p.lat == q.lat);
      if (same) {
        found = static_cast<int>(g);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(out.locations.size());
      out.locations.push_back(p);
    }
    out.group_of.push_back(found);
  }
  return out;
}

double CorrelationFactor::quad_form(const Eigen::VectorXd& b) const {
  const Eigen::VectorXd w = lower_.triangularView<Eigen::Lower>().solve(b);
  return w.squaredNorm();
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& d, double rho, KernelKind kernel) {
  const Eigen::Index n = d.rows();
  switch (kernel) {
    case KernelKind::Identity:
      return Eigen::MatrixXd::Identity(n, n);
    case KernelKind::Exp:
      return (-rho * d.array()).exp().matrix();
    case KernelKind::Pol: {
      Eigen::MatrixXd s(n, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dij = d(i, j);
          s(i, j) = (i == j || dij <= 0.0) ? 1.0 : 1.0 / (1.0 + std::exp(rho * std::log(dij)));
        }
      }
      return s;
    }
  }
  return {};
}

CorrelationFactor correlation_matrix(const DistanceMatrix& distances, double rho, KernelKind kernel) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    std::ostringstream msg;
    msg << "correlation parameter rho must be positive and finite, got " << rho;
    throw ValidationError(msg.str());
  }
  CorrelationFactor f;
  f.rho_ = rho;
  f.kernel_ = kernel;
  f.distances_ = distances;
  f.sigma_ = kernel_matrix(distances.values(), rho, kernel);
  const Eigen::Index n = f.sigma_.rows();

  if (kernel == KernelKind::Identity) {
    f.lower_ = Eigen::MatrixXd::Identity(n, n);
    f.inverse_ = Eigen::MatrixXd::Identity(n, n);
    f.log_det_ = 0.0;
    return f;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(f.sigma_);
  double jitter = 1e-10;
  while (llt.info() != Eigen::Success) {
    if (jitter > 1e-6 * (1.0 + 1e-9)) {
      std::ostringstream msg;
      msg << "correlation matrix (" << to_string(kernel) << ", rho=" << rho
          << ") is not positive definite even with jitter 1e-6";
      throw NumericalError(msg.str());
    }
    Eigen::MatrixXd loaded = f.sigma_;
    loaded.diagonal().array() += jitter;
    llt.compute(loaded);
    f.jitter_ = jitter;
    jitter *= 10.0;
  }
  f.lower_ = llt.matrixL();
  f.log_det_ = 2.0 * f.lower_.diagonal().array().log().sum();
  f.inverse_ = llt.solve(Eigen::MatrixXd::Identity(n, n));
  f.inverse_ = 0.5 * (f.inverse_ + f.inverse_.transpose()).eval();
  return f;
}

CorrelationFactor identity_correlation(Eigen::Index size) {
  CorrelationFactor f;
  f.kernel_ = KernelKind::Identity;
  f.sigma_ = Eigen::MatrixXd::Identity(size, size);
  f.lower_ = f.sigma_;
  f.inverse_ = f.sigma_;
  return f;
}

CorrelationDerivatives correlation_derivatives(const DistanceMatrix& distances, double rho,
                                               KernelKind kernel) {
  if (kernel == KernelKind::Identity) {
    throw ValidationError("the identity kernel has no correlation parameter to differentiate");
  }
  const auto& d = distances.values();
  const Eigen::Index n = d.rows();
  CorrelationDerivatives out{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dij = d(i, j);
      if (i == j || dij <= 0.0) continue;
      if (kernel == KernelKind::Exp) {
        const double e = std::exp(-rho * dij);
        out.first(i, j) = -dij * e;
        out.second(i, j) = dij * dij * e;
      } else {
        const double logd = std::log(dij);
        const double u = std::exp(rho * logd);
        const double onep = 1.0 + u;
        out.first(i, j) = -u * logd / (onep * onep);
        out.second(i, j) = -logd * logd * u * (1.0 - u) / (onep * onep * onep);
      }
    }
  }
  return out;
}

}  // namespace sfm
