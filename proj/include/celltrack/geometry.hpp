#pragma once

// Ellipse primitives: direct least-squares fitting, perimeter, eccentricity,
// point-to-boundary distance, directed Hausdorff distance and rasterized IoU.
// Everything here is a pure function over values and is templated on the
// scalar type; the rest of the library uses the double aliases.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "celltrack/error.hpp"

namespace celltrack {

template <typename Scalar>
using Point2T = Eigen::Matrix<Scalar, 2, 1>;
using Point2 = Point2T<double>;

template <typename Scalar>
struct EllipseT {
  Point2T<Scalar> center = Point2T<Scalar>::Zero();
  Scalar a = 1;      // semi-major
  Scalar b = 1;      // semi-minor
  Scalar theta = 0;  // major-axis orientation in [0, pi)

  Scalar cx() const { return center.x(); }
  Scalar cy() const { return center.y(); }
  Scalar area() const { return std::numbers::pi_v<Scalar> * a * b; }

  /// Coordinates of p in the ellipse frame (major axis along +x).
  Point2T<Scalar> to_local(const Point2T<Scalar>& p) const {
    const Scalar c = std::cos(theta), s = std::sin(theta);
    const Point2T<Scalar> d = p - center;
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
  }

  Point2T<Scalar> point_at(Scalar t) const {
    const Scalar c = std::cos(theta), s = std::sin(theta);
    const Scalar u = a * std::cos(t), v = b * std::sin(t);
    return center + Point2T<Scalar>(c * u - s * v, s * u + c * v);
  }

  /// Implicit value (x/a)^2 + (y/b)^2 in the local frame; < 1 means inside.
  Scalar level(const Point2T<Scalar>& p) const {
    const Point2T<Scalar> q = to_local(p);
    return (q.x() / a) * (q.x() / a) + (q.y() / b) * (q.y() / b);
  }

  bool contains(const Point2T<Scalar>& p) const { return level(p) < Scalar(1); }

  /// Half widths of the axis-aligned bounding box.
  Point2T<Scalar> half_extent() const {
    const Scalar c = std::cos(theta), s = std::sin(theta);
    return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
  }
};

using Ellipse = EllipseT<double>;

template <typename Scalar>
Scalar normalize_angle(Scalar theta) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  Scalar t = std::fmod(theta, pi);
  if (t < 0) t += pi;
  if (t >= pi) t -= pi;
  return t;
}

/// Builds an ellipse in normalized form: a >= b > 0 and theta in [0, pi).
template <std::floating_point Scalar>
EllipseT<Scalar> make_ellipse(Scalar cx, Scalar cy, Scalar r1, Scalar r2, Scalar theta) {
  if (!(r1 > 0) || !(r2 > 0) || !std::isfinite(r1) || !std::isfinite(r2))
    throw Error(ErrorCode::DegenerateInput, "ellipse semi-axes must be positive and finite");
  EllipseT<Scalar> e;
  e.center = {cx, cy};
  if (r1 >= r2) {
    e.a = r1;
    e.b = r2;
    e.theta = normalize_angle(theta);
  } else {
    e.a = r2;
    e.b = r1;
    e.theta = normalize_angle(theta + std::numbers::pi_v<Scalar> / 2);
  }
  return e;
}

inline Ellipse make_ellipse(double cx, double cy, double r1, double r2, double theta) {
  return make_ellipse<double>(cx, cy, r1, r2, theta);
}

/// n points evenly spaced in the parametric angle, starting at t0.
template <typename Scalar>
std::vector<Point2T<Scalar>> sample_boundary(const EllipseT<Scalar>& e, std::size_t n, Scalar t0 = 0,
                                             Scalar t1 = 2 * std::numbers::pi_v<Scalar>) {
  std::vector<Point2T<Scalar>> pts;
  pts.reserve(n);
  const bool closed = std::abs(t1 - t0 - 2 * std::numbers::pi_v<Scalar>) < Scalar(1e-12);
  const Scalar step = closed ? (t1 - t0) / Scalar(n) : (n > 1 ? (t1 - t0) / Scalar(n - 1) : 0);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(e.point_at(t0 + step * Scalar(i)));
  return pts;
}

// ---------------------------------------------------------------------------
// Fitting

namespace detail {

/// Conic A x^2 + B xy + C y^2 + D x + E y + F = 0 to center/axes/angle.
/// Returns false when the conic is not a real ellipse.
template <typename Scalar>
bool conic_to_ellipse(const Eigen::Matrix<Scalar, 6, 1>& k, EllipseT<Scalar>& out) {
  const Scalar A = k[0], B = k[1], C = k[2], D = k[3], E = k[4], F = k[5];
  if (!(4 * A * C - B * B > 0)) return false;
  Eigen::Matrix<Scalar, 2, 2> H;
  H << 2 * A, B, B, 2 * C;
  const Point2T<Scalar> c = H.ldlt().solve(Point2T<Scalar>(-D, -E));
  if (!c.allFinite()) return false;
  const Scalar f0 = A * c.x() * c.x() + B * c.x() * c.y() + C * c.y() * c.y() + D * c.x() + E * c.y() + F;
  Eigen::Matrix<Scalar, 2, 2> Q;
  Q << A, B / 2, B / 2, C;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 2, 2>> es(Q);
  Eigen::Matrix<Scalar, 2, 1> lambda = es.eigenvalues();
  Scalar rhs = -f0;
  if (rhs < 0) {
    lambda = -lambda;
    rhs = -rhs;
  }
  if (!(lambda[0] > 0 && lambda[1] > 0 && rhs > 0)) return false;
  // Smallest eigenvalue <-> longest axis. After a sign flip the order reverses.
  const int major = lambda[0] <= lambda[1] ? 0 : 1;
  const int minor = 1 - major;
  const Scalar a = std::sqrt(rhs / lambda[major]);
  const Scalar b = std::sqrt(rhs / lambda[minor]);
  if (!std::isfinite(a) || !std::isfinite(b) || !(b > 0)) return false;
  const Point2T<Scalar> dir = es.eigenvectors().col(major);
  out.center = c;
  out.a = a;
  out.b = std::min(a, b);
  out.theta = normalize_angle(std::atan2(dir.y(), dir.x()));
  return true;
}

}  // namespace detail

/// Direct least-squares ellipse fit with the ellipse-specific constraint
/// 4AC - B^2 = 1 (numerically stable block formulation). Points are centered
/// and scaled before fitting. Requires at least 7 non-collinear points.
template <typename Scalar>
EllipseT<Scalar> fit_ellipse(std::span<const Point2T<Scalar>> points) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  constexpr std::size_t kMinPoints = 7;
  if (points.size() < kMinPoints) throw Error(ErrorCode::DegenerateInput, "ellipse fit needs at least 7 points");

  Point2T<Scalar> mean = Point2T<Scalar>::Zero();
  for (const auto& p : points) mean += p;
  mean /= Scalar(points.size());
  Eigen::Matrix<Scalar, 2, 2> cov = Eigen::Matrix<Scalar, 2, 2>::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  cov /= Scalar(points.size());
  const Scalar spread = std::sqrt(cov.trace() / 2);
  if (!(spread > 0) || !std::isfinite(spread)) throw Error(ErrorCode::DegenerateInput, "points coincide");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 2, 2>> ces(cov);
  if (ces.eigenvalues()[0] <= Scalar(1e-10) * ces.eigenvalues()[1])
    throw Error(ErrorCode::DegenerateInput, "points are collinear");

  Mat3 S1 = Mat3::Zero(), S2 = Mat3::Zero(), S3 = Mat3::Zero();
  for (const auto& p : points) {
    const Point2T<Scalar> q = (p - mean) / spread;
    const Vec3 d1(q.x() * q.x(), q.x() * q.y(), q.y() * q.y());
    const Vec3 d2(q.x(), q.y(), Scalar(1));
    S1 += d1 * d1.transpose();
    S2 += d1 * d2.transpose();
    S3 += d2 * d2.transpose();
  }
  Eigen::FullPivLU<Mat3> lu3(S3);
  if (!lu3.isInvertible()) throw Error(ErrorCode::DegenerateInput, "singular scatter matrix");
  const Mat3 T = -lu3.solve(S2.transpose());
  const Mat3 M = S1 + S2 * T;
  Mat3 R;  // inverse of the constraint block applied to M
  R.row(0) = M.row(2) / 2;
  R.row(1) = -M.row(1);
  R.row(2) = M.row(0) / 2;

  Eigen::EigenSolver<Mat3> es(R);
  int best = -1;
  Scalar best_cond = 0;
  for (int i = 0; i < 3; ++i) {
    const Vec3 v = es.eigenvectors().col(i).real();
    const Scalar cond = 4 * v[0] * v[2] - v[1] * v[1];
    if (cond > best_cond) {
      best_cond = cond;
      best = i;
    }
  }
  if (best < 0) throw Error(ErrorCode::DegenerateInput, "algebraic fit is not an ellipse");
  const Vec3 a1 = es.eigenvectors().col(best).real();
  const Vec3 a2 = T * a1;
  Eigen::Matrix<Scalar, 6, 1> conic;
  conic << a1, a2;

  EllipseT<Scalar> local;
  if (!detail::conic_to_ellipse(conic, local))
    throw Error(ErrorCode::DegenerateInput, "algebraic fit is not an ellipse");
  EllipseT<Scalar> e;
  e.center = mean + spread * local.center;
  e.a = spread * local.a;
  e.b = spread * local.b;
  e.theta = local.theta;
  if (!e.center.allFinite() || !std::isfinite(e.a) || !std::isfinite(e.b))
    throw Error(ErrorCode::DegenerateInput, "ellipse fit produced non-finite parameters");
  return e;
}

template <typename Scalar>
EllipseT<Scalar> fit_ellipse(const std::vector<Point2T<Scalar>>& points) {
  return fit_ellipse(std::span<const Point2T<Scalar>>(points));
}

// ---------------------------------------------------------------------------
// Measurements

/// Ramanujan's second perimeter approximation.
template <typename Scalar>
Scalar circumference(const EllipseT<Scalar>& e) {
  const Scalar s = e.a + e.b;
  const Scalar h = ((e.a - e.b) / s) * ((e.a - e.b) / s);
  return std::numbers::pi_v<Scalar> * s * (1 + 3 * h / (10 + std::sqrt(4 - 3 * h)));
}

template <typename Scalar>
Scalar eccentricity(const EllipseT<Scalar>& e) {
  const Scalar r = e.b / e.a;
  return std::sqrt(std::max(Scalar(0), 1 - r * r));
}

template <typename Scalar>
struct BoundaryDistance {
  Scalar distance;
  bool inside;  // strictly inside the ellipse
};

namespace detail {

// Root of F(s) = (r0 z0 / (s + r0))^2 + (z1 / (s + 1))^2 - 1 on its bracket.
// F is strictly decreasing for s > -1, so the root is unique; Newton steps are
// taken while they stay inside the bracket, bisection otherwise.
template <typename Scalar>
Scalar lagrange_root(Scalar r0, Scalar z0, Scalar z1, Scalar g) {
  const Scalar n0 = r0 * z0;
  Scalar lo = z1 - 1;
  Scalar hi = g < 0 ? Scalar(0) : std::hypot(n0, z1) - 1;
  Scalar s = (lo + hi) / 2;
  constexpr int kMaxIterations = 64;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Scalar q0 = n0 / (s + r0), q1 = z1 / (s + 1);
    const Scalar f = q0 * q0 + q1 * q1 - 1;
    if (f == 0) return s;
    if (f > 0)
      lo = s;
    else
      hi = s;
    const Scalar df = -2 * q0 * q0 / (s + r0) - 2 * q1 * q1 / (s + 1);
    Scalar next = s - f / df;
    if (!(next > lo && next < hi)) next = (lo + hi) / 2;
    if (std::abs(next - s) <= Scalar(1e-15) * std::max(Scalar(1), std::abs(s))) return next;
    s = next;
  }
  return s;
}

}  // namespace detail

/// Euclidean distance from p to the ellipse boundary, and whether p lies
/// strictly inside. Works in the first quadrant of the ellipse frame and
/// solves the closest-point condition for its Lagrange multiplier.
template <typename Scalar>
BoundaryDistance<Scalar> point_ellipse_distance(const Point2T<Scalar>& p, const EllipseT<Scalar>& e) {
  const Point2T<Scalar> q = e.to_local(p);
  const Scalar y0 = std::abs(q.x()), y1 = std::abs(q.y());
  const Scalar e0 = e.a, e1 = e.b;
  const bool inside = (y0 / e0) * (y0 / e0) + (y1 / e1) * (y1 / e1) < 1;
  Scalar dist;
  if (y1 > 0) {
    if (y0 > 0) {
      const Scalar z0 = y0 / e0, z1 = y1 / e1;
      const Scalar g = z0 * z0 + z1 * z1 - 1;
      if (g != 0) {
        const Scalar r0 = (e0 / e1) * (e0 / e1);
        const Scalar sbar = detail::lagrange_root(r0, z0, z1, g);
        const Scalar x0 = r0 * y0 / (sbar + r0);
        const Scalar x1 = y1 / (sbar + 1);
        dist = std::hypot(x0 - y0, x1 - y1);
      } else {
        dist = 0;
      }
    } else {
      dist = std::abs(y1 - e1);
    }
  } else {
    const Scalar numer = e0 * y0, denom = e0 * e0 - e1 * e1;
    if (numer < denom) {
      const Scalar xde = numer / denom;
      const Scalar x0 = e0 * xde, x1 = e1 * std::sqrt(std::max(Scalar(0), 1 - xde * xde));
      dist = std::hypot(x0 - y0, x1);
    } else {
      dist = std::abs(y0 - e0);
    }
  }
  return {dist, inside};
}

enum class HausdorffMode { Full, InsideOnly };

/// Directed Hausdorff distance from a point set to the ellipse boundary.
/// InsideOnly ignores points outside e and yields 0 when none remain.
template <typename Scalar>
Scalar hausdorff_to_ellipse(std::span<const Point2T<Scalar>> points, const EllipseT<Scalar>& e,
                            HausdorffMode mode) {
  if (mode == HausdorffMode::Full && points.empty())
    throw Error(ErrorCode::EmptyInput, "Hausdorff distance of an empty point set");
  Scalar worst = 0;
  for (const auto& p : points) {
    const auto d = point_ellipse_distance(p, e);
    if (mode == HausdorffMode::InsideOnly && !d.inside) continue;
    worst = std::max(worst, d.distance);
  }
  return worst;
}

template <typename Scalar>
Scalar hausdorff_to_ellipse(const std::vector<Point2T<Scalar>>& points, const EllipseT<Scalar>& e,
                            HausdorffMode mode) {
  return hausdorff_to_ellipse(std::span<const Point2T<Scalar>>(points), e, mode);
}

/// Mean boundary distance of a point set; used as the hierarchy fit error.
template <typename Scalar>
Scalar mean_boundary_distance(std::span<const Point2T<Scalar>> points, const EllipseT<Scalar>& e) {
  if (points.empty()) return 0;
  Scalar sum = 0;
  for (const auto& p : points) sum += point_ellipse_distance(p, e).distance;
  return sum / Scalar(points.size());
}

/// Intersection over union estimated on a lattice with samples_per_pixel
/// samples along each axis. The lattice is anchored at the origin so the
/// result does not depend on argument order.
template <typename Scalar>
Scalar ellipse_overlap(const EllipseT<Scalar>& e1, const EllipseT<Scalar>& e2, int samples_per_pixel = 4) {
  if (e1.center == e2.center && e1.a == e2.a && e1.b == e2.b && e1.theta == e2.theta) return 1;
  const Point2T<Scalar> h1 = e1.half_extent(), h2 = e2.half_extent();
  const Point2T<Scalar> lo1 = e1.center - h1, hi1 = e1.center + h1;
  const Point2T<Scalar> lo2 = e2.center - h2, hi2 = e2.center + h2;
  if (lo1.x() > hi2.x() || lo2.x() > hi1.x() || lo1.y() > hi2.y() || lo2.y() > hi1.y()) return 0;
  const Point2T<Scalar> lo = lo1.cwiseMin(lo2), hi = hi1.cwiseMax(hi2);
  const Scalar step = Scalar(1) / Scalar(std::max(1, samples_per_pixel));
  const long ix0 = static_cast<long>(std::floor(lo.x() / step)), ix1 = static_cast<long>(std::ceil(hi.x() / step));
  const long iy0 = static_cast<long>(std::floor(lo.y() / step)), iy1 = static_cast<long>(std::ceil(hi.y() / step));
  long n1 = 0, n2 = 0, both = 0;
  for (long iy = iy0; iy <= iy1; ++iy) {
    const Scalar y = (Scalar(iy) + Scalar(0.5)) * step;
    for (long ix = ix0; ix <= ix1; ++ix) {
      const Point2T<Scalar> p((Scalar(ix) + Scalar(0.5)) * step, y);
      const bool in1 = e1.level(p) <= 1, in2 = e2.level(p) <= 1;
      n1 += in1;
      n2 += in2;
      both += in1 && in2;
    }
  }
  const long uni = n1 + n2 - both;
  return uni > 0 ? Scalar(both) / Scalar(uni) : Scalar(0);
}

}  // namespace celltrack
