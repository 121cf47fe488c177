#pragma once

// Unit quaternions (Hamilton, imaginary-first) and rigid transforms, plus the
// 3-dof rotation error state used for every covariance in the library.
//
// Error convention: for an estimate q and a measurement q~,
//   dq = q~ (x) q^-1,   e = Im(dq) (after forcing Re(dq) >= 0).
// The inverse map is retract(q, e) = [e, sqrt(1 - |e|^2)] (x) q. Note that
// e is a half-angle quantity: a small rotation by angle t gives |e| ~ t/2.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>

#include "glopro/errors.hpp"

namespace glopro {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

class Quat {
 public:
  Quat() : a_(Vec3::Zero()), b_(1.0) {}

  /// Normalizes on construction; a zero vector yields identity.
  Quat(const Vec3& a, double b) : a_(a), b_(b) { normalize(); }
  Quat(double ax, double ay, double az, double b) : Quat(Vec3(ax, ay, az), b) {}

  static Quat identity() { return {}; }

  /// Rotation of `angle` radians about `axis` (need not be unit).
  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n == 0.0) return {};
    return Quat(axis / n * std::sin(0.5 * angle), std::cos(0.5 * angle));
  }

  /// Rotation vector (axis * angle).
  static Quat from_rotation_vector(const Vec3& phi) {
    const double angle = phi.norm();
    if (angle < 1e-12) return Quat(0.5 * phi, 1.0);
    return from_axis_angle(phi, angle);
  }

  static Quat from_matrix(const Mat3& r) {
    const Eigen::Quaterniond e(r);
    return Quat(Vec3(e.x(), e.y(), e.z()), e.w());
  }

  const Vec3& a() const { return a_; }
  double b() const { return b_; }

  Quat conjugate() const {
    Quat q;
    q.a_ = -a_;
    q.b_ = b_;
    return q;
  }
  Quat inverse() const { return conjugate(); }

  /// Same rotation with non-negative real part.
  Quat canonical() const {
    if (b_ >= 0.0) return *this;
    Quat q;
    q.a_ = -a_;
    q.b_ = -b_;
    return q;
  }

  Mat3 matrix() const {
    const double x = a_.x(), y = a_.y(), z = a_.z(), w = b_;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
         2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
         2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
    return r;
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 t = 2.0 * a_.cross(v);
    return v + b_ * t + a_.cross(t);
  }

  /// Rotation vector (axis * angle), angle in [0, pi].
  Vec3 rotation_vector() const {
    const Quat c = canonical();
    const double s = c.a_.norm();
    if (s < 1e-12) return 2.0 * c.a_;
    return c.a_ / s * (2.0 * std::atan2(s, c.b_));
  }

  double norm() const { return std::sqrt(a_.squaredNorm() + b_ * b_); }

  Eigen::Vector4d coeffs() const { return {a_.x(), a_.y(), a_.z(), b_}; }

  /// Hamilton product.
  friend Quat operator*(const Quat& p, const Quat& q) {
    Quat r;
    r.a_ = p.b_ * q.a_ + q.b_ * p.a_ + p.a_.cross(q.a_);
    r.b_ = p.b_ * q.b_ - p.a_.dot(q.a_);
    r.normalize();
    return r;
  }

  friend bool operator==(const Quat& p, const Quat& q) {
    return p.a_ == q.a_ && p.b_ == q.b_;
  }

 private:
  void normalize() {
    const double n = norm();
    if (n == 0.0 || !std::isfinite(n)) {
      a_.setZero();
      b_ = 1.0;
      return;
    }
    // Already unit to rounding: leave the bits alone so normalizing is idempotent.
    if (std::abs(n - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) return;
    a_ /= n;
    b_ /= n;
  }

  Vec3 a_;
  double b_;
};

inline Quat quat_mul(const Quat& p, const Quat& q) { return p * q; }

/// Im(canonical(q_meas (x) q_est^-1)).
inline Vec3 quat_error(const Quat& q_est, const Quat& q_meas) {
  return (q_meas * q_est.inverse()).canonical().a();
}

/// Inverse of quat_error: quat_error(q, retract(q, e)) == e for |e| < 1.
inline Quat retract(const Quat& q, const Vec3& e) {
  const double n2 = e.squaredNorm();
  if (!(n2 < 1.0)) throw DomainError("retract: rotation error norm must be < 1");
  return Quat(e, std::sqrt(1.0 - n2)) * q;
}

/// Geodesic interpolation, t in [0, 1].
inline Quat slerp(const Quat& p, const Quat& q, double t) {
  const Vec3 phi = (q * p.inverse()).rotation_vector();
  return Quat::from_rotation_vector(t * phi) * p;
}

/// Pose of frame B in frame A: p_A = q_AB * p_B + r_AB.
struct RigidTransform {
  Vec3 r = Vec3::Zero();
  Quat q;

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return q.rotate(p) + r; }

  RigidTransform inverse() const {
    const Quat qi = q.inverse();
    return {-qi.rotate(r), qi};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = q.matrix();
    m.topRightCorner<3, 1>() = r;
    return m;
  }

  friend RigidTransform operator*(const RigidTransform& ab, const RigidTransform& bc) {
    return {ab.r + ab.q.rotate(bc.r), ab.q * bc.q};
  }
};

inline RigidTransform compose(const RigidTransform& ab, const RigidTransform& bc) { return ab * bc; }
inline RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }
inline Vec3 apply(const RigidTransform& t, const Vec3& p) { return t.apply(p); }

/// Perturb a transform by a 6-vector [dr, e]: position additively, rotation
/// by retract.
inline RigidTransform boxplus(const RigidTransform& t, const Vec6& d) {
  return {t.r + d.head<3>(), retract(t.q, d.tail<3>())};
}

/// Error coordinates [dr, e] taking `base` to `other`.
inline Vec6 boxminus(const RigidTransform& other, const RigidTransform& base) {
  Vec6 d;
  d.head<3>() = other.r - base.r;
  d.tail<3>() = quat_error(base.q, other.q);
  return d;
}

struct ComposeJacobians {
  Mat6 wrt_left;   ///< d(AB * BC) / d(AB)
  Mat6 wrt_right;  ///< d(AB * BC) / d(BC)
};

/// Jacobians of compose() on (position, rotation-error) coordinates, using
/// the boxplus/boxminus perturbation model above.
inline ComposeJacobians transform_jacobians(const RigidTransform& ab, const RigidTransform& bc) {
  const Mat3 r_ab = ab.q.matrix();
  ComposeJacobians j;
  j.wrt_left.setIdentity();
  // dR ~ I + 2[e]x, so the rotated lever arm moves by -2[R_ab r_bc]x e.
  j.wrt_left.topRightCorner<3, 3>() = -2.0 * skew(r_ab * bc.r);
  j.wrt_right.setZero();
  j.wrt_right.topLeftCorner<3, 3>() = r_ab;
  // q_ab (x) dq (x) q_ab^-1 rotates Im(dq) by R_ab.
  j.wrt_right.bottomRightCorner<3, 3>() = r_ab;
  return j;
}

}  // namespace glopro
