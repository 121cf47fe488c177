#pragma once

// Articulated body model: shape blendshapes + linear blend skinning over a
// 24-joint kinematic tree, with analytic Jacobians on the 85-dim error state.
//
// Error-state layout (wire contract, never reorder):
//   [ d_beta (10) | d_theta (23 x 3) | d_r_CH (3) | d_q_CH (3) ]

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "glopro/errors.hpp"
#include "glopro/geometry.hpp"

namespace glopro {

inline constexpr int kShapeDims = 10;
inline constexpr int kPostureJoints = 23;
inline constexpr int kJoints = kPostureJoints + 1;
inline constexpr int kErrorDims = kShapeDims + 3 * kPostureJoints + 6;

/// Offsets into the error-state vector.
namespace ec {
inline constexpr int kBeta = 0;
inline constexpr int kTheta = kShapeDims;
inline constexpr int kRootPos = kTheta + 3 * kPostureJoints;  // 79
inline constexpr int kRootRot = kRootPos + 3;                 // 82
inline constexpr int theta(int posture_index) { return kTheta + 3 * posture_index; }
}  // namespace ec

using ErrorVec = Eigen::Matrix<double, kErrorDims, 1>;
using ShapeVec = Eigen::Matrix<double, kShapeDims, 1>;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Jacobian = Eigen::Matrix<double, Eigen::Dynamic, kErrorDims>;
using PointJacobian = Eigen::Matrix<double, 3, kErrorDims>;

/// Body state: shape, posture (non-root joint rotations, tree order) and the
/// pose of the human frame H in the camera frame C.
struct HumanState {
  ShapeVec beta = ShapeVec::Zero();
  std::array<Quat, kPostureJoints> theta{};
  Vec3 r_CH = Vec3::Zero();
  Quat q_CH;

  RigidTransform root() const { return {r_CH, q_CH}; }
  void set_root(const RigidTransform& t) {
    r_CH = t.r;
    q_CH = t.q;
  }
};

/// Error coordinates taking `base` to `other`.
inline ErrorVec boxminus(const HumanState& other, const HumanState& base) {
  ErrorVec d;
  d.segment<kShapeDims>(ec::kBeta) = other.beta - base.beta;
  for (int j = 0; j < kPostureJoints; ++j)
    d.segment<3>(ec::theta(j)) = quat_error(base.theta[j], other.theta[j]);
  d.segment<3>(ec::kRootPos) = other.r_CH - base.r_CH;
  d.segment<3>(ec::kRootRot) = quat_error(base.q_CH, other.q_CH);
  return d;
}

inline HumanState boxplus(const HumanState& base, const ErrorVec& d) {
  HumanState s;
  s.beta = base.beta + d.segment<kShapeDims>(ec::kBeta);
  for (int j = 0; j < kPostureJoints; ++j) s.theta[j] = retract(base.theta[j], d.segment<3>(ec::theta(j)));
  s.r_CH = base.r_CH + d.segment<3>(ec::kRootPos);
  s.q_CH = retract(base.q_CH, d.segment<3>(ec::kRootRot));
  return s;
}

/// Posed joints and vertices, both in the human frame H.
struct ForwardResult {
  Points joints;
  Points vertices;
};

/// Per-state kinematic quantities shared by forward and Jacobian passes.
struct Kinematics {
  Eigen::VectorXd shaped;            ///< 3N, template + shape blendshapes
  std::vector<Vec3> rest_joints;     ///< K
  std::vector<Mat3> rot;             ///< K, global joint rotations in H
  std::vector<Vec3> pos;             ///< K, posed joint positions in H
  std::vector<Eigen::Matrix<double, 3, kShapeDims>> d_rest_d_beta;  ///< K
  std::vector<Eigen::Matrix<double, 3, kShapeDims>> d_pos_d_beta;   ///< K
};

class BodyModel {
 public:
  struct Influence {
    int joint;
    double weight;
  };

  BodyModel() = default;

  /// Validates every invariant; throws LoadError naming the offending field.
  ///   template_vertices: N x 3
  ///   shape_dirs:        3N x 10, row 3n+c is coordinate c of vertex n
  ///   joint_regressor:   K x N, rows sum to 1
  ///   parents:           K entries, parents[0] == -1
  ///   skin_weights:      N x K, rows sum to 1, at most 4 nonzero per row
  ///   extra_regressor:   optional E x N over posed vertices (extended joint set)
  BodyModel(Points template_vertices, Eigen::MatrixXd shape_dirs, Eigen::MatrixXd joint_regressor,
            std::vector<int> parents, Eigen::MatrixXd skin_weights,
            Eigen::MatrixXd extra_regressor = Eigen::MatrixXd())
      : template_(std::move(template_vertices)),
        shape_dirs_(std::move(shape_dirs)),
        regressor_(std::move(joint_regressor)),
        parents_(std::move(parents)),
        skin_weights_(std::move(skin_weights)),
        extra_regressor_(std::move(extra_regressor)) {
    validate();
    precompute();
  }

  int num_vertices() const { return static_cast<int>(template_.rows()); }
  int num_joints() const { return static_cast<int>(parents_.size()); }
  int num_extra_joints() const { return static_cast<int>(extra_regressor_.rows()); }

  const Points& template_vertices() const { return template_; }
  const Eigen::MatrixXd& shape_dirs() const { return shape_dirs_; }
  const Eigen::MatrixXd& joint_regressor() const { return regressor_; }
  const std::vector<int>& parents() const { return parents_; }
  const Eigen::MatrixXd& skin_weights() const { return skin_weights_; }
  const Eigen::MatrixXd& extra_regressor() const { return extra_regressor_; }
  const std::vector<Influence>& influences(int vertex) const { return influences_[vertex]; }
  /// Joints from `joint` up to (excluding) the root, nearest first.
  const std::vector<int>& chain(int joint) const { return chains_[joint]; }

  Kinematics kinematics(const HumanState& s) const {
    const int n = num_vertices();
    const int k = num_joints();
    Kinematics kin;
    kin.shaped.resize(3 * n);
    Eigen::Map<const Eigen::VectorXd> tmpl(template_.data(), 3 * n);
    kin.shaped.noalias() = tmpl + shape_dirs_ * s.beta;

    kin.rest_joints.resize(k);
    kin.d_rest_d_beta = reg_shape_;
    for (int j = 0; j < k; ++j) kin.rest_joints[j] = reg_template_.row(j).transpose() + reg_shape_[j] * s.beta;
    const auto& d_rest = kin.d_rest_d_beta;

    kin.rot.resize(k);
    kin.pos.resize(k);
    kin.d_pos_d_beta.resize(k);
    for (int j : order_) {
      const int p = parents_[j];
      if (p < 0) {
        kin.rot[j].setIdentity();
        kin.pos[j] = kin.rest_joints[j];
        kin.d_pos_d_beta[j] = d_rest[j];
        continue;
      }
      kin.rot[j] = kin.rot[p] * s.theta[j - 1].matrix();
      kin.pos[j] = kin.rot[p] * kin.rest_joints[j] + (kin.pos[p] - kin.rot[p] * kin.rest_joints[p]);
      kin.d_pos_d_beta[j] = kin.d_pos_d_beta[p] + kin.rot[p] * (d_rest[j] - d_rest[p]);
    }
    return kin;
  }

  /// Position of vertex `n` attached rigidly to joint `j`'s frame.
  Vec3 skinned_by(const Kinematics& kin, int n, int j) const {
    return kin.rot[j] * (kin.shaped.segment<3>(3 * n) - kin.rest_joints[j]) + kin.pos[j];
  }

  /// Skinned vertex written as shaped + weighted displacements, so the rest
  /// pose reproduces the shaped template bit-exactly.
  Vec3 posed_vertex(const Kinematics& kin, int n) const {
    const Vec3 shaped = kin.shaped.segment<3>(3 * n);
    Vec3 disp = Vec3::Zero();
    for (const auto& inf : influences_[n]) {
      const int j = inf.joint;
      disp += inf.weight * ((kin.rot[j] - Mat3::Identity()) * shaped + (kin.pos[j] - kin.rot[j] * kin.rest_joints[j]));
    }
    return shaped + disp;
  }

 private:
  void validate() {
    const Eigen::Index n = template_.rows();
    const int k = static_cast<int>(parents_.size());
    if (n < 1) throw LoadError("template", "no vertices");
    if (k != kJoints)
      throw LoadError("parents", "expected " + std::to_string(kJoints) + " joints, got " + std::to_string(k));
    if (n < k) throw LoadError("template", "need at least as many vertices as joints");
    if (!template_.allFinite()) throw LoadError("template", "non-finite coordinate");
    if (shape_dirs_.rows() != 3 * n || shape_dirs_.cols() != kShapeDims)
      throw LoadError("shape_dirs", "expected N x 3 x 10");
    if (!shape_dirs_.allFinite()) throw LoadError("shape_dirs", "non-finite entry");
    if (regressor_.rows() != k || regressor_.cols() != n)
      throw LoadError("joint_regressor", "expected K x N");
    for (int j = 0; j < k; ++j)
      if (std::abs(regressor_.row(j).sum() - 1.0) > 1e-9)
        throw LoadError("joint_regressor", "row " + std::to_string(j) + " does not sum to 1");
    if (skin_weights_.rows() != n || skin_weights_.cols() != k)
      throw LoadError("skin_weights", "expected N x K");
    for (Eigen::Index v = 0; v < n; ++v) {
      if (std::abs(skin_weights_.row(v).sum() - 1.0) > 1e-9)
        throw LoadError("skin_weights", "row " + std::to_string(v) + " does not sum to 1");
      if ((skin_weights_.row(v).array() != 0.0).count() > 4)
        throw LoadError("skin_weights", "row " + std::to_string(v) + " has more than 4 influences");
    }
    if (extra_regressor_.size() != 0) {
      if (extra_regressor_.cols() != n) throw LoadError("extra_regressor", "expected E x N");
      for (Eigen::Index j = 0; j < extra_regressor_.rows(); ++j)
        if (std::abs(extra_regressor_.row(j).sum() - 1.0) > 1e-9)
          throw LoadError("extra_regressor", "row " + std::to_string(j) + " does not sum to 1");
    }

    if (parents_[0] != -1) throw LoadError("parents", "joint 0 must be the root (parent -1)");
    for (int j = 1; j < k; ++j)
      if (parents_[j] < 0 || parents_[j] >= k || parents_[j] == j)
        throw LoadError("parents", "invalid parent for joint " + std::to_string(j));
    // Every joint must reach the root within k steps, otherwise there is a cycle.
    for (int j = 0; j < k; ++j) {
      int cur = j;
      int steps = 0;
      while (cur != 0) {
        cur = parents_[cur];
        if (++steps > k) throw LoadError("parents", "cycle through joint " + std::to_string(j));
      }
    }
  }

  void precompute() {
    const int n = num_vertices();
    const int k = num_joints();
    reg_template_ = regressor_ * template_;
    reg_shape_.resize(k);
    for (int j = 0; j < k; ++j) {
      reg_shape_[j].setZero();
      for (int v = 0; v < n; ++v) {
        const double w = regressor_(j, v);
        if (w != 0.0) reg_shape_[j] += w * shape_dirs_.middleRows<3>(3 * v);
      }
    }
    influences_.assign(n, {});
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < k; ++j)
        if (skin_weights_(v, j) != 0.0) influences_[v].push_back({j, skin_weights_(v, j)});

    // Parents-before-children order.
    order_.clear();
    std::vector<int> depth(k, 0);
    for (int j = 0; j < k; ++j)
      for (int cur = j; cur != 0; cur = parents_[cur]) ++depth[j];
    order_.resize(k);
    for (int j = 0; j < k; ++j) order_[j] = j;
    std::stable_sort(order_.begin(), order_.end(), [&](int x, int y) { return depth[x] < depth[y]; });

    chains_.assign(k, {});
    for (int j = 0; j < k; ++j)
      for (int cur = j; cur != 0; cur = parents_[cur]) chains_[j].push_back(cur);
  }

  Points template_;
  Eigen::MatrixXd shape_dirs_;
  Eigen::MatrixXd regressor_;
  std::vector<int> parents_;
  Eigen::MatrixXd skin_weights_;
  Eigen::MatrixXd extra_regressor_;

  Points reg_template_;
  std::vector<Eigen::Matrix<double, 3, kShapeDims>> reg_shape_;
  std::vector<std::vector<Influence>> influences_;
  std::vector<int> order_;
  std::vector<std::vector<int>> chains_;
};

/// Joints and vertices in the human frame.
inline ForwardResult forward(const BodyModel& model, const HumanState& state) {
  const Kinematics kin = model.kinematics(state);
  ForwardResult out;
  out.joints.resize(model.num_joints(), 3);
  for (int j = 0; j < model.num_joints(); ++j) out.joints.row(j) = kin.pos[j].transpose();
  out.vertices.resize(model.num_vertices(), 3);
  for (int v = 0; v < model.num_vertices(); ++v) out.vertices.row(v) = model.posed_vertex(kin, v).transpose();
  return out;
}

inline Points transform_points(const RigidTransform& t, const Points& p) {
  Points out(p.rows(), 3);
  const Mat3 r = t.q.matrix();
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = (r * p.row(i).transpose() + t.r).transpose();
  return out;
}

/// Vertices in the camera frame.
inline Points to_camera(const BodyModel& model, const HumanState& state) {
  return transform_points(state.root(), forward(model, state).vertices);
}

inline Points joints_camera(const BodyModel& model, const HumanState& state) {
  return transform_points(state.root(), forward(model, state).joints);
}

/// Extended joint set (extra regressor over posed vertices), camera frame.
inline Points extra_joints_camera(const BodyModel& model, const HumanState& state) {
  const Points v = to_camera(model, state);
  return model.extra_regressor() * v;
}

namespace detail {

/// Adds the shared root-pose columns and maps H-frame columns into C.
inline void finish_point_jacobian(PointJacobian& j, const Vec3& p_h, const Mat3& r_ch) {
  j.leftCols<ec::kRootPos>() = r_ch * j.leftCols<ec::kRootPos>();
  j.block<3, 3>(0, ec::kRootPos).setIdentity();
  j.block<3, 3>(0, ec::kRootRot) = -2.0 * skew(r_ch * p_h);
}

}  // namespace detail

/// Calls fn(vertex_index, 3x85 Jacobian of the camera-frame vertex) for every
/// vertex in [lo, hi), in order. The Jacobian reference is only valid inside
/// the call.
template <typename Fn>
void for_each_vertex_jacobian_range(const BodyModel& model, const HumanState& state, const Kinematics& kin,
                                    int lo, int hi, Fn&& fn) {
  const Mat3 r_ch = state.q_CH.matrix();
  const auto& parents = model.parents();
  std::vector<Eigen::Matrix3d> lever_rot(model.num_joints());
  for (int j = 1; j < model.num_joints(); ++j) lever_rot[j] = -2.0 * kin.rot[parents[j]];

  PointJacobian jac;
  for (int v = lo; v < hi; ++v) {
    jac.setZero();
    Vec3 p_h = Vec3::Zero();
    const auto shape = model.shape_dirs().middleRows<3>(3 * v);
    for (const auto& inf : model.influences(v)) {
      const int k = inf.joint;
      const Vec3 c = model.skinned_by(kin, v, k);
      p_h += inf.weight * c;
      jac.leftCols<kShapeDims>() +=
          inf.weight * (kin.rot[k] * (shape - kin.d_rest_d_beta[k]) + kin.d_pos_d_beta[k]);
      for (int a : model.chain(k)) {
        // Rotating joint a about its own position moves c by -2[c - t_a]x R_parent(a) e.
        jac.block<3, 3>(0, ec::theta(a - 1)) += inf.weight * skew(c - kin.pos[a]) * lever_rot[a];
      }
    }
    detail::finish_point_jacobian(jac, p_h, r_ch);
    fn(v, static_cast<const PointJacobian&>(jac));
  }
}

template <typename Fn>
void for_each_vertex_jacobian(const BodyModel& model, const HumanState& state, const Kinematics& kin,
                              Fn&& fn) {
  for_each_vertex_jacobian_range(model, state, kin, 0, model.num_vertices(), std::forward<Fn>(fn));
}

/// J_V: (3N) x 85 Jacobian of vec(camera-frame vertices), rows point-major.
inline Jacobian vertex_jacobian(const BodyModel& model, const HumanState& state) {
  Jacobian j(3 * model.num_vertices(), kErrorDims);
  for_each_vertex_jacobian(model, state, model.kinematics(state),
                           [&](int v, const PointJacobian& jv) { j.middleRows<3>(3 * v) = jv; });
  return j;
}

/// J_L: (3K) x 85 Jacobian of vec(camera-frame kinematic joints).
inline Jacobian joint_jacobian(const BodyModel& model, const HumanState& state) {
  const Kinematics kin = model.kinematics(state);
  const Mat3 r_ch = state.q_CH.matrix();
  const auto& parents = model.parents();
  Jacobian out(3 * model.num_joints(), kErrorDims);
  PointJacobian jac;
  for (int j = 0; j < model.num_joints(); ++j) {
    jac.setZero();
    jac.leftCols<kShapeDims>() = kin.d_pos_d_beta[j];
    // A joint's own rotation leaves its position fixed; only strict ancestors move it.
    for (int a : model.chain(j)) {
      if (a == j) continue;
      jac.block<3, 3>(0, ec::theta(a - 1)) = -2.0 * skew(kin.pos[j] - kin.pos[a]) * kin.rot[parents[a]];
    }
    detail::finish_point_jacobian(jac, kin.pos[j], r_ch);
    out.middleRows<3>(3 * j) = jac;
  }
  return out;
}

/// Jacobian of the extended joint set (extra regressor applied to posed vertices).
inline Jacobian extra_joint_jacobian(const BodyModel& model, const HumanState& state) {
  const auto& reg = model.extra_regressor();
  Jacobian out = Jacobian::Zero(3 * reg.rows(), kErrorDims);
  for_each_vertex_jacobian(model, state, model.kinematics(state), [&](int v, const PointJacobian& jv) {
    for (Eigen::Index e = 0; e < reg.rows(); ++e)
      if (reg(e, v) != 0.0) out.middleRows<3>(3 * e) += reg(e, v) * jv;
  });
  return out;
}

}  // namespace glopro
