#pragma once

// JSON / JSONL / binary serialization. Quaternions are [ax, ay, az, b];
// transforms are {"r": [x, y, z], "q": [ax, ay, az, b]}.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "glopro/body_model.hpp"
#include "glopro/calibration.hpp"
#include "glopro/errors.hpp"
#include "glopro/evaluation.hpp"
#include "glopro/fusion.hpp"
#include "glopro/geometry.hpp"
#include "glopro/metrics.hpp"
#include "glopro/nn.hpp"
#include "glopro/prob_state.hpp"
#include "glopro/projection.hpp"
#include "glopro/scenario.hpp"
#include "glopro/synth_model.hpp"
#include "glopro/tracker.hpp"

namespace glopro::io {

using json = nlohmann::json;

// ---------------------------------------------------------------- primitives

namespace detail {

inline const json& field(const json& j, std::string_view key) {
  if (!j.is_object()) throw LoadError(std::string(key), "parent is not an object");
  const auto it = j.find(key);
  if (it == j.end()) throw LoadError(std::string(key), "missing");
  return *it;
}

inline double number(const json& j, const std::string& name) {
  if (!j.is_number()) throw LoadError(name, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw LoadError(name, "not finite");
  return v;
}

inline int integer(const json& j, const std::string& name) {
  if (!j.is_number_integer()) throw LoadError(name, "expected an integer");
  return j.get<int>();
}

inline Eigen::VectorXd vector(const json& j, const std::string& name, Eigen::Index expected = -1) {
  if (!j.is_array()) throw LoadError(name, "expected an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected)
    throw LoadError(name, "expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], name + "[" + std::to_string(i) + "]");
  return v;
}

/// Row-major nested array; rows/cols of -1 accept any size (cols must agree).
inline Eigen::MatrixXd matrix(const json& j, const std::string& name, Eigen::Index rows = -1, Eigen::Index cols = -1) {
  if (!j.is_array()) throw LoadError(name, "expected a nested array");
  if (rows >= 0 && static_cast<Eigen::Index>(j.size()) != rows)
    throw LoadError(name, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
  if (j.empty()) return Eigen::MatrixXd(0, cols < 0 ? 0 : cols);
  const Eigen::Index c = cols >= 0 ? cols : static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0);
  Eigen::MatrixXd m(j.size(), c);
  for (std::size_t r = 0; r < j.size(); ++r)
    m.row(r) = vector(j[r], name + "[" + std::to_string(r) + "]", c).transpose();
  return m;
}

inline json from_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json from_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(from_vector(m.row(r).transpose()));
  return rows;
}

template <class Fn>
auto in_context(const std::string& ctx, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const LoadError& e) {
    throw LoadError(ctx + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2), e.line());
  }
}

}  // namespace detail

inline json to_json(const Quat& q) { return {q.a().x(), q.a().y(), q.a().z(), q.b()}; }

inline Quat quat_from_json(const json& j, const std::string& name = "q") {
  const Eigen::VectorXd v = detail::vector(j, name, 4);
  if (v.norm() == 0.0) throw LoadError(name, "zero quaternion");
  return Quat(v.head<3>(), v[3]);
}

inline Vec3 vec3_from_json(const json& j, const std::string& name) { return detail::vector(j, name, 3); }

inline json to_json(const RigidTransform& t) { return {{"r", detail::from_vector(t.r)}, {"q", to_json(t.q)}}; }

inline RigidTransform transform_from_json(const json& j, const std::string& name = "T") {
  return detail::in_context(name, [&] {
    return RigidTransform{vec3_from_json(detail::field(j, "r"), "r"), quat_from_json(detail::field(j, "q"), "q")};
  });
}

inline json to_json(const HumanState& s) {
  json theta = json::array();
  for (const auto& q : s.theta) theta.push_back(to_json(q));
  return {{"beta", detail::from_vector(s.beta)}, {"theta", theta}, {"r", detail::from_vector(s.r_CH)}, {"q", to_json(s.q_CH)}};
}

inline HumanState human_state_from_json(const json& j, const std::string& name = "state") {
  return detail::in_context(name, [&] {
    HumanState s;
    s.beta = detail::vector(detail::field(j, "beta"), "beta", kShapeDims);
    const json& theta = detail::field(j, "theta");
    if (!theta.is_array() || theta.size() != kPostureJoints)
      throw LoadError("theta", "expected " + std::to_string(kPostureJoints) + " quaternions");
    for (int i = 0; i < kPostureJoints; ++i) s.theta[i] = quat_from_json(theta[i], "theta[" + std::to_string(i) + "]");
    s.r_CH = vec3_from_json(detail::field(j, "r"), "r");
    s.q_CH = quat_from_json(detail::field(j, "q"), "q");
    return s;
  });
}

inline json to_json(const GaussianBodyState& s) { return {{"mean", to_json(s.mean)}, {"var", detail::from_vector(s.var)}}; }

inline GaussianBodyState gaussian_state_from_json(const json& j, const std::string& name = "state") {
  return detail::in_context(name, [&] {
    GaussianBodyState s;
    s.mean = human_state_from_json(detail::field(j, "mean"), "mean");
    s.var = detail::vector(detail::field(j, "var"), "var", kErrorDims);
    if (!s.valid()) throw LoadError("var", "variances must be finite and > 0");
    return s;
  });
}

/// Per point: {"mean": [x, y, z], "cov": [xx, xy, xz, yy, yz, zz]}.
inline json to_json(const PointCloudGaussian& p) {
  json out = json::array();
  for (int i = 0; i < p.size(); ++i) {
    const Mat3& c = p.cov_blocks[i];
    out.push_back({{"mean", detail::from_vector(p.means.row(i).transpose())},
                   {"cov", {c(0, 0), c(0, 1), c(0, 2), c(1, 1), c(1, 2), c(2, 2)}}});
  }
  return out;
}

inline PointCloudGaussian point_cloud_from_json(const json& j, const std::string& name = "points") {
  if (!j.is_array()) throw LoadError(name, "expected an array");
  PointCloudGaussian p;
  p.means.resize(static_cast<Eigen::Index>(j.size()), 3);
  p.cov_blocks.resize(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ctx = name + "[" + std::to_string(i) + "]";
    detail::in_context(ctx, [&] {
      p.means.row(i) = vec3_from_json(detail::field(j[i], "mean"), "mean").transpose();
      const Eigen::VectorXd u = detail::vector(detail::field(j[i], "cov"), "cov", 6);
      Mat3 c;
      c << u[0], u[1], u[2], u[1], u[3], u[4], u[2], u[4], u[5];
      p.cov_blocks[i] = c;
      return 0;
    });
  }
  return p;
}

inline json to_json(const CameraModel& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

inline CameraModel camera_from_json(const json& j) {
  return detail::in_context("camera", [&] {
    CameraModel c;
    c.fx = detail::number(detail::field(j, "fx"), "fx");
    c.fy = detail::number(detail::field(j, "fy"), "fy");
    c.cx = detail::number(detail::field(j, "cx"), "cx");
    c.cy = detail::number(detail::field(j, "cy"), "cy");
    c.width = detail::integer(detail::field(j, "width"), "width");
    c.height = detail::integer(detail::field(j, "height"), "height");
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw LoadError("fx", e.what());
    }
    return c;
  });
}

// ---------------------------------------------------------------- files

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse(const std::string& text, const std::string& name, int line = 0) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(name, std::string("malformed JSON: ") + e.what(), line);
  }
}

inline json read_json(const std::string& path) { return parse(read_text(path), path); }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path, "cannot open file for writing");
  out << text;
  if (!out) throw LoadError(path, "write failed");
}

/// Calls fn(object, line) for each non-blank line; any LoadError or JSON type
/// error raised inside is re-thrown carrying the 1-based line number.
inline void read_jsonl(const std::string& path, const std::function<void(const json&, int)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, "cannot open file");
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = parse(text, path, line);
    try {
      fn(j, line);
    } catch (const LoadError& e) {
      if (e.line() > 0) throw;
      throw LoadError(e.field(), std::string(e.what()).substr(e.field().size() + 2), line);
    } catch (const json::exception& e) {
      throw LoadError(path, e.what(), line);
    } catch (const ConfigError& e) {
      throw LoadError(path, e.what(), line);
    }
  }
}

// ---------------------------------------------------------------- body model

inline json to_json(const BodyModel& m) {
  const int n = m.num_vertices();
  json shape = json::array();
  for (int v = 0; v < n; ++v) {
    json per_vertex = json::array();
    for (int c = 0; c < 3; ++c) per_vertex.push_back(detail::from_vector(m.shape_dirs().row(3 * v + c).transpose()));
    shape.push_back(per_vertex);
  }
  json out = {{"template", detail::from_matrix(m.template_vertices())},
              {"shape_dirs", shape},
              {"joint_regressor", detail::from_matrix(m.joint_regressor())},
              {"parents", m.parents()},
              {"skin_weights", detail::from_matrix(m.skin_weights())}};
  if (m.num_extra_joints() > 0) out["extra_regressor"] = detail::from_matrix(m.extra_regressor());
  return out;
}

/// Unknown keys (e.g. "pose_dirs" from a full SMPL export) are ignored.
inline BodyModel model_from_json(const json& j) {
  if (!j.is_object()) throw LoadError("model", "expected an object");
  const Points tmpl = detail::matrix(detail::field(j, "template"), "template", -1, 3);
  const auto n = tmpl.rows();
  const json& sd = detail::field(j, "shape_dirs");
  if (!sd.is_array() || static_cast<Eigen::Index>(sd.size()) != n)
    throw LoadError("shape_dirs", "expected " + std::to_string(n) + " vertices x 3 x " + std::to_string(kShapeDims));
  Eigen::MatrixXd shape(3 * n, kShapeDims);
  for (Eigen::Index v = 0; v < n; ++v)
    shape.middleRows(3 * v, 3) = detail::matrix(sd[v], "shape_dirs[" + std::to_string(v) + "]", 3, kShapeDims);
  const Eigen::MatrixXd reg = detail::matrix(detail::field(j, "joint_regressor"), "joint_regressor", -1, n);
  const json& par = detail::field(j, "parents");
  if (!par.is_array()) throw LoadError("parents", "expected an array");
  std::vector<int> parents;
  for (std::size_t i = 0; i < par.size(); ++i) parents.push_back(detail::integer(par[i], "parents[" + std::to_string(i) + "]"));
  const Eigen::MatrixXd skin = detail::matrix(detail::field(j, "skin_weights"), "skin_weights", n, -1);
  Eigen::MatrixXd extra;
  if (j.contains("extra_regressor")) extra = detail::matrix(j["extra_regressor"], "extra_regressor", -1, n);
  return BodyModel(tmpl, shape, reg, std::move(parents), skin, extra);
}

namespace detail {

inline constexpr char kModelMagic[4] = {'G', 'L', 'P', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class BinWriter {
 public:
  template <class T>
  void put(T v) {
    v = byteswap_if_big(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  const std::string& bytes() const { return buf_; }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }

 private:
  std::string buf_;
};

class BinReader {
 public:
  explicit BinReader(std::string data) : data_(std::move(data)) {}
  template <class T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > data_.size()) throw LoadError(what, "truncated binary model");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }
  std::string_view take(std::size_t n, const char* what) {
    if (pos_ + n > data_.size()) throw LoadError(what, "truncated binary model");
    std::string_view s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Binary container (little-endian): "GLPM", u32 version, u32 N, u32 K, u32 E,
/// then f64 template (N x 3), f64 shape_dirs (N x 3 x 10), f64 joint_regressor
/// (K x N), i32 parents (K), f64 skin_weights (N x K), f64 extra_regressor (E x N).
inline std::string model_to_binary(const BodyModel& m) {
  detail::BinWriter w;
  w.raw(detail::kModelMagic, 4);
  w.put<std::uint32_t>(detail::kModelVersion);
  const auto n = static_cast<std::uint32_t>(m.num_vertices());
  const auto k = static_cast<std::uint32_t>(m.num_joints());
  const auto e = static_cast<std::uint32_t>(m.num_extra_joints());
  w.put(n);
  w.put(k);
  w.put(e);
  auto put_rows = [&](const auto& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) w.put<double>(mat(r, c));
  };
  put_rows(m.template_vertices());
  put_rows(m.shape_dirs());
  put_rows(m.joint_regressor());
  for (int p : m.parents()) w.put<std::int32_t>(p);
  put_rows(m.skin_weights());
  if (e > 0) put_rows(m.extra_regressor());
  return w.bytes();
}

inline BodyModel model_from_binary(std::string data) {
  detail::BinReader r(std::move(data));
  if (r.take(4, "magic") != std::string_view(detail::kModelMagic, 4)) throw LoadError("magic", "not a binary body model");
  if (r.get<std::uint32_t>("version") != detail::kModelVersion) throw LoadError("version", "unsupported version");
  const auto n = static_cast<Eigen::Index>(r.get<std::uint32_t>("n_vertices"));
  const auto k = static_cast<Eigen::Index>(r.get<std::uint32_t>("n_joints"));
  const auto e = static_cast<Eigen::Index>(r.get<std::uint32_t>("n_extra"));
  auto rows = [&](Eigen::Index nr, Eigen::Index nc, const char* what) {
    Eigen::MatrixXd m(nr, nc);
    for (Eigen::Index i = 0; i < nr; ++i)
      for (Eigen::Index c = 0; c < nc; ++c) m(i, c) = r.get<double>(what);
    return m;
  };
  const Points tmpl = rows(n, 3, "template");
  const Eigen::MatrixXd shape = rows(3 * n, kShapeDims, "shape_dirs");
  const Eigen::MatrixXd reg = rows(k, n, "joint_regressor");
  std::vector<int> parents(k);
  for (auto& p : parents) p = r.get<std::int32_t>("parents");
  const Eigen::MatrixXd skin = rows(n, k, "skin_weights");
  const Eigen::MatrixXd extra = e > 0 ? rows(e, n, "extra_regressor") : Eigen::MatrixXd();
  if (!r.done()) throw LoadError("trailer", "unexpected bytes after model data");
  return BodyModel(tmpl, shape, reg, std::move(parents), skin, extra);
}

/// "synth[:n_vertices[:seed]]", a .bin container, or a JSON file.
inline BodyModel load_model(const std::string& spec) {
  if (spec.rfind("synth", 0) == 0) {
    int n = 6890;
    unsigned long long seed = 0;
    const std::string rest = spec.substr(5);
    if (!rest.empty()) {
      if (std::sscanf(rest.c_str(), ":%d:%llu", &n, &seed) < 1)
        throw LoadError("model", "expected synth[:n_vertices[:seed]]");
    }
    try {
      return synth_model(n, seed);
    } catch (const ConfigError& e) {
      throw LoadError("model", e.what());
    }
  }
  if (spec.size() > 4 && spec.compare(spec.size() - 4, 4, ".bin") == 0) return model_from_binary(read_text(spec));
  return model_from_json(read_json(spec));
}

inline void save_model(const BodyModel& m, const std::string& path) {
  if (path.size() > 4 && path.compare(path.size() - 4, 4, ".bin") == 0)
    write_text(path, model_to_binary(m));
  else
    write_text(path, to_json(m).dump());
}

// ---------------------------------------------------------------- networks

inline json to_json(const GruWeights& w) {
  return {{"input_dim", w.input_dim},  {"hidden_dim", w.hidden_dim},
          {"W_z", detail::from_matrix(w.W_z)}, {"W_r", detail::from_matrix(w.W_r)}, {"W_h", detail::from_matrix(w.W_h)},
          {"U_z", detail::from_matrix(w.U_z)}, {"U_r", detail::from_matrix(w.U_r)}, {"U_h", detail::from_matrix(w.U_h)},
          {"b_z", detail::from_vector(w.b_z)}, {"b_r", detail::from_vector(w.b_r)}, {"b_h", detail::from_vector(w.b_h)},
          {"decoder_W", detail::from_matrix(w.decoder_W)}, {"decoder_b", detail::from_vector(w.decoder_b)}};
}

inline GruWeights gru_from_json(const json& j) {
  GruWeights w;
  w.input_dim = detail::integer(detail::field(j, "input_dim"), "input_dim");
  w.hidden_dim = detail::integer(detail::field(j, "hidden_dim"), "hidden_dim");
  if (w.input_dim <= 0 || w.hidden_dim <= 0) throw LoadError("input_dim", "dimensions must be positive");
  const int in = w.input_dim, hid = w.hidden_dim;
  w.W_z = detail::matrix(detail::field(j, "W_z"), "W_z", hid, in);
  w.W_r = detail::matrix(detail::field(j, "W_r"), "W_r", hid, in);
  w.W_h = detail::matrix(detail::field(j, "W_h"), "W_h", hid, in);
  w.U_z = detail::matrix(detail::field(j, "U_z"), "U_z", hid, hid);
  w.U_r = detail::matrix(detail::field(j, "U_r"), "U_r", hid, hid);
  w.U_h = detail::matrix(detail::field(j, "U_h"), "U_h", hid, hid);
  w.b_z = detail::vector(detail::field(j, "b_z"), "b_z", hid);
  w.b_r = detail::vector(detail::field(j, "b_r"), "b_r", hid);
  w.b_h = detail::vector(detail::field(j, "b_h"), "b_h", hid);
  w.decoder_b = detail::vector(detail::field(j, "decoder_b"), "decoder_b");
  w.decoder_W = detail::matrix(detail::field(j, "decoder_W"), "decoder_W", w.decoder_b.size(), hid);
  w.validate();
  return w;
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "linear";
}

/// {"layers": [{"W": [[...]], "b": [...], "activation": "linear"|"relu"|"tanh"}, ...]}
inline Mlp mlp_from_json(const json& j) {
  const json& layers = detail::field(j, "layers");
  if (!layers.is_array() || layers.empty()) throw LoadError("layers", "expected a non-empty array");
  std::vector<DenseLayer> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string ctx = "layers[" + std::to_string(i) + "]";
    out.push_back(detail::in_context(ctx, [&] {
      DenseLayer l;
      l.b = detail::vector(detail::field(layers[i], "b"), "b");
      l.W = detail::matrix(detail::field(layers[i], "W"), "W", l.b.size(), -1);
      const std::string act = layers[i].value("activation", "linear");
      if (act == "linear") l.activation = Activation::kLinear;
      else if (act == "relu") l.activation = Activation::kRelu;
      else if (act == "tanh") l.activation = Activation::kTanh;
      else throw LoadError("activation", "unknown activation '" + act + "'");
      return l;
    }));
  }
  return Mlp(std::move(out));
}

// ---------------------------------------------------------------- configs

/// Variance vectors are either 85 numbers or {"beta", "theta", "r", "q"} per-group scalars.
inline ErrorVec error_vec_from_json(const json& j, const std::string& name, const ErrorVec& defaults) {
  if (j.is_array()) return detail::vector(j, name, kErrorDims);
  if (!j.is_object()) throw LoadError(name, "expected 85 numbers or a {beta, theta, r, q} object");
  ErrorVec v = defaults;
  auto group = [&](const char* key, int offset, int size) {
    if (j.contains(key)) v.segment(offset, size).setConstant(detail::number(j[key], name + "." + key));
  };
  group("beta", ec::kBeta, kShapeDims);
  group("theta", ec::kTheta, 3 * kPostureJoints);
  group("r", ec::kRootPos, 3);
  group("q", ec::kRootRot, 3);
  return v;
}

inline ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig c;
  if (name == "default") {
    c.occlusions.push_back({60, 74, OcclusionMode::kFull, {}});
  } else if (name == "walk") {
  } else if (name == "static") {
    c.body = BodyTrajectory::kStatic;
    c.camera = CameraTrajectory::kStatic;
  } else if (name == "orbit-static") {
    c.body = BodyTrajectory::kStatic;
  } else if (name == "sinusoidal") {
    c.body = BodyTrajectory::kSinusoidalJoints;
  } else {
    throw LoadError("scenario", "unknown preset '" + name + "' (default, walk, static, orbit-static, sinusoidal)");
  }
  return c;
}

inline ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig c = j.contains("preset") ? scenario_preset(j["preset"].get<std::string>()) : ScenarioConfig{};
  if (j.contains("body")) {
    const std::string b = j["body"].get<std::string>();
    if (b == "static") c.body = BodyTrajectory::kStatic;
    else if (b == "walk") c.body = BodyTrajectory::kWalk;
    else if (b == "sinusoidal-joints") c.body = BodyTrajectory::kSinusoidalJoints;
    else throw LoadError("body", "expected static, walk or sinusoidal-joints");
  }
  if (j.contains("camera")) {
    const std::string cam = j["camera"].get<std::string>();
    if (cam == "static") c.camera = CameraTrajectory::kStatic;
    else if (cam == "orbit") c.camera = CameraTrajectory::kOrbit;
    else if (cam == "linear") c.camera = CameraTrajectory::kLinear;
    else throw LoadError("camera", "expected static, orbit or linear");
  }
  if (j.contains("frames")) c.frames = detail::integer(j["frames"], "frames");
  if (j.contains("frame_rate")) c.frame_rate = detail::number(j["frame_rate"], "frame_rate");
  if (j.contains("walk_speed")) c.walk_speed = detail::number(j["walk_speed"], "walk_speed");
  if (j.contains("noise")) c.noise = error_vec_from_json(j["noise"], "noise", c.noise);
  if (j.contains("reported_var_scale")) c.reported_var_scale = detail::number(j["reported_var_scale"], "reported_var_scale");
  if (j.contains("kappa")) c.kappa = detail::number(j["kappa"], "kappa");
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("sequence_index")) c.sequence_index = j["sequence_index"].get<std::uint64_t>();
  if (j.contains("occlusions")) {
    c.occlusions.clear();
    const json& occ = j["occlusions"];
    if (!occ.is_array()) throw LoadError("occlusions", "expected an array");
    for (std::size_t i = 0; i < occ.size(); ++i) {
      const std::string ctx = "occlusions[" + std::to_string(i) + "]";
      c.occlusions.push_back(detail::in_context(ctx, [&] {
        OcclusionWindow w;
        w.first = detail::integer(detail::field(occ[i], "first"), "first");
        w.last = detail::integer(detail::field(occ[i], "last"), "last");
        const std::string mode = occ[i].value("mode", "full");
        if (mode == "full") w.mode = OcclusionMode::kFull;
        else if (mode == "partial") w.mode = OcclusionMode::kPartial;
        else throw LoadError("mode", "expected full or partial");
        if (occ[i].contains("dims"))
          for (const auto& d : occ[i]["dims"]) w.dims.push_back(detail::integer(d, "dims"));
        return w;
      }));
    }
  }
  c.validate();
  return c;
}

/// A preset name or a path to a scenario JSON file.
inline ScenarioConfig load_scenario(const std::string& spec) {
  if (spec.find('/') == std::string::npos && spec.find(".json") == std::string::npos) return scenario_preset(spec);
  return scenario_from_json(read_json(spec));
}

inline json to_json(const ScenarioConfig& c) {
  static const char* bodies[] = {"static", "walk", "sinusoidal-joints"};
  static const char* cams[] = {"static", "orbit", "linear"};
  json occ = json::array();
  for (const auto& w : c.occlusions)
    occ.push_back({{"first", w.first}, {"last", w.last}, {"mode", w.mode == OcclusionMode::kFull ? "full" : "partial"},
                   {"dims", w.dims}});
  return {{"body", bodies[static_cast<int>(c.body)]},
          {"camera", cams[static_cast<int>(c.camera)]},
          {"frames", c.frames},
          {"frame_rate", c.frame_rate},
          {"walk_speed", c.walk_speed},
          {"noise", detail::from_vector(c.noise)},
          {"reported_var_scale", c.reported_var_scale},
          {"occlusions", occ},
          {"kappa", c.kappa},
          {"seed", c.seed},
          {"sequence_index", c.sequence_index}};
}

inline PredictorKind predictor_from_string(const std::string& s) {
  if (s == "constvel") return PredictorKind::kConstVelocity;
  if (s == "gru") return PredictorKind::kGru;
  if (s == "none") return PredictorKind::kNone;
  throw LoadError("predictor", "expected constvel, gru or none");
}

/// {"history", "predictor", "process_noise", "gate_threshold", "linearize_at",
///  "gru_weights" (path), "residual_mlp" (path)}; all optional.
inline TrackerConfig tracker_config_from_json(const json& j) {
  TrackerConfig c;
  if (j.contains("history")) c.history = detail::integer(j["history"], "history");
  if (j.contains("predictor")) c.predictor = predictor_from_string(j["predictor"].get<std::string>());
  if (j.contains("process_noise")) c.process_noise = error_vec_from_json(j["process_noise"], "process_noise", c.process_noise);
  if (j.contains("gate_threshold") && !j["gate_threshold"].is_null())
    c.fusion.gate_threshold = detail::number(j["gate_threshold"], "gate_threshold");
  if (j.contains("linearize_at")) {
    const std::string at = j["linearize_at"].get<std::string>();
    if (at == "image") c.fusion.linearize_at = LinearizationPoint::kImage;
    else if (at == "motion") c.fusion.linearize_at = LinearizationPoint::kMotion;
    else throw LoadError("linearize_at", "expected image or motion");
  }
  if (j.contains("gru_weights")) c.gru = gru_from_json(read_json(j["gru_weights"].get<std::string>()));
  if (j.contains("residual_mlp")) c.fusion.residual = mlp_residual(mlp_from_json(read_json(j["residual_mlp"].get<std::string>())));
  return c;
}

// ---------------------------------------------------------------- sequences

inline std::string visibility_string(const VisibilityMask& v) {
  std::string s(kErrorDims, '1');
  for (int i = 0; i < kErrorDims; ++i)
    if (!v[i]) s[i] = '0';
  return s;
}

/// {"index", "t", "T_WC", "observation": {mean, var} | null, "gt": state | null, "visibility": "0101..."}
inline json to_json(const SequenceFrame& f) {
  json j = {{"index", f.index}, {"t", f.t}, {"T_WC", to_json(f.T_WC)}};
  j["observation"] = f.observation ? to_json(*f.observation) : json(nullptr);
  j["gt"] = f.gt ? to_json(*f.gt) : json(nullptr);
  j["visibility"] = visibility_string(f.visibility);
  return j;
}

inline SequenceFrame frame_from_json(const json& j) {
  SequenceFrame f;
  f.index = detail::integer(detail::field(j, "index"), "index");
  f.t = detail::number(detail::field(j, "t"), "t");
  f.T_WC = transform_from_json(detail::field(j, "T_WC"), "T_WC");
  if (j.contains("observation") && !j["observation"].is_null())
    f.observation = gaussian_state_from_json(j["observation"], "observation");
  if (j.contains("gt") && !j["gt"].is_null()) f.gt = human_state_from_json(j["gt"], "gt");
  if (j.contains("visibility")) {
    const json& v = j["visibility"];
    if (!v.is_string() || v.get<std::string>().size() != kErrorDims)
      throw LoadError("visibility", "expected an 85-character 0/1 string");
    const std::string s = v.get<std::string>();
    for (int i = 0; i < kErrorDims; ++i) {
      if (s[i] != '0' && s[i] != '1') throw LoadError("visibility", "expected only '0' and '1'");
      f.visibility[i] = s[i] == '1';
    }
  }
  return f;
}

inline std::string sequence_to_jsonl(const std::vector<SequenceFrame>& frames) {
  std::string out;
  for (const auto& f : frames) out += to_json(f).dump() + "\n";
  return out;
}

/// Reads a sequence and checks that timestamps strictly increase.
inline std::vector<SequenceFrame> read_sequence(const std::string& path) {
  std::vector<SequenceFrame> frames;
  read_jsonl(path, [&](const json& j, int line) {
    SequenceFrame f = frame_from_json(j);
    if (!frames.empty() && !(f.t > frames.back().t))
      throw LoadError("t", "timestamps must be strictly increasing", line);
    frames.push_back(std::move(f));
  });
  return frames;
}

/// {"index", "t", "status": "ok"} plus posterior fields, or {"index", "t", "status": "waiting"}.
inline json track_output_to_json(const SequenceFrame& f, const std::optional<TrackOutput>& out,
                                 const PointCloudGaussian* joints = nullptr) {
  json j = {{"index", f.index}, {"t", f.t}};
  if (!out) {
    j["status"] = "waiting";
    return j;
  }
  j["status"] = "ok";
  j["source"] = to_string(out->source);
  j["posterior"] = to_json(out->posterior);
  j["T_WC"] = to_json(out->T_WC);
  j["T_WH"] = to_json(out->T_WH);
  if (out->innovation) j["innovation"] = detail::from_vector(*out->innovation);
  if (joints) j["joints"] = to_json(*joints);
  return j;
}

inline PosteriorSource source_from_string(const std::string& s) {
  if (s == "observation") return PosteriorSource::kObservation;
  if (s == "fused") return PosteriorSource::kFused;
  if (s == "predicted") return PosteriorSource::kPredicted;
  if (s == "held") return PosteriorSource::kHeld;
  throw LoadError("source", "unknown posterior source '" + s + "'");
}

struct PosteriorRecord {
  int index = 0;
  double t = 0.0;
  std::optional<TrackOutput> output;
};

inline PosteriorRecord posterior_from_json(const json& j) {
  PosteriorRecord r;
  r.index = detail::integer(detail::field(j, "index"), "index");
  r.t = detail::number(detail::field(j, "t"), "t");
  const json& status = detail::field(j, "status");
  if (!status.is_string()) throw LoadError("status", "expected a string");
  if (status.get<std::string>() == "waiting") return r;
  if (status.get<std::string>() != "ok") throw LoadError("status", "expected ok or waiting");
  TrackOutput o;
  o.index = r.index;
  o.t = r.t;
  o.source = source_from_string(j.value("source", "observation"));
  o.posterior = gaussian_state_from_json(detail::field(j, "posterior"), "posterior");
  o.T_WC = transform_from_json(detail::field(j, "T_WC"), "T_WC");
  o.T_WH = transform_from_json(detail::field(j, "T_WH"), "T_WH");
  if (j.contains("innovation")) o.innovation = detail::vector(j["innovation"], "innovation", kErrorDims);
  r.output = o;
  return r;
}

inline std::vector<PosteriorRecord> read_posteriors(const std::string& path) {
  std::vector<PosteriorRecord> out;
  read_jsonl(path, [&](const json& j, int) { out.push_back(posterior_from_json(j)); });
  return out;
}

/// Aligns posterior records to sequence frames by index.
inline std::vector<std::optional<TrackOutput>> align_posteriors(const std::vector<SequenceFrame>& frames,
                                                                const std::vector<PosteriorRecord>& recs) {
  std::vector<std::optional<TrackOutput>> out(frames.size());
  std::size_t i = 0;
  for (const auto& r : recs) {
    while (i < frames.size() && frames[i].index < r.index) ++i;
    if (i == frames.size() || frames[i].index != r.index)
      throw LoadError("index", "posterior frame " + std::to_string(r.index) + " has no matching sequence frame");
    out[i] = r.output;
  }
  return out;
}

// ---------------------------------------------------------------- reports

inline json to_json(const Chi2Histogram& h) {
  return {{"bin_edges", h.bin_edges}, {"counts", h.counts}, {"expected", h.expected}};
}

inline json to_json(const MetricsReport& r) {
  return {{"units", {{"position", "mm"}, {"acceleration", "mm/s^2"}}},
          {"g_mpjpe", r.g_mpjpe},
          {"pa_mpjpe", r.pa_mpjpe},
          {"g_pve", r.g_pve},
          {"g_accel", r.g_accel},
          {"mean_nees", r.mean_nees},
          {"nees_dof", 3},
          {"nees_samples", r.nees_samples},
          {"nees_skipped", r.nees_skipped},
          {"nees_histogram", to_json(r.nees_histogram)},
          {"frames_evaluated", r.frames.size()}};
}

inline std::string report_csv(const MetricsReport& r) {
  std::string out = "frame,g_mpjpe_mm,pa_mpjpe_mm,g_pve_mm,nees\n";
  char buf[160];
  for (std::size_t i = 0; i < r.frames.size(); ++i) {
    const double pve = i < r.frame_g_pve.size() ? r.frame_g_pve[i] : 0.0;
    const double nees = i < r.frame_nees.size() ? r.frame_nees[i] : 0.0;
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f\n", r.frames[i], r.frame_g_mpjpe[i], r.frame_pa_mpjpe[i], pve,
                  nees);
    out += buf;
  }
  return out;
}

}  // namespace glopro::io
