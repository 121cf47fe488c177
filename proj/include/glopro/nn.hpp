#pragma once

// Inference-only GRU and MLP blocks loaded from serialized weights.

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "glopro/errors.hpp"

namespace glopro {

/// Single-layer GRU with an affine decoder on the hidden state:
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h~ + z * h
///   y  = decoder_W h + decoder_b
struct GruWeights {
  int input_dim = 0;
  int hidden_dim = 0;
  Eigen::MatrixXd W_z, W_r, W_h;  // hidden x input
  Eigen::MatrixXd U_z, U_r, U_h;  // hidden x hidden
  Eigen::VectorXd b_z, b_r, b_h;  // hidden
  Eigen::MatrixXd decoder_W;      // output x hidden
  Eigen::VectorXd decoder_b;      // output

  int output_dim() const { return static_cast<int>(decoder_b.size()); }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw WeightsError("GRU weights: " + what);
    };
    need(input_dim > 0 && hidden_dim > 0, "input_dim and hidden_dim must be positive");
    for (const auto* w : {&W_z, &W_r, &W_h})
      need(w->rows() == hidden_dim && w->cols() == input_dim, "W_* must be hidden_dim x input_dim");
    for (const auto* u : {&U_z, &U_r, &U_h})
      need(u->rows() == hidden_dim && u->cols() == hidden_dim, "U_* must be hidden_dim x hidden_dim");
    for (const auto* b : {&b_z, &b_r, &b_h}) need(b->size() == hidden_dim, "b_* must have hidden_dim entries");
    need(decoder_W.cols() == hidden_dim && decoder_W.rows() == decoder_b.size() && decoder_b.size() > 0,
         "decoder_W must be output x hidden_dim, matching decoder_b");
  }

  static GruWeights zeros(int input_dim, int hidden_dim, int output_dim) {
    GruWeights w;
    w.input_dim = input_dim;
    w.hidden_dim = hidden_dim;
    w.W_z = w.W_r = w.W_h = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
    w.U_z = w.U_r = w.U_h = Eigen::MatrixXd::Zero(hidden_dim, hidden_dim);
    w.b_z = w.b_r = w.b_h = Eigen::VectorXd::Zero(hidden_dim);
    w.decoder_W = Eigen::MatrixXd::Zero(output_dim, hidden_dim);
    w.decoder_b = Eigen::VectorXd::Zero(output_dim);
    return w;
  }
};

namespace detail {
inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}
}  // namespace detail

/// Holds the recurrent state; one instance per tracker.
class GruNetwork {
 public:
  explicit GruNetwork(GruWeights w) : w_(std::move(w)) {
    w_.validate();
    reset();
  }

  const GruWeights& weights() const { return w_; }
  const Eigen::VectorXd& hidden() const { return h_; }
  void reset() { h_ = Eigen::VectorXd::Zero(w_.hidden_dim); }

  const Eigen::VectorXd& step(const Eigen::VectorXd& x) {
    if (x.size() != w_.input_dim)
      throw WeightsError("GRU input has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(w_.input_dim));
    const Eigen::VectorXd z = detail::sigmoid(w_.W_z * x + w_.U_z * h_ + w_.b_z);
    const Eigen::VectorXd r = detail::sigmoid(w_.W_r * x + w_.U_r * h_ + w_.b_r);
    const Eigen::VectorXd cand = (w_.W_h * x + w_.U_h * r.cwiseProduct(h_) + w_.b_h).array().tanh().matrix();
    h_ = (1.0 - z.array()).matrix().cwiseProduct(cand) + z.cwiseProduct(h_);
    return h_;
  }

  Eigen::VectorXd decode() const { return w_.decoder_W * h_ + w_.decoder_b; }

  /// Resets, consumes the sequence in order, and decodes the final state.
  Eigen::VectorXd run(std::span<const Eigen::VectorXd> sequence) {
    reset();
    for (const auto& x : sequence) step(x);
    return decode();
  }

 private:
  GruWeights w_;
  Eigen::VectorXd h_;
};

enum class Activation { kLinear, kRelu, kTanh };

struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Activation activation = Activation::kLinear;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw WeightsError("MLP: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.W.rows() != l.b.size()) throw WeightsError("MLP layer " + std::to_string(i) + ": W rows != b size");
      if (i > 0 && l.W.cols() != layers_[i - 1].W.rows())
        throw WeightsError("MLP layer " + std::to_string(i) + ": input size does not match previous layer");
    }
  }

  int input_dim() const { return static_cast<int>(layers_.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().W.rows()); }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim()) throw WeightsError("MLP input size mismatch");
    Eigen::VectorXd y = x;
    for (const auto& l : layers_) {
      y = l.W * y + l.b;
      switch (l.activation) {
        case Activation::kRelu: y = y.cwiseMax(0.0); break;
        case Activation::kTanh: y = y.array().tanh().matrix(); break;
        case Activation::kLinear: break;
      }
    }
    return y;
  }

 private:
  std::vector<DenseLayer> layers_;
};

}  // namespace glopro
