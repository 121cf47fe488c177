#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "glopro/io.hpp"
#include "glopro/nn.hpp"

using namespace glopro;

namespace {

const std::string kData = GLOPRO_TESTDATA_DIR;

}  // namespace

TEST(Gru, ZeroWeightsHalveHiddenEachStep) {
  GruWeights w = GruWeights::zeros(3, 2, 2);
  w.decoder_b << 0.7, -0.2;
  GruNetwork net(w);
  const Eigen::VectorXd x = Eigen::Vector3d(1.0, -2.0, 0.5);
  // z = 0.5 and the candidate is 0, so h' = 0.5 h; from h = 0 it stays 0.
  net.step(x);
  EXPECT_EQ(net.hidden(), Eigen::VectorXd::Zero(2));
  EXPECT_EQ(net.decode(), w.decoder_b);
}

TEST(Gru, ZeroGateWeightsWithBiasGiveHalfUpdate) {
  GruWeights w = GruWeights::zeros(1, 1, 1);
  w.b_h << 100.0;  // candidate saturates at tanh(100) = 1
  GruNetwork net(w);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(net.step(x)[0], 0.5, 1e-15);
  EXPECT_NEAR(net.step(x)[0], 0.75, 1e-15);
}

TEST(Gru, MatchesScalarReference) {
  const GruWeights w = io::gru_from_json(io::read_json(kData + "/gru_small.json"));
  const io::json golden = io::read_json(kData + "/gru_small_golden.json");
  GruNetwork net(w);
  std::vector<Eigen::VectorXd> xs;
  for (const auto& x : golden["inputs"]) xs.push_back(io::detail::vector(x, "inputs"));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    net.step(xs[k]);
    const Eigen::VectorXd h = io::detail::vector(golden["hidden"][k], "hidden");
    EXPECT_LT((net.hidden() - h).cwiseAbs().maxCoeff(), 1e-6) << "step " << k;
  }
  const Eigen::VectorXd y = io::detail::vector(golden["output"], "output");
  EXPECT_LT((net.decode() - y).cwiseAbs().maxCoeff(), 1e-6);
  // run() restarts from a zero hidden state.
  EXPECT_LT((net.run(xs) - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Gru, IsStateful) {
  const GruWeights w = io::gru_from_json(io::read_json(kData + "/gru_small.json"));
  GruNetwork net(w);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(w.input_dim, -0.3, 0.4);
  net.step(x);
  const Eigen::VectorXd one = net.decode();
  net.step(x);
  EXPECT_GT((net.decode() - one).norm(), 1e-6);
  net.reset();
  net.step(x);
  EXPECT_EQ(net.decode(), one);
}

TEST(Gru, ValidatesShapes) {
  GruWeights w = GruWeights::zeros(3, 2, 2);
  w.U_r = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_THROW(w.validate(), WeightsError);
  EXPECT_THROW(GruNetwork{w}, WeightsError);
  GruNetwork ok(GruWeights::zeros(3, 2, 2));
  EXPECT_THROW(ok.step(Eigen::VectorXd::Zero(4)), WeightsError);
}

TEST(Mlp, EvaluatesLayersInOrder) {
  DenseLayer a{Eigen::MatrixXd::Identity(2, 2) * 2.0, Eigen::Vector2d(-1.0, 1.0), Activation::kRelu};
  DenseLayer b{Eigen::RowVector2d(1.0, 1.0), Eigen::VectorXd::Constant(1, 0.5), Activation::kLinear};
  const Mlp mlp({a, b});
  // relu(2 * [0.25, -1] + [-1, 1]) = [0, 0]; sum + 0.5 = 0.5
  EXPECT_DOUBLE_EQ(mlp(Eigen::Vector2d(0.25, -1.0))[0], 0.5);
  EXPECT_DOUBLE_EQ(mlp(Eigen::Vector2d(1.0, 1.0))[0], 1.0 + 3.0 + 0.5);
}

TEST(Mlp, RejectsInconsistentLayers) {
  DenseLayer a{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3), Activation::kTanh};
  DenseLayer b{Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1), Activation::kLinear};
  EXPECT_THROW(Mlp({a, b}), WeightsError);
  EXPECT_THROW(Mlp(std::vector<DenseLayer>{}), WeightsError);
}
