#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vcbm/loss.hpp"
#include "vcbm/model.hpp"
#include "vcbm/rng.hpp"

using Catch::Approx;
using vcbm::ExplanationBits;
using vcbm::Prediction;
using vcbm::Rng;
using vcbm::Tensor;

namespace {

Prediction hand_prediction(std::vector<double> maneuver,
                           std::vector<double> expl, bool requires_grad = false) {
  Prediction p;
  p.maneuver_logits = Tensor::from({vcbm::kNumManeuvers}, std::move(maneuver),
                                   requires_grad);
  p.expl_logits = Tensor::from({vcbm::kNumEgoExplanations}, std::move(expl),
                               requires_grad);
  p.expl_probs = vcbm::sigmoid(p.expl_logits);
  p.maneuver_probs = vcbm::softmax(p.maneuver_logits, 0);
  return p;
}

}  // namespace

TEST_CASE("closed-form losses: uniform logits") {
  auto pred = hand_prediction(std::vector<double>(7, 0.0),
                              std::vector<double>(17, 0.0));
  ExplanationBits e{};
  auto parts = vcbm::joint_loss(pred, 3, e, 0.5);
  REQUIRE(parts.ly.data()[0] == Approx(std::log(7.0)).margin(1e-12));
  REQUIRE(parts.lc_sum.data()[0] == Approx(17.0 * std::log(2.0)).margin(1e-12));
  REQUIRE(parts.total.data()[0] ==
          Approx(std::log(7.0) + 0.5 * 17.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("zero-logit BCE is ln 2 regardless of targets") {
  auto pred = hand_prediction(std::vector<double>(7, 0.0),
                              std::vector<double>(17, 0.0));
  ExplanationBits ones;
  ones.fill(1);
  auto parts = vcbm::joint_loss(pred, 0, ones, 1.0);
  REQUIRE(parts.lc_sum.data()[0] == Approx(17.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("confident correct predictions drive the loss to zero") {
  std::vector<double> maneuver(7, -40.0);
  maneuver[2] = 40.0;
  std::vector<double> expl(17);
  ExplanationBits e{};
  for (std::size_t j = 0; j < 17; ++j) {
    e[j] = static_cast<std::uint8_t>(j % 2);
    expl[j] = e[j] ? 40.0 : -40.0;
  }
  auto parts = vcbm::joint_loss(hand_prediction(maneuver, expl), 2, e, 0.5);
  REQUIRE(parts.total.data()[0] < 1e-9);
  REQUIRE(parts.total.data()[0] >= 0.0);
}

TEST_CASE("loss additivity") {
  Rng rng(31);
  std::vector<double> maneuver(7), expl(17);
  for (auto& v : maneuver) v = rng.uniform(-2.0, 2.0);
  for (auto& v : expl) v = rng.uniform(-2.0, 2.0);
  ExplanationBits e{};
  for (std::size_t j = 0; j < 17; ++j) {
    e[j] = static_cast<std::uint8_t>(rng.uniform_below(2));
  }
  const double lambda = 0.7;
  auto parts = vcbm::joint_loss(hand_prediction(maneuver, expl), 4, e, lambda);
  REQUIRE(std::fabs(parts.total.data()[0] -
                    (parts.ly.data()[0] + lambda * parts.lc_sum.data()[0])) <
          1e-9);
}

TEST_CASE("invalid labels are rejected") {
  auto pred = hand_prediction(std::vector<double>(7, 0.0),
                              std::vector<double>(17, 0.0));
  ExplanationBits e{};
  REQUIRE_THROWS_AS(vcbm::joint_loss(pred, 7, e, 0.5), vcbm::data_error);
  ExplanationBits bad{};
  bad[3] = 2;
  REQUIRE_THROWS_AS(vcbm::joint_loss(pred, 0, bad, 0.5), vcbm::data_error);
  REQUIRE_THROWS_AS(vcbm::joint_loss(pred, 0, e, -0.1), vcbm::data_error);
}

TEST_CASE("lambda zero reduces to pure cross entropy with zero BCE gradients") {
  // Leaf logits: the BCE path must transmit exactly zero gradient.
  auto pred = hand_prediction({0.4, -1, 2, 0.3, 0, 1, -2},
                              std::vector<double>(17, 0.5), true);
  ExplanationBits e{};
  e[1] = e[4] = 1;
  auto parts = vcbm::joint_loss(pred, 2, e, 0.0);
  REQUIRE(parts.total.data()[0] == parts.ly.data()[0]);
  vcbm::backward(vcbm::sum(parts.total, 0));
  for (double g : pred.expl_logits.grad()) REQUIRE(g == 0.0);
  for (double g : pred.maneuver_logits.grad()) REQUIRE(std::isfinite(g));
}

TEST_CASE("lambda zero matches pure-LY gradients through the full model") {
  vcbm::ModelConfig cfg;
  cfg.tubelet = {2, 4, 4};
  cfg.channels = 1;
  cfg.dim_per_view = 4;
  cfg.k = 2;
  auto model = vcbm::VcbmModel::init(cfg, 5);
  Rng rng(37);
  auto gaze = vcbm::VideoClip::make(vcbm::View::kGaze, 4, 8, 8, 1);
  auto front = vcbm::VideoClip::make(vcbm::View::kFront, 4, 8, 8, 1);
  for (auto& v : gaze.voxels) v = rng.uniform();
  for (auto& v : front.voxels) v = rng.uniform();
  ExplanationBits e{};
  e[3] = 1;

  auto params = model.trainable();
  for (auto& p : params) p.zero_grad();
  auto parts = vcbm::joint_loss(model.forward(gaze, front), 1, e, 0.0);
  vcbm::backward(vcbm::sum(parts.total, 0));
  std::vector<std::vector<double>> with_zero_lambda;
  for (auto& p : params) with_zero_lambda.push_back(p.grad());

  for (auto& p : params) p.zero_grad();
  auto pure = vcbm::joint_loss(model.forward(gaze, front), 1, e, 0.0);
  vcbm::backward(vcbm::sum(pure.ly, 0));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& a = with_zero_lambda[pi];
    const auto& b = params[pi].grad();
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
  }
}

TEST_CASE("batch mean averages sample losses") {
  Tensor a = Tensor::from({1}, {2.0});
  Tensor b = Tensor::from({1}, {4.0});
  Tensor m = vcbm::batch_mean({a, b});
  REQUIRE(m.shape().empty());
  REQUIRE(m.value() == Approx(3.0).margin(1e-15));
  REQUIRE_THROWS_AS(vcbm::batch_mean({}), vcbm::data_error);
}
