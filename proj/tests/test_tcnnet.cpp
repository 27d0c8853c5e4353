#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ecseg/tcnnet.hpp"
#include "oracles.hpp"

using namespace ecseg;
using namespace ecseg::tcn;

namespace {

NetConfig small_config(DilationSchedule s = DilationSchedule::exponential) {
  NetConfig c;
  c.input_dim = 4;
  c.num_filters = 8;
  c.schedule = s;
  return c;
}

Matrix random_features(int dim, int len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0, 1);
  Matrix x(dim, len);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = N(rng);
  return x;
}

std::vector<std::uint8_t> blocky_labels(int len) {
  std::vector<std::uint8_t> y(len);
  for (int t = 0; t < len; ++t) y[t] = (t / 7) % 2;
  return y;
}

std::vector<Matrix> constant_logits(int stages, int len, double a, double b) {
  Matrix z(2, len);
  z.row(0).setConstant(a);
  z.row(1).setConstant(b);
  return std::vector<Matrix>(stages, z);
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
  const auto c = small_config();
  const auto a = init(c, 1), b = init(c, 1), d = init(c, 2);
  std::vector<const Matrix*> ta, tb, td;
  for_each_tensor(a, [&](const std::string&, const Matrix& m) { ta.push_back(&m); });
  for_each_tensor(b, [&](const std::string&, const Matrix& m) { tb.push_back(&m); });
  for_each_tensor(d, [&](const std::string&, const Matrix& m) { td.push_back(&m); });
  bool any_diff = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(*ta[i], *tb[i]);
    any_diff = any_diff || *ta[i] != *td[i];
  }
  EXPECT_TRUE(any_diff);
}

TEST(Forward, ShapesForSingleFrame) {
  const auto c = small_config();
  const auto p = init(c, 3);
  const auto out = forward(p, random_features(4, 1, 1));
  ASSERT_EQ(static_cast<int>(out.logits.size()), c.num_stages());
  for (const auto& z : out.logits) {
    EXPECT_EQ(z.rows(), 2);
    EXPECT_EQ(z.cols(), 1);
  }
}

TEST(Forward, ZeroInputZeroBiasGivesZeroLogits) {
  auto p = init(small_config(), 3);
  for_each_tensor(p, [](const std::string& name, Matrix& m) {
    if (name.ends_with(".b")) m.setZero();
  });
  const auto out = forward(p, Matrix::Zero(4, 10));
  EXPECT_LT(out.logits[0].cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, DimensionMismatchRejected) {
  const auto p = init(small_config(), 3);
  EXPECT_THROW(forward(p, Matrix::Zero(5, 10)), DataError);
}

TEST(Loss, SaturatedCorrectLogits) {
  const auto c = small_config();
  const double gap = std::log((1 - 1e-9) / 1e-9);
  auto z = constant_logits(c.num_stages(), 20, gap, 0);
  const std::vector<std::uint8_t> y(20, 0);
  const auto l = loss(z, y, c);
  for (double v : l.classification) EXPECT_LT(v, 1e-6);
}

TEST(Loss, ConstantLogitsHaveNoSmoothingPenalty) {
  const auto c = small_config();
  const auto l = loss(constant_logits(c.num_stages(), 20, 0.3, -1.2), blocky_labels(20), c);
  for (double v : l.smoothing) EXPECT_EQ(v, 0);
}

TEST(Loss, UniformLogitsGiveLogTwo) {
  const auto c = small_config();
  const auto l = loss(constant_logits(c.num_stages(), 20, 0, 0), blocky_labels(20), c);
  for (double v : l.classification) EXPECT_NEAR(v, std::log(2.0), 1e-12);
}

TEST(Loss, LengthMismatchRejected) {
  const auto c = small_config();
  const std::vector<std::uint8_t> y(5, 0);
  EXPECT_THROW(loss(constant_logits(c.num_stages(), 6, 0, 0), y, c), DataError);
}

TEST(Backward, MatchesFiniteDifferencesExponential) {
  const auto c = small_config(DilationSchedule::exponential);
  const auto g = oracle::check_gradients(init(c, 3), random_features(4, 32, 5), blocky_labels(32));
  EXPECT_LT(g.max_rel, 1e-4) << g.worst;
  EXPECT_EQ(g.checked, parameter_count(init(c, 3)));
}

TEST(Backward, MatchesFiniteDifferencesLinear) {
  const auto c = small_config(DilationSchedule::linear_paper);
  const auto g = oracle::check_gradients(init(c, 4), random_features(4, 32, 6), blocky_labels(32));
  EXPECT_LT(g.max_rel, 1e-4) << g.worst;
}

TEST(Backward, TruncationActiveStillMatches) {
  // A small clamp forces many truncated adjacent differences.
  auto c = small_config();
  c.tau_trunc = 0.05;
  c.lambda = 1.0;
  c.prediction_layers = 4;
  c.refinement_layers = 3;
  c.refinement_stages = 1;
  const auto g = oracle::check_gradients(init(c, 8), random_features(4, 24, 7), blocky_labels(24));
  EXPECT_LT(g.max_rel, 1e-4) << g.worst;
}

TEST(Backward, ZeroGradientAtSaturatedMinimum) {
  // Output layer weights zero and a huge bias on the right class: every stage
  // is saturated and constant in time.
  auto c = small_config();
  c.prediction_layers = 3;
  c.refinement_layers = 2;
  c.refinement_stages = 1;
  auto p = init(c, 1);
  const auto x = random_features(4, 16, 2);
  const std::vector<std::uint8_t> y(16, 1);
  for_each_tensor(p, [](const std::string& name, Matrix& m) {
    if (name.find("classifier") != std::string::npos) {
      if (m.cols() == 1 && m.rows() == 2) {
        m(0, 0) = -30;
        m(1, 0) = 30;
      } else {
        m.setZero();
      }
    }
  });
  const auto lg = loss_and_gradients(p, x, y);
  double sq = 0;
  for_each_tensor(lg.gradients, [&](const std::string&, const Matrix& m) { sq += m.squaredNorm(); });
  EXPECT_LT(std::sqrt(sq), 1e-6);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
  auto c = small_config();
  auto p = init(c, 1);
  auto g = zeros_like(c);
  for_each_tensor(g, [](const std::string&, Matrix& m) { m.setConstant(0.37); });
  const auto before = p;
  AdamState st;
  adam_step(p, g, st, {0.01});
  std::vector<const Matrix*> a, b;
  for_each_tensor(before, [&](const std::string&, const Matrix& m) { a.push_back(&m); });
  for_each_tensor(p, [&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LT(((*b[i] - *a[i]).array() + 0.01).abs().maxCoeff(), 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto c = small_config();
  auto p = init(c, 1);
  const auto before = p;
  AdamState st;
  adam_step(p, zeros_like(c), st);
  std::vector<const Matrix*> a, b;
  for_each_tensor(before, [&](const std::string&, const Matrix& m) { a.push_back(&m); });
  for_each_tensor(p, [&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(Adam, NonFiniteGradientRejected) {
  auto c = small_config();
  auto p = init(c, 1);
  auto g = zeros_like(c);
  for_each_tensor(g, [](const std::string&, Matrix& m) { m(0, 0) = std::nan(""); });
  AdamState st;
  EXPECT_THROW(adam_step(p, g, st), DataError);
}

TEST(Predict, ShapeSaturationAndTies) {
  auto c = small_config();
  auto p = init(c, 1);
  EXPECT_EQ(predict(p, random_features(4, 13, 1)).size(), 13u);
  auto set_out_bias = [&](double a, double b) {
    for_each_tensor(p, [&](const std::string& name, Matrix& m) {
      if (name.find("classifier") == std::string::npos) return;
      if (m.cols() == 1 && m.rows() == 2) {
        m(0, 0) = a;
        m(1, 0) = b;
      } else {
        m.setZero();
      }
    });
  };
  set_out_bias(-50, 50);
  for (auto v : predict(p, random_features(4, 9, 2))) EXPECT_EQ(v, 1);
  set_out_bias(0, 0);
  for (auto v : predict(p, random_features(4, 9, 2))) EXPECT_EQ(v, 0);
}

TEST(ReceptiveField, Schedules) {
  auto c = small_config(DilationSchedule::exponential);
  EXPECT_EQ(dual_dilations(c, 0), std::make_pair(1, 1024));
  EXPECT_EQ(dual_dilations(c, 10), std::make_pair(1024, 1));
  // max dilation per layer: 1024 512 256 128 64 32 64 128 256 512 1024
  EXPECT_EQ(prediction_receptive_radius(c), 4000);
  c.schedule = DilationSchedule::linear_paper;
  EXPECT_EQ(dual_dilations(c, 0), std::make_pair(1, 10));
  EXPECT_EQ(dual_dilations(c, 10), std::make_pair(11, 1));
}

TEST(Checkpoint, RoundTrip) {
  oracle::TempDir dir("ckpt");
  const auto p = init(small_config(), 9);
  save_checkpoint(p, dir / "m.ckpt", 3, {{"note", "x"}});
  const auto ck = load_checkpoint(dir / "m.ckpt", p.config);
  EXPECT_EQ(ck.iteration, 3);
  EXPECT_EQ(ck.meta["note"], "x");
  std::vector<const Matrix*> a, b;
  for_each_tensor(p, [&](const std::string&, const Matrix& m) { a.push_back(&m); });
  for_each_tensor(ck.params, [&](const std::string&, const Matrix& m) { b.push_back(&m); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(Checkpoint, ConfigMismatchRejected) {
  oracle::TempDir dir("ckpt2");
  const auto p = init(small_config(), 9);
  save_checkpoint(p, dir / "m.ckpt");
  auto other = small_config();
  other.num_filters = 16;
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", other), DataError);
}

TEST(Checkpoint, CorruptionDetected) {
  oracle::TempDir dir("ckpt3");
  save_checkpoint(init(small_config(), 9), dir / "m.ckpt");
  auto bytes = oracle::read_file(dir / "m.ckpt");
  bytes[bytes.size() - 3] ^= 0x5a;
  std::ofstream(dir / "m.ckpt", std::ios::binary) << bytes;
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}
