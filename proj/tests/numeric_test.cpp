#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "grec/numeric/checkpoint.hpp"
#include "grec/numeric/gradcheck.hpp"
#include "grec/numeric/mlp.hpp"
#include "grec/numeric/sgd.hpp"

namespace grec {
namespace {

TEST(MlpForward, IdentitySingleLayer) {
  auto p = identity_mlp<double>(2);
  const std::vector<double> x{1.0, 2.0};
  const auto fwd = mlp_forward<double>(x, p);
  EXPECT_EQ(fwd.output, (std::vector<double>{1.0, 2.0}));
}

TEST(MlpForward, ReluClampsNegatives) {
  auto p = MlpParams<double>::zeros({2, 1, 1});
  p.weights[0].fill(-1.0);
  p.weights[1].fill(1.0);
  const std::vector<double> x{1.0, 1.0};
  const auto fwd = mlp_forward<double>(x, p);
  EXPECT_EQ(fwd.tape.pre_activations[0][0], -2.0);
  EXPECT_EQ(fwd.tape.inputs[1][0], 0.0);
  EXPECT_EQ(fwd.output[0], 0.0);
}

TEST(MlpForward, MatchesHandMatrixChain) {
  Rng rng(7);
  auto p = init_mlp<double>({4, 3, 2}, rng);
  for (auto& b : p.biases[0]) b = rng.uniform(-0.5, 0.5);
  for (auto& b : p.biases[1]) b = rng.uniform(-0.5, 0.5);
  const std::vector<double> x{0.3, -1.2, 2.0, 0.7};

  // Written out independently of the affine/relu kernels.
  double h[3];
  for (int i = 0; i < 3; ++i) {
    double s = p.biases[0][i];
    for (int j = 0; j < 4; ++j) s += p.weights[0].data()[i * 4 + j] * x[j];
    h[i] = s < 0 ? 0 : s;
  }
  double y[2];
  for (int i = 0; i < 2; ++i) {
    double s = p.biases[1][i];
    for (int j = 0; j < 3; ++j) s += p.weights[1].data()[i * 3 + j] * h[j];
    y[i] = s;
  }
  const auto out = mlp_forward<double>(x, p).output;
  ASSERT_EQ(out.size(), 2u);
  EXPECT_NEAR(out[0], y[0], 1e-14);
  EXPECT_NEAR(out[1], y[1], 1e-14);
  EXPECT_EQ(mlp_apply<double>(x, p), out);
}

TEST(MlpForward, RejectsDimensionMismatch) {
  auto p = MlpParams<float>::zeros({3, 2});
  const std::vector<float> x{1.0f, 2.0f};
  EXPECT_THROW(mlp_forward<float>(x, p), InputError);
}

TEST(MlpForward, FiniteOutputForWideNets) {
  Rng rng(3);
  auto p = init_mlp<float>({1024, 1024, 64}, rng);
  std::vector<float> x(1024);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-10, 10));
  const auto out = mlp_apply<float>(x, p);
  EXPECT_TRUE(all_finite<float>(out));
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(1);
  auto p = init_mlp<double>({3, 4, 2}, rng);
  const std::vector<double> x{1, 2, 3};
  const auto fwd = mlp_forward<double>(x, p);
  const std::vector<double> g(2, 0.0);
  const auto grads = mlp_backward<double>(p, fwd.tape, g);
  for (double v : flatten(grads)) EXPECT_EQ(v, 0.0);
}

TEST(MlpBackward, LinearChainRule) {
  auto p = MlpParams<double>::zeros({2, 1});
  p.weights[0](0, 0) = 0.5;
  p.weights[0](0, 1) = -0.25;
  const std::vector<double> x{3.0, -4.0};
  const auto fwd = mlp_forward<double>(x, p);
  const std::vector<double> g{1.0};
  const auto grads = mlp_backward<double>(p, fwd.tape, g);
  EXPECT_EQ(grads.weights[0](0, 0), 3.0);
  EXPECT_EQ(grads.weights[0](0, 1), -4.0);
  EXPECT_EQ(grads.biases[0][0], 1.0);
}

TEST(MlpBackward, RejectsMismatchedTape) {
  Rng rng(2);
  auto p = init_mlp<double>({3, 4, 2}, rng);
  auto other = init_mlp<double>({3, 2}, rng);
  const std::vector<double> x{1, 2, 3};
  const auto fwd = mlp_forward<double>(x, other);
  const std::vector<double> g(2, 1.0);
  EXPECT_THROW(mlp_backward<double>(p, fwd.tape, g), InputError);
}

TEST(MlpBackward, MatchesFiniteDifferencesOnRandomNets) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 50; ++seed) {
    Rng rng(seed);
    const std::size_t d0 = 2 + rng.below(4), d1 = 2 + rng.below(5), d2 = 2 + rng.below(5),
                      d3 = 1 + rng.below(3);
    auto p = init_mlp<double>({d0, d1, d2, d3}, rng);
    for (auto& b : p.biases) for (auto& v : b) v = rng.uniform(-0.3, 0.3);
    std::vector<double> x(d0), dir(d3);
    for (auto& v : x) v = rng.uniform(-2, 2);
    for (auto& v : dir) v = rng.uniform(-1, 1);
    if (min_abs_pre_activation(mlp_forward<double>(x, p).tape) < 1e-3) continue;
    LossAndGradient<double> f = [&](std::span<const double> theta) {
      auto q = p;
      assign_flat(q, theta);
      const auto fwd = mlp_forward<double>(x, q);
      double loss = 0;
      for (std::size_t i = 0; i < d3; ++i) loss += dir[i] * fwd.output[i];
      return std::pair{loss, flatten(mlp_backward<double>(q, fwd.tape, dir))};
    };
    const auto theta = flatten(p);
    const auto res = finite_difference_check<double>(f, theta, 1e-6);
    EXPECT_LT(res.max_relative_error, 1e-4) << "seed " << seed;
    ++checked;
  }
}

TEST(GradCheck, QuadraticIsExact) {
  LossAndGradient<double> f = [](std::span<const double> t) {
    std::vector<double> g(t.size());
    double v = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      v += t[i] * t[i];
      g[i] = 2 * t[i];
    }
    return std::pair{v, g};
  };
  const std::vector<double> theta{1.0, 1.0};
  EXPECT_LT(finite_difference_check<double>(f, theta, 1e-4).max_relative_error, 1e-6);
}

TEST(GradCheck, DetectsWrongGradient) {
  LossAndGradient<double> f = [](std::span<const double> t) {
    return std::pair{t[0] * t[0], std::vector<double>{3 * t[0]}};
  };
  const std::vector<double> theta{1.0};
  EXPECT_GT(finite_difference_check<double>(f, theta, 1e-4).max_relative_error, 0.1);
}

TEST(Sgd, PlainStep) {
  auto p = MlpParams<double>::zeros({1, 1});
  p.weights[0](0, 0) = 1.0;
  auto g = p.zeros_like();
  g.weights[0](0, 0) = 1.0;
  const auto q = sgd_step(p, g, {0.1, 0.0});
  EXPECT_DOUBLE_EQ(q.weights[0](0, 0), 0.9);
}

TEST(Sgd, DecayOnlyStep) {
  auto p = MlpParams<double>::zeros({1, 1});
  p.weights[0](0, 0) = 1.0;
  const auto q = sgd_step(p, p.zeros_like(), {0.1, 1e-5});
  EXPECT_DOUBLE_EQ(q.weights[0](0, 0), 1.0 - 1e-6);
}

TEST(Sgd, ZeroGradientIsIdentity) {
  Rng rng(11);
  auto p = init_mlp<float>({5, 7, 3}, rng);
  const auto q = sgd_step(p, p.zeros_like(), {0.5, 0.0});
  EXPECT_EQ(mlp_to_bytes(p), mlp_to_bytes(q));
}

TEST(Sgd, RejectsNonFiniteGradientNamingLayer) {
  Rng rng(11);
  auto p = init_mlp<float>({2, 2, 2}, rng);
  auto g = p.zeros_like();
  g.biases[1][0] = std::numeric_limits<float>::quiet_NaN();
  const auto before = p;
  try {
    sgd_step_inplace(p, g, {0.1, 0.0});
    FAIL() << "expected rejection";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("layer1.bias"), std::string::npos);
  }
  EXPECT_EQ(p, before);
}

TEST(Sgd, RejectsShapeMismatch) {
  auto p = MlpParams<double>::zeros({2, 2});
  auto g = MlpParams<double>::zeros({2, 3});
  EXPECT_THROW(sgd_step_inplace(p, g, {0.1, 0.0}), InputError);
}

TEST(Checkpoint, RoundTripIsBitExactForRandomShapes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<std::size_t> dims;
    const auto n = 2 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) dims.push_back(1 + rng.below(9));
    const auto pf = init_mlp<float>(dims, rng);
    const auto bytes = mlp_to_bytes(pf);
    EXPECT_EQ(mlp_from_bytes<float>(bytes), pf);
    EXPECT_EQ(mlp_to_bytes(mlp_from_bytes<float>(bytes)), bytes);
    const auto pd = init_mlp<double>(dims, rng);
    EXPECT_EQ(mlp_from_bytes<double>(mlp_to_bytes(pd)), pd);
  }
}

TEST(Checkpoint, HeaderLayout) {
  auto p = MlpParams<float>::zeros({3, 2});
  const auto bytes = mlp_to_bytes(p);
  EXPECT_EQ(bytes.substr(0, 4), "GREC");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // version lo
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 4);  // float32
  // magic, version, precision, kind, n_dims, dims, 8 weights + biases
  EXPECT_EQ(bytes.size(), 4u + 2 + 1 + 1 + 4 + 2 * 4 + (6 + 2) * 4);
}

TEST(Checkpoint, RejectsGarbage) {
  EXPECT_THROW(mlp_from_bytes<float>("NOPE"), FormatError);
  auto bytes = mlp_to_bytes(MlpParams<float>::zeros({3, 2}));
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(mlp_from_bytes<float>(bytes), FormatError);
}

TEST(Determinism, SameSeedSameParams) {
  Rng a(42), b(42);
  EXPECT_EQ(init_mlp<float>({8, 4, 2}, a), init_mlp<float>({8, 4, 2}, b));
}

}  // namespace
}  // namespace grec
