#include <gtest/gtest.h>

#include <cmath>

#include "cograsp/errors.hpp"
#include "cograsp/nn_core.hpp"

using namespace cograsp;
using namespace cograsp::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(-scale, scale);
  return t;
}

// Scalar probe: sum(out * fixed random weights), so no output entry cancels.
Var probe(Graph& g, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, g.constant(random_tensor(out.value().shape, rng))));
}

constexpr double kTol = 1e-4;
constexpr int kSeeds = 10;

}  // namespace

TEST(Autodiff, SumGivesOnes) {
  Graph g;
  ParameterStore s;
  Rng rng(1);
  Parameter& x = s.add("x", random_tensor({5}, rng));
  const Var v = g.param(x);
  g.backward(sum(v));
  EXPECT_EQ(g.grad(v), Tensor({5}, 1.0));
  EXPECT_EQ(x.grad, Tensor({5}, 1.0));
}

TEST(Autodiff, SquareGivesTwiceInput) {
  Graph g;
  ParameterStore s;
  Rng rng(2);
  Parameter& x = s.add("x", random_tensor({1, 7}, rng));
  const Var v = g.param(x);
  g.backward(sum(mul(v, v)));
  for (std::size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(x.grad[i], 2.0 * x.value[i]);
}

TEST(Autodiff, ShapeErrors) {
  Graph g;
  const Var a = g.constant(Tensor({2, 3}));
  const Var b = g.constant(Tensor({3, 2}));
  EXPECT_THROW(add(a, b), ShapeMismatch);
  EXPECT_THROW(matmul(a, a), ShapeMismatch);
  EXPECT_THROW(g.backward(a), ShapeMismatch);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0}), ShapeMismatch);
}

TEST(Autodiff, ConstantsCarryNoGradient) {
  Graph g;
  ParameterStore s;
  Parameter& w = s.add("w", Tensor({1, 2}, 1.0));
  const Var c = g.constant(Tensor({1, 2}, 3.0));
  g.backward(sum(mul(c, g.param(w))));
  EXPECT_FALSE(g.requires_grad(c));
  EXPECT_EQ(w.grad, Tensor({1, 2}, 3.0));
}

// Every op: inputs are parameters so the checker perturbs them directly.
TEST(GradientCheck, ElementwiseAndStructuralOps) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    ParameterStore s;
    Rng rng(100 + seed);
    s.add("a", random_tensor({4, 3}, rng, 2.0));
    s.add("b", random_tensor({4, 3}, rng, 2.0));
    s.add("c", random_tensor({3, 5}, rng));
    s.add("r", random_tensor({1, 3}, rng));
    const auto loss = [&](Graph& g) {
      const Var a = g.param(s.at("a"));
      const Var b = g.param(s.at("b"));
      const Var c = g.param(s.at("c"));
      const Var r = g.param(s.at("r"));
      const std::size_t pick[] = {2, 0, 2};
      const Var mixed[] = {add(a, b), sub(a, b), mul(a, b), affine(a, -1.5, 0.3), sigmoid(a), tanh(b), relu(a),
                           softplus(b)};
      const Var stacked = stack_rows(mixed);
      const Var cat[] = {reverse_rows(a), repeat_rows(r, 4), slice_cols(b, 1, 2)};
      const Var parts[] = {probe(g, stacked, 1), probe(g, matmul(a, c), 2), probe(g, transpose(c), 3),
                           probe(g, concat_cols(cat), 4), probe(g, mean_rows(a), 5),
                           probe(g, gather_rows(b, pick), 6), probe(g, row(a, 3), 7), mean(b)};
      return sum(stack_rows(std::span<const Var>(parts)));
    };
    const auto res = check_gradients(s, loss);
    EXPECT_LE(res.max_rel_error, kTol) << "seed " << seed << " worst " << res.worst;
  }
}

TEST(GradientCheck, LinearLayerNormNormalize) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    ParameterStore s;
    Rng rng(200 + seed);
    s.add("x", random_tensor({3, 6}, rng));
    const auto lin = LinearLayer::create(s, "lin", 6, 5, rng);
    const auto ln = LayerNormLayer::create(s, "ln", 5);
    // Non-default scale and shift exercise their gradients.
    for (auto& v : s.at("ln.gamma").value.values) v = rng.uniform(0.5, 1.5);
    for (auto& v : s.at("ln.beta").value.values) v = rng.uniform(-0.5, 0.5);
    const auto loss = [&](Graph& g) {
      const Var y = ln(g, s, lin(g, s, g.param(s.at("x"))));
      const Var parts[] = {probe(g, y, 1), probe(g, l2_normalize_rows(y), 2)};
      return sum(stack_rows(std::span<const Var>(parts)));
    };
    const auto res = check_gradients(s, loss);
    EXPECT_LE(res.max_rel_error, kTol) << "seed " << seed << " worst " << res.worst;
  }
}

TEST(GradientCheck, ThreeLayerMlp) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    ParameterStore s;
    Rng rng(300 + seed);
    s.add("x", random_tensor({4, 5}, rng));
    const auto mlp = Mlp::create(s, "mlp", {5, 8, 8, 3}, rng);
    const auto loss = [&](Graph& g) { return probe(g, mlp(g, s, g.param(s.at("x"))), 9); };
    const auto res = check_gradients(s, loss);
    EXPECT_LE(res.max_rel_error, kTol) << "seed " << seed << " worst " << res.worst;
  }
}

TEST(GradientCheck, BiGruThroughTime) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    ParameterStore s;
    Rng rng(400 + seed);
    s.add("x", random_tensor({5, 3}, rng));
    const auto gru = BiGruLayer::create(s, "gru", 3, 4, rng);
    const auto loss = [&](Graph& g) { return probe(g, gru(g, s, g.param(s.at("x"))), 11); };
    const auto res = check_gradients(s, loss);
    EXPECT_LE(res.max_rel_error, kTol) << "seed " << seed << " worst " << res.worst;
  }
}

TEST(GradientCheck, ConvolutionEncoder) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    ParameterStore s;
    Rng rng(500 + seed);
    s.add("img", random_tensor({2, 9, 8}, rng));
    s.add("w", random_tensor({3, 2, 3, 3}, rng));
    s.add("b", random_tensor({3}, rng));
    const auto enc = ConvEncoder::create(s, "enc", {2, 3, 4}, rng);
    const auto loss = [&](Graph& g) {
      const Var img = g.param(s.at("img"));
      const Var parts[] = {probe(g, conv2d(img, g.param(s.at("w")), g.param(s.at("b")), 2, 1), 3),
                           probe(g, conv2d(img, g.param(s.at("w")), g.param(s.at("b")), 1, 0), 4),
                           probe(g, enc(g, s, img), 5)};
      return sum(stack_rows(std::span<const Var>(parts)));
    };
    const auto res = check_gradients(s, loss);
    EXPECT_LE(res.max_rel_error, kTol) << "seed " << seed << " worst " << res.worst;
  }
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  Graph g;
  const Var x = g.constant(Tensor({2, 4}, 3.5));
  const Var y = layer_norm(x, g.constant(Tensor({4}, 1.0)), g.constant(Tensor({4})));
  for (double v : y.value().values) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizesRows) {
  Rng rng(7);
  Graph g;
  // Spread 100 keeps eps / variance far below the 1e-6 tolerance.
  const Var x = g.constant(random_tensor({3, 50}, rng, 100.0));
  const Var y = layer_norm(x, g.constant(Tensor({50}, 1.0)), g.constant(Tensor({50})));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 50; ++c) m += y.value().at(r, c);
    m /= 50.0;
    for (std::size_t c = 0; c < 50; ++c) v += (y.value().at(r, c) - m) * (y.value().at(r, c) - m);
    v /= 50.0;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(L2Normalize, UnitRowsAndZeroRowThrows) {
  Rng rng(8);
  Graph g;
  const Var y = l2_normalize_rows(g.constant(random_tensor({4, 6}, rng)));
  for (std::size_t r = 0; r < 4; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < 6; ++c) n += y.value().at(r, c) * y.value().at(r, c);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
  EXPECT_THROW(l2_normalize_rows(g.constant(Tensor({2, 3}))), DegenerateInput);
}

TEST(BiGru, SingleStepShape) {
  ParameterStore s;
  Rng rng(9);
  const auto gru = BiGruLayer::create(s, "gru", 3, 5, rng);
  Graph g;
  const Var out = gru(g, s, g.constant(random_tensor({1, 3}, rng)));
  EXPECT_EQ(out.value().shape, (std::vector<std::size_t>{1, 10}));
  EXPECT_THROW(gru(g, s, g.constant(Tensor({0, 3}))), ValidationError);
}

TEST(BiGru, ReversalSwapsDirectionsWhenWeightsAreTied) {
  ParameterStore s;
  Rng rng(10);
  const auto gru = BiGruLayer::create(s, "gru", 3, 4, rng);
  // With both directions sharing weights, the forward channels of the
  // reversed input are the backward channels of the original, reversed.
  s.at("gru.bwd.w_ih").value = s.at("gru.fwd.w_ih").value;
  s.at("gru.bwd.w_hh").value = s.at("gru.fwd.w_hh").value;
  s.at("gru.bwd.b_ih").value = s.at("gru.fwd.b_ih").value;
  s.at("gru.bwd.b_hh").value = s.at("gru.fwd.b_hh").value;
  Graph g;
  const Var x = g.constant(random_tensor({6, 3}, rng));
  const Tensor a = gru(g, s, x).value();
  const Tensor b = gru(g, s, reverse_rows(x)).value();
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(b.at(t, c), a.at(5 - t, 4 + c), 1e-14);
      EXPECT_NEAR(b.at(t, 4 + c), a.at(5 - t, c), 1e-14);
    }
}

TEST(AdamW, ZeroGradientNoDecayLeavesParameters) {
  ParameterStore s;
  Rng rng(11);
  s.add("w", random_tensor({3, 3}, rng));
  const Tensor before = s.at("w").value;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  s.zero_grad();
  for (int i = 0; i < 5; ++i) adamw_step(s, cfg, cfg.learning_rate);
  EXPECT_EQ(s.at("w").value, before);
}

TEST(AdamW, DecayOnlyShrinksGeometrically) {
  ParameterStore s;
  s.add("w", Tensor({2}, std::vector<double>{2.0, -3.0}));
  const OptimizerConfig cfg;
  s.zero_grad();
  for (int i = 0; i < 10; ++i) adamw_step(s, cfg, cfg.learning_rate);
  const double f = std::pow(1.0 - cfg.learning_rate * cfg.weight_decay, 10);
  EXPECT_NEAR(s.at("w").value[0], 2.0 * f, 1e-15);
  EXPECT_NEAR(s.at("w").value[1], -3.0 * f, 1e-15);
}

TEST(AdamW, ConvergesOnQuadratic) {
  ParameterStore s;
  Parameter& w = s.add("w", Tensor({1}, std::vector<double>{0.0}));
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  const double lr = 0.05;
  for (int i = 0; i < 500; ++i) {
    s.zero_grad();
    Graph g;
    const Var d = affine(g.param(w), 1.0, -1.7);
    g.backward(sum(mul(d, d)));
    adamw_step(s, cfg, lr);
  }
  EXPECT_NEAR(w.value[0], 1.7, 1e-3);
  EXPECT_EQ(s.step_count(), 500u);
}

TEST(PlateauScheduler, FollowsPatienceRule) {
  const OptimizerConfig cfg;
  const std::vector<double> falling = {5, 4, 3, 2, 1, 0.5};
  EXPECT_EQ(plateau_learning_rate(falling, cfg), cfg.learning_rate);
  // Three epochs without improvement after the first.
  const std::vector<double> flat3 = {1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(plateau_learning_rate(flat3, cfg), cfg.learning_rate * 0.3741);
  const std::vector<double> flat6 = {1, 1, 1, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(plateau_learning_rate(flat6, cfg), cfg.learning_rate * 0.3741 * 0.3741);
  // An improvement resets the count.
  const std::vector<double> reset = {1, 1, 1, 0.9, 1, 1};
  EXPECT_EQ(plateau_learning_rate(reset, cfg), cfg.learning_rate);
  EXPECT_THROW(PlateauScheduler(0.1, 1.0, 3), ValidationError);
}

TEST(Weights, JsonRoundTripIsExact) {
  ParameterStore a;
  Rng rng(12);
  Mlp::create(a, "m", {3, 7, 2}, rng);
  BiGruLayer::create(a, "g", 2, 3, rng);
  const auto text = weights_to_json(a).dump();
  ParameterStore b;
  Rng other(99);
  Mlp::create(b, "m", {3, 7, 2}, other);
  BiGruLayer::create(b, "g", 2, 3, other);
  EXPECT_FALSE(a.same_values(b));
  weights_from_json(b, nlohmann::json::parse(text));
  EXPECT_TRUE(a.same_values(b));
}

TEST(Weights, MismatchesAreReported) {
  ParameterStore a;
  Rng rng(13);
  Mlp::create(a, "m", {3, 4, 2}, rng);
  auto j = weights_to_json(a);
  ParameterStore wider;
  Mlp::create(wider, "m", {3, 5, 2}, rng);
  EXPECT_THROW(weights_from_json(wider, j), ShapeMismatch);
  ParameterStore fewer;
  LinearLayer::create(fewer, "m.0", 3, 4, rng);
  EXPECT_THROW(weights_from_json(fewer, j), ShapeMismatch);
  auto bad_version = j;
  bad_version["version"] = 7;
  EXPECT_THROW(weights_from_json(a, bad_version), FormatVersionMismatch);
  EXPECT_THROW(weights_from_json(a, nlohmann::json{{"format", "other"}}), CorruptFile);
}

TEST(Determinism, SameSeedSameForward) {
  auto run = [] {
    ParameterStore s;
    Rng rng(14);
    const auto mlp = Mlp::create(s, "m", {4, 16, 3}, rng);
    Graph g;
    return mlp(g, s, g.constant(Tensor({2, 4}, 0.25))).value();
  };
  EXPECT_EQ(run(), run());
}
