#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "progeval/diffcore.hpp"
#include "progeval/error.hpp"
#include "progeval/random.hpp"

using namespace progeval;
using namespace progeval::diffcore;

namespace {

ArchSpec mlp(OutputKind out) {
  return {ArchKind::kUtilityMlp, out, 7, 9, 0, 0, 0.3, 0.0};
}
ArchSpec interaction() { return {ArchKind::kInteraction, OutputKind::kGroupSoftmax, 6, 8, 5, 0, 0.25, 0.0}; }
ArchSpec attention() { return {ArchKind::kAttention, OutputKind::kGroupSoftmax, 6, 9, 5, 3, 0.2, 0.3}; }

}  // namespace

TEST(GradCheck, Linear) {
  EXPECT_LT(grad_check({ArchKind::kLinear, OutputKind::kPerRowSigmoid, 5, 0, 0, 0, 0, 0}, 3), 1e-6);
  EXPECT_LT(grad_check({ArchKind::kLinear, OutputKind::kGroupSoftmax, 5, 0, 0, 0, 0, 0}, 4), 1e-6);
}

TEST(GradCheck, UtilityMlp) {
  EXPECT_LT(grad_check(mlp(OutputKind::kPerRowSigmoid), 11), 1e-4);
  EXPECT_LT(grad_check(mlp(OutputKind::kGroupSoftmax), 12), 1e-4);
}

TEST(GradCheck, Interaction) { EXPECT_LT(grad_check(interaction(), 13), 1e-4); }

TEST(GradCheck, Attention) { EXPECT_LT(grad_check(attention(), 14), 1e-4); }

namespace {

Batch<double> random_batch(const ArchSpec& arch, const std::vector<int>& sizes, std::uint64_t seed) {
  Rng rng(seed);
  Batch<double> b;
  int rows = 0;
  b.offsets.push_back(0);
  for (int s : sizes) {
    rows += s;
    b.offsets.push_back(rows);
    b.group_weight.push_back(1.0);
    b.winner.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(s))));
  }
  b.x = Matrix<double>(rows, arch.input_dim);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < arch.input_dim; ++j) b.x(i, j) = rng.normal();
  }
  for (int g = 0; g < static_cast<int>(sizes.size()); ++g) {
    for (int i = b.offsets[g]; i < b.offsets[g + 1]; ++i) b.labels.push_back(i - b.offsets[g] == b.winner[g] ? 1 : 0);
  }
  b.row_weight.assign(static_cast<std::size_t>(rows), 1.0);
  return b;
}

}  // namespace

TEST(Forward, HandEvaluatedMlp) {
  const ArchSpec arch{ArchKind::kUtilityMlp, OutputKind::kPerRowSigmoid, 1, 2, 0, 0, 0.0, 0.0};
  auto p = init_params<double>(arch, 1);
  p.at("w1") << 1.0, -1.0;
  p.at("b1") << 0.0, 0.0;
  p.at("ln1_g") << 1.0, 1.0;
  p.at("ln1_b") << 0.0, 0.0;
  p.at("w2") << 1.0, 1.0;
  p.at("b2") << 0.5;
  Batch<double> b;
  b.x = Matrix<double>(2, 1);
  b.x << 2.0, 0.5;
  b.offsets = {0, 2};
  b.labels = {1, 0};
  b.row_weight = {1, 1};
  b.group_weight = {1};
  b.winner = {0};
  const auto u = forward(arch, p, b);
  for (int i = 0; i < 2; ++i) {
    // Hidden pre-activations are (x, -x); layer norm maps them to (a, -a)
    // with a = x / sqrt(x^2 + eps); GELU(a) + GELU(-a) = a * erf(a / sqrt 2).
    const double x = b.x(i, 0);
    const double a = x / std::sqrt(x * x + 1e-5);
    EXPECT_NEAR(u(i), a * std::erf(a / std::sqrt(2.0)) + 0.5, 1e-12);
  }
}

TEST(Forward, SingletonGroupHasProbabilityOne) {
  const auto arch = attention();
  const auto p = init_params<double>(arch, 3);
  const auto b = random_batch(arch, {1, 4, 1}, 8);
  const auto prob = probabilities(arch, forward(arch, p, b), b.offsets);
  EXPECT_DOUBLE_EQ(prob(0), 1.0);
  EXPECT_DOUBLE_EQ(prob(5), 1.0);
}

TEST(Forward, IdenticalRowsShareProbability) {
  const auto arch = interaction();
  const auto p = init_params<double>(arch, 3);
  auto b = random_batch(arch, {5}, 9);
  for (int i = 1; i < 5; ++i) b.x.row(i) = b.x.row(0);
  const auto prob = probabilities(arch, forward(arch, p, b), b.offsets);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(prob(i), 0.2, 1e-12);
}

TEST(Forward, GroupSoftmaxSumsToOne) {
  Rng rng(11);
  for (const auto& arch : {mlp(OutputKind::kGroupSoftmax), interaction(), attention()}) {
    const auto p = init_params<double>(arch, 5);
    std::vector<int> sizes;
    for (int g = 0; g < 200; ++g) sizes.push_back(1 + static_cast<int>(rng.below(8)));
    const auto b = random_batch(arch, sizes, 12);
    const auto prob = probabilities(arch, forward(arch, p, b), b.offsets);
    for (int g = 0; g < b.groups(); ++g) {
      double s = 0;
      for (int i = b.offsets[g]; i < b.offsets[g + 1]; ++i) s += prob(i);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Forward, SetModelsArePermutationEquivariant) {
  for (const auto& arch : {interaction(), attention()}) {
    const auto p = init_params<double>(arch, 21);
    const auto b = random_batch(arch, {6}, 22);
    auto permuted = b;
    const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    for (int i = 0; i < 6; ++i) permuted.x.row(i) = b.x.row(perm[i]);
    const auto u = forward(arch, p, b);
    const auto up = forward(arch, p, permuted);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(up(i), u(perm[i]), 1e-12);
  }
}

TEST(Attention, ZeroQueryKeyGivesMeanValuePath) {
  const ArchSpec arch{ArchKind::kAttention, OutputKind::kGroupSoftmax, 3, 4, 2, 2, 0.0, 0.0};
  auto p = init_params<double>(arch, 1);
  p.at("attn_ln_g").setOnes();
  p.at("attn_ln_b").setZero();
  for (const char* n : {"wq", "bq", "wk", "bk", "bv", "bo"}) p.at(n).setZero();
  p.at("wv").setIdentity();
  p.at("wo").setIdentity();
  Matrix<double> enc(2, 4);
  enc << 1, 2, 3, 4, -1, 0, 2, 5;
  const auto out = attention_block(arch, p, enc, {0, 2});
  Matrix<double> ln(2, 4);
  for (int i = 0; i < 2; ++i) {
    const double m = enc.row(i).mean();
    const double v = (enc.row(i).array() - m).square().mean();
    ln.row(i) = (enc.row(i).array() - m) / std::sqrt(v + 1e-5);
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(out(i, j), enc(i, j) + 0.5 * (ln(0, j) + ln(1, j)), 1e-12);
  }
  const auto single = attention_block(arch, p, Matrix<double>(enc.topRows(1)), {0, 1});
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(single(0, j), enc(0, j) + ln(0, j), 1e-12);
}

TEST(Loss, ZeroWeightsGiveZeroGradient) {
  const auto arch = mlp(OutputKind::kPerRowSigmoid);
  const auto p = init_params<double>(arch, 4);
  auto b = random_batch(arch, {3, 3}, 4);
  std::fill(b.row_weight.begin(), b.row_weight.end(), 0.0);
  const auto lg = loss_and_gradient(arch, p, b);
  EXPECT_EQ(lg.loss, 0.0);
  for (const auto& t : lg.grad.tensors) EXPECT_EQ(t.value.cwiseAbs().maxCoeff(), 0.0) << t.name;
}

TEST(Loss, SymmetricPointHasZeroOutputBiasGradient) {
  // All rows identical: every utility is equal, softmax is uniform, and
  // the gradient of the shared output bias vanishes.
  const auto arch = mlp(OutputKind::kGroupSoftmax);
  const auto p = init_params<double>(arch, 4);
  auto b = random_batch(arch, {4, 4, 4, 4}, 5);
  for (int i = 1; i < b.rows(); ++i) b.x.row(i) = b.x.row(0);
  const auto lg = loss_and_gradient(arch, p, b);
  EXPECT_NEAR(lg.grad.at("b2")(0, 0), 0.0, 1e-14);
  EXPECT_NEAR(lg.loss, std::log(4.0), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet<double> p;
  p.tensors.push_back({"x", Matrix<double>::Zero(1, 1)});
  auto g = p.zeros_like();
  g[0](0, 0) = 1.0;
  auto state = AdamState<double>::init(p);
  adam_step(p, g, state, {1e-3, 0.0});
  EXPECT_NEAR(p[0](0, 0), -1e-3, 1e-11);
}

TEST(Adam, ZeroGradientAndDecay) {
  ParamSet<double> p;
  p.tensors.push_back({"x", Matrix<double>::Constant(2, 2, 3.0)});
  const auto g = p.zeros_like();
  auto state = AdamState<double>::init(p);
  adam_step(p, g, state, {1e-2, 0.0});
  EXPECT_EQ(p[0](1, 1), 3.0);
  adam_step(p, g, state, {1e-2, 0.5});
  EXPECT_DOUBLE_EQ(p[0](1, 1), 3.0 * (1.0 - 1e-2 * 0.5));
}

TEST(Adam, NonFiniteUpdateThrows) {
  ParamSet<double> p;
  p.tensors.push_back({"x", Matrix<double>::Zero(1, 1)});
  auto g = p.zeros_like();
  g[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto state = AdamState<double>::init(p);
  try {
    adam_step(p, g, state, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteUpdate);
  }
}

TEST(Checkpoint, RoundTripAndArchMismatch) {
  Checkpoint c;
  c.arch = attention();
  c.params = init_params<float>(c.arch, 77);
  c.seed = 77;
  c.metadata["fold"] = "2";
  c.arrays["mean"] = {0.5, -1.25};
  const auto text = checkpoint_to_json(c);
  const auto back = checkpoint_from_json(text, &c.arch);
  EXPECT_EQ(back.arch, c.arch);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.metadata.at("fold"), "2");
  EXPECT_EQ(back.arrays.at("mean"), c.arrays.at("mean"));
  ASSERT_EQ(back.params.size(), c.params.size());
  for (std::size_t i = 0; i < c.params.size(); ++i) EXPECT_TRUE(back.params[i] == c.params[i]);
  const auto other = interaction();
  try {
    checkpoint_from_json(text, &other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kArchMismatch);
  }
}

TEST(GradCheck, DefaultSizedArchitecturesAtThreeSeeds) {
  const std::vector<ArchSpec> archs = {
      {ArchKind::kUtilityMlp, OutputKind::kPerRowSigmoid, 24, 64, 0, 0, 0.3, 0.0},
      {ArchKind::kUtilityMlp, OutputKind::kGroupSoftmax, 24, 64, 0, 0, 0.211, 0.0},
      {ArchKind::kInteraction, OutputKind::kGroupSoftmax, 24, 32, 32, 0, 0.25, 0.0},
      {ArchKind::kAttention, OutputKind::kGroupSoftmax, 24, 30, 25, 3, 0.2, 0.1}};
  for (const auto& a : archs) {
    for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_LT(grad_check(a, seed), 1e-4) << a.tag() << " seed " << seed;
  }
}
