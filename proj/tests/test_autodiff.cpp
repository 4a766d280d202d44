#include <gtest/gtest.h>

#include <cmath>

#include "absa/gradcheck.hpp"
#include "absa/optim.hpp"
#include "absa/tape.hpp"
#include "helpers.hpp"

using namespace absa;

namespace {

Tensor vec(std::initializer_list<double> v) {
  return Tensor({static_cast<int>(v.size())}, std::vector<double>(v));
}

}  // namespace

// ---- finite differences across every op ----

TEST(OpGradients, TenSeedSweepPasses) {
  for (const auto& row : run_op_gradchecks(10)) {
    EXPECT_TRUE(row.pass()) << row.name << " max_err=" << row.max_err;
  }
}

// ---- hand-verified closed forms ----

TEST(TapeOps, MaskedSoftmaxUniformOverTies) {
  Tape tape;
  Tape::NodeId a = tape.leaf(vec({0, 0}), true);
  Tensor mask = vec({1, 1});
  Tape::NodeId s = tape.masked_softmax(a, mask);
  EXPECT_DOUBLE_EQ(tape.value(s)(0), 0.5);
  EXPECT_DOUBLE_EQ(tape.value(s)(1), 0.5);
}

TEST(TapeOps, MaskedSoftmaxZeroesMaskedEntriesAndRowsSumToOne) {
  Tape tape;
  Tape::NodeId a =
      tape.leaf(Tensor({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 2.0}), true);
  Tensor mask({2, 3}, {1, 0, 1, 0, 1, 1});
  const Tensor& y = tape.value(tape.masked_softmax(a, mask));
  EXPECT_DOUBLE_EQ(y(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.0);
  for (int i = 0; i < 2; ++i) {
    double row = 0;
    for (int j = 0; j < 3; ++j) row += y(i, j);
    EXPECT_NEAR(row, 1.0, 1e-15);
  }
}

TEST(TapeOps, MaskedSoftmaxFullyMaskedRowIsError) {
  Tape tape;
  Tape::NodeId a = tape.leaf(vec({1, 2}), true);
  Tensor mask = vec({0, 0});
  EXPECT_THROW(tape.masked_softmax(a, mask), NumericError);
}

TEST(TapeOps, TanhGradientClosedForm) {
  Tape tape;
  Tape::NodeId x = tape.leaf(Tensor::scalar(0.5), true);
  tape.backward(tape.tanh_(x));
  double th = std::tanh(0.5);
  EXPECT_NEAR(tape.grad(x)(0), 1.0 - th * th, 1e-15);
}

TEST(TapeOps, CosineOfSelfIsOne) {
  Tape tape;
  Tape::NodeId v = tape.leaf(vec({0.3, -1.2, 2.0}), true);
  EXPECT_NEAR(tape.value(tape.cosine(v, v))(0), 1.0, 1e-15);
}

TEST(TapeOps, CosineZeroVectorIsError) {
  Tape tape;
  Tape::NodeId v = tape.leaf(vec({1, 2}), true);
  Tape::NodeId z = tape.leaf(vec({0, 0}), true);
  EXPECT_THROW(tape.cosine(v, z), NumericError);
}

TEST(TapeOps, SumBackpropagatesOnes) {
  Tape tape;
  Tape::NodeId v = tape.leaf(vec({1, 2, 3, 4}), true);
  tape.backward(tape.sum(v));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(tape.grad(v)(i), 1.0);
}

TEST(TapeOps, ZeroScaledLossGivesZeroGrads) {
  Tape tape;
  Tape::NodeId v = tape.leaf(vec({0.4, -0.7, 1.1}), true);
  Tape::NodeId loss = tape.scale(tape.sum(tape.tanh_(v)), 0.0);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(tape.grad(v)(i), 0.0);
}

TEST(TapeOps, CrossEntropyOfZeroLogitsIsLogThree) {
  Tape tape;
  Tape::NodeId logits = tape.leaf(vec({0, 0, 0}), true);
  for (int gold = 0; gold < 3; ++gold) {
    Tape::NodeId l = tape.cross_entropy(logits, gold);
    EXPECT_NEAR(tape.value(l)(0), std::log(3.0), 1e-15);
  }
}

TEST(TapeOps, LogsumexpStableForLargeInputs) {
  Tape tape;
  Tape::NodeId a = tape.leaf(vec({1000.0, 1000.0}), true);
  EXPECT_NEAR(tape.value(tape.logsumexp(a))(0), 1000.0 + std::log(2.0), 1e-9);
}

TEST(TapeOps, GradReverseForwardIdentityBackwardNegated) {
  Tape tape;
  Tape::NodeId v = tape.leaf(vec({1.5, -2.0}), true);
  Tape::NodeId r = tape.grad_reverse(v, 0.6);
  EXPECT_EQ(tape.value(r).data, tape.value(v).data);
  tape.backward(tape.sum(r));
  EXPECT_DOUBLE_EQ(tape.grad(v)(0), -0.6);
  EXPECT_DOUBLE_EQ(tape.grad(v)(1), -0.6);
}

TEST(TapeOps, BackwardRequiresScalarLoss) {
  Tape tape;
  Tape::NodeId v = tape.leaf(vec({1, 2}), true);
  EXPECT_THROW(tape.backward(v), StructuralError);
}

TEST(TapeOps, NonFiniteValueIsRejectedAtCreation) {
  Tape tape;
  Tensor bad = vec({1.0, 0.0});
  bad.data[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tape.leaf(bad), NumericError);
  Tape::NodeId big = tape.leaf(vec({1e308, 1e308}), true);
  EXPECT_THROW(tape.add(big, big), NumericError);  // overflow to inf
}

TEST(TapeOps, GatherRowsAccumulatesRepeatedIndices) {
  Tape tape;
  Tape::NodeId table = tape.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), true);
  tape.backward(tape.sum(tape.gather_rows(table, {1, 1, 2})));
  EXPECT_DOUBLE_EQ(tape.grad(table)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(tape.grad(table)(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(tape.grad(table)(2, 1), 1.0);
}

// ---- dropout determinism ----

TEST(Dropout, SameSeedAndStepReproduceTheMask) {
  Tensor x = Tensor::full({64}, 1.0);
  auto run = [&](uint64_t seed, int64_t step) {
    Tape tape(seed, step);
    return tape.value(tape.dropout(tape.leaf(x, true), 0.5, true)).data;
  };
  EXPECT_EQ(run(7, 3), run(7, 3));
  EXPECT_NE(run(7, 3), run(7, 4));
  EXPECT_NE(run(7, 3), run(8, 3));
}

TEST(Dropout, EvalModeIsIdentity) {
  Tape tape(1, 1);
  Tape::NodeId x = tape.leaf(vec({1, 2, 3}), true);
  EXPECT_EQ(tape.dropout(x, 0.5, false), x);
  EXPECT_EQ(tape.dropout(x, 0.0, true), x);
}

TEST(Dropout, KeptEntriesAreInverselyScaled) {
  Tape tape(3, 0);
  Tensor x = Tensor::full({256}, 1.0);
  const Tensor& y = tape.value(tape.dropout(tape.leaf(x, true), 0.25, true));
  int kept = 0;
  for (double v : y.data) {
    if (v != 0.0) {
      EXPECT_NEAR(v, 1.0 / 0.75, 1e-15);
      ++kept;
    }
  }
  EXPECT_GT(kept, 128);  // roughly three quarters survive
  EXPECT_LT(kept, 256);
}

// ---- optimizer ----

TEST(AdamTest, ZeroGradZeroDecayIsFixedPoint) {
  ParamStore params;
  params.create("w", Tensor({2}, {1.5, -0.5}));
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam opt(cfg);
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::zeros({2}));
  opt.step(params, grads);
  EXPECT_DOUBLE_EQ(params.at("w")(0), 1.5);
  EXPECT_DOUBLE_EQ(params.at("w")(1), -0.5);
}

TEST(AdamTest, FirstStepApproachesSignedLearningRate) {
  ParamStore params;
  params.create("w", Tensor({2}, {0.0, 0.0}));
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  Adam opt(cfg);
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor({2}, {3.0, -0.2}));
  opt.step(params, grads);
  // bias-corrected first step is -lr * g/(|g| + eps') ~ -lr * sign(g)
  EXPECT_NEAR(params.at("w")(0), -0.01, 1e-5);
  EXPECT_NEAR(params.at("w")(1), 0.01, 1e-5);
}

TEST(AdamTest, DecoupledDecayShrinksWithoutGradient) {
  ParamStore params;
  params.create("w", Tensor({1}, {2.0}));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  Adam opt(cfg);
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::zeros({1}));
  opt.step(params, grads);
  EXPECT_NEAR(params.at("w")(0), 2.0 - 0.1 * 0.5 * 2.0, 1e-12);
}

TEST(AdamTest, SkipsParamsWithoutGradients) {
  ParamStore params;
  params.create("frozen", Tensor({1}, {1.0}));
  Adam opt;
  opt.step(params, {});
  EXPECT_DOUBLE_EQ(params.at("frozen")(0), 1.0);
}

TEST(AdamTest, DeterministicTrajectory) {
  auto run = [] {
    ParamStore params;
    params.create("w", Tensor({3}, {0.3, -0.4, 0.9}));
    Adam opt;
    for (int i = 0; i < 20; ++i) {
      std::map<std::string, Tensor> grads;
      Tensor g = Tensor::zeros({3});
      for (int j = 0; j < 3; ++j) g(j) = params.at("w")(j) * 0.7 + 0.1 * j;
      grads.emplace("w", std::move(g));
      opt.step(params, grads);
    }
    return params.at("w").data;
  };
  EXPECT_EQ(run(), run());
}

// ---- checkpoints ----

TEST(Checkpoint, BitExactRoundTrip) {
  ParamStore params;
  Rng rng(5150);
  params.create("a.w", [&] {
    Tensor t = Tensor::zeros({4, 3});
    for (auto& v : t.data) v = rng.next_double() * 2e-7 - 1e-7;
    return t;
  }());
  params.create("b", Tensor({2}, {1.0 / 3.0, -0.1}));
  std::string stem = std::string(::testing::TempDir()) + "ckpt";
  params.save(stem);
  ParamStore again;
  again.load(stem);
  for (const auto& [name, t] : params.all()) {
    const Tensor& u = again.at(name);
    ASSERT_EQ(u.shape, t.shape) << name;
    EXPECT_EQ(u.data, t.data) << name;  // bitwise
  }
  // identical bytes on re-save
  params.save(stem + "2");
  EXPECT_EQ(testutil::read_file(stem + ".bin"),
            testutil::read_file(stem + "2.bin"));
  EXPECT_EQ(testutil::read_file(stem + ".manifest"),
            testutil::read_file(stem + "2.manifest"));
}

TEST(Checkpoint, MissingFileIsConfigError) {
  ParamStore p;
  EXPECT_THROW(p.load("/nonexistent/stem"), ConfigError);
}

TEST(Checkpoint, TruncatedPayloadIsParseError) {
  ParamStore params;
  params.create("w", Tensor({4}, {1, 2, 3, 4}));
  std::string stem = std::string(::testing::TempDir()) + "trunc";
  params.save(stem);
  std::string bin = testutil::read_file(stem + ".bin");
  testutil::write_file(stem + ".bin", bin.substr(0, bin.size() / 2));
  ParamStore again;
  EXPECT_THROW(again.load(stem), ParseError);
}

TEST(ParamStoreTest, DuplicateNameRejected) {
  ParamStore p;
  p.create("w", Tensor({1}, {0.0}));
  EXPECT_THROW(p.create("w", Tensor({1}, {1.0})), StructuralError);
  EXPECT_THROW(p.at("missing"), StructuralError);
}
