#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sdan/autograd.hpp"
#include "sdan/errors.hpp"
#include "sdan/grad_check.hpp"
#include "sdan/model.hpp"
#include "support/oracles.hpp"

using namespace sdan;
using ag::Var;

namespace {

constexpr double kTol = 1e-4;

// sum(y * r) for a fixed random r: a linear functional that exercises every
// output element with a distinct weight.
Var probe(const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::star_product(y, Var(oracle::random_tensor(y.shape(), rng))));
}

void expect_passes(const GradCheckReport& r) {
  EXPECT_TRUE(r.passed) << r.op_name << " max_rel_err=" << r.max_rel_err << " at "
                        << r.worst_entry;
  EXPECT_GT(r.checked, 0u);
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  std::mt19937_64 rng(1);
  Var x(oracle::random_tensor({1, 2, 3, 3}, rng), true);
  ag::backward(ag::sum(x));
  for (std::size_t i = 0; i < x.grad().numel(); ++i) EXPECT_EQ(x.grad().flat(i), 1.0);
}

TEST(Backward, StarProductWithItselfGivesTwoX) {
  std::mt19937_64 rng(2);
  Var x(oracle::random_tensor({1, 2, 3, 3}, rng), true);
  ag::backward(ag::sum(ag::star_product(x, x)));
  for (std::size_t i = 0; i < x.grad().numel(); ++i) {
    EXPECT_EQ(x.grad().flat(i), 2.0 * x.value().flat(i));
  }
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  std::mt19937_64 rng(3);
  Var x(oracle::random_tensor({1, 1, 2, 2}, rng), true);
  ag::backward(ag::sum(x));
  ag::backward(ag::sum(x));
  EXPECT_EQ(x.grad().flat(0), 2.0);
  x.zero_grad();
  EXPECT_EQ(x.grad().flat(0), 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Var x(Tensor::zeros({1, 2, 1, 1}, DType::f64), true);
  EXPECT_THROW(ag::backward(x), UsageError);
}

TEST(Backward, L1ConvMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const ConvSpec spec = ConvSpec::dense(3, 4, 3);
  std::vector<Var> leaves{Var(oracle::random_tensor({1, 3, 6, 6}, rng), true),
                          Var(oracle::random_tensor(spec.weight_shape(), rng), true),
                          Var(oracle::random_tensor(spec.bias_shape(), rng), true)};
  // Target far from the output keeps every residual away from the |.| kink.
  const Var target(Tensor::full({1, 4, 6, 6}, 50.0, DType::f64));
  auto closure = [&] {
    return ag::l1_loss(ag::conv2d(leaves[0], leaves[1], &leaves[2], spec), target);
  };
  expect_passes(grad_check("l1(conv2d)", closure, leaves, kTol));
}

TEST(GradCheck, IdentityScalarIsExact) {
  const std::vector<Tensor> in{Tensor::full({1, 1, 1, 1}, 0.7, DType::f64)};
  const GradCheckReport r = grad_check(
      "identity", [](std::span<const Var> v) { return v[0]; }, in, kTol);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_err, 1e-10);
  EXPECT_EQ(r.tolerance, kTol);
}

TEST(GradCheck, GeluNearZero) {
  std::mt19937_64 rng(5);
  const std::vector<Tensor> in{oracle::random_tensor({1, 2, 4, 4}, rng, -0.1, 0.1)};
  expect_passes(grad_check(
      "gelu", [](std::span<const Var> v) { return ag::sum(ag::gelu(v[0])); }, in,
      kTol));
}

TEST(GradCheck, RejectsNonFiniteValues) {
  const std::vector<Tensor> in{Tensor::full({1, 1, 1, 1},
                                            std::numeric_limits<double>::quiet_NaN(),
                                            DType::f64)};
  EXPECT_THROW(grad_check("nan", [](std::span<const Var> v) { return ag::sum(v[0]); },
                          in, kTol),
               NumericError);
}

TEST(GradCheck, ReportsFailureForWrongGradient) {
  // A closure that rebuilds a different graph on each evaluation confuses
  // finite differences and must be flagged, not silently passed.
  int calls = 0;
  std::vector<Var> leaves{Var(Tensor::full({1, 1, 1, 1}, 1.0, DType::f64), true)};
  auto closure = [&] {
    ++calls;
    return ag::sum(calls % 2 ? leaves[0] : ag::star_product(leaves[0], leaves[0]));
  };
  const GradCheckReport r = grad_check("inconsistent", closure, leaves, kTol);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.passed, r.max_rel_err <= r.tolerance);
}

struct OpCase {
  const char* name;
  std::function<Var(std::span<const Var>)> op;
  std::vector<Shape> shapes;
};

class EveryOp : public ::testing::TestWithParam<int> {};

std::vector<OpCase> op_cases() {
  const ConvSpec dw = ConvSpec::depthwise(4, 5, 5, 3);
  const ConvSpec strip = ConvSpec::depthwise(4, 1, 11, 3);
  const ConvSpec grouped{3, 3, 1, 2, 4, 6, true};
  const ConvSpec pw = ConvSpec::pointwise(4, 5);
  return {
      {"conv2d.depthwise_dilated",
       [dw](std::span<const Var> v) { return probe(ag::conv2d(v[0], v[1], &v[2], dw), 1); },
       {{1, 4, 8, 8}, dw.weight_shape(), dw.bias_shape()}},
      {"conv2d.strip_dilated",
       [strip](std::span<const Var> v) {
         return probe(ag::conv2d(v[0], v[1], &v[2], strip), 2);
       },
       {{1, 4, 8, 8}, strip.weight_shape(), strip.bias_shape()}},
      {"conv2d.grouped",
       [grouped](std::span<const Var> v) {
         return probe(ag::conv2d(v[0], v[1], &v[2], grouped), 3);
       },
       {{2, 4, 5, 6}, grouped.weight_shape(), grouped.bias_shape()}},
      {"conv2d.pointwise_nobias",
       [pw](std::span<const Var> v) { return probe(ag::conv2d(v[0], v[1], nullptr, pw), 4); },
       {{2, 4, 5, 6}, pw.weight_shape()}},
      {"add", [](std::span<const Var> v) { return probe(ag::add(v[0], v[1]), 5); },
       {{1, 3, 4, 4}, {1, 3, 4, 4}}},
      {"star_product",
       [](std::span<const Var> v) { return probe(ag::star_product(v[0], v[1]), 6); },
       {{1, 3, 4, 4}, {1, 3, 4, 4}}},
      {"gelu", [](std::span<const Var> v) { return probe(ag::gelu(v[0]), 7); },
       {{1, 3, 4, 4}}},
      {"pixel_shuffle",
       [](std::span<const Var> v) { return probe(ag::pixel_shuffle(v[0], 2), 8); },
       {{1, 8, 3, 3}}},
      {"pixel_norm",
       [](std::span<const Var> v) { return probe(ag::pixel_norm(v[0], v[1], v[2]), 9); },
       {{2, 6, 3, 3}, {6, 1, 1, 1}, {6, 1, 1, 1}}},
      {"concat_channels",
       [](std::span<const Var> v) {
         const std::vector<Var> parts{v[0], v[1]};
         return probe(ag::concat_channels(parts), 10);
       },
       {{1, 2, 3, 3}, {1, 3, 3, 3}}},
      {"split_channels",
       [](std::span<const Var> v) {
         const std::vector<std::size_t> sizes{1, 2, 3};
         const std::vector<Var> parts = ag::split_channels(v[0], sizes);
         return ag::add(probe(parts[0], 11), probe(parts[2], 12));
       },
       {{1, 6, 3, 3}}},
      {"sum", [](std::span<const Var> v) { return ag::sum(v[0]); }, {{1, 3, 2, 2}}},
      {"l1_loss",
       [](std::span<const Var> v) {
         return ag::l1_loss(v[0], Var(Tensor::full(v[0].shape(), 5.0, DType::f64)));
       },
       {{1, 3, 4, 4}}},
  };
}

TEST_P(EveryOp, PassesFiniteDifferenceCheck) {
  const OpCase c = op_cases()[static_cast<std::size_t>(GetParam())];
  std::mt19937_64 rng(100 + static_cast<std::uint64_t>(GetParam()));
  std::vector<Tensor> inputs;
  for (const Shape& s : c.shapes) inputs.push_back(oracle::random_tensor(s, rng));
  expect_passes(grad_check(c.name, c.op, inputs, kTol));
}

INSTANTIATE_TEST_SUITE_P(Ops, EveryOp,
                         ::testing::Range(0, static_cast<int>(op_cases().size())));

TEST(GradCheck, FullRsdamBlock) {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.distill_channels = 4;
  cfg.num_blocks = 1;
  ParameterSet params;
  LayerBuilder builder(params, 11, DType::f64);
  const RsdamLayers block = builder.rsdam("rsdam", cfg);
  std::mt19937_64 rng(12);
  std::vector<Var> leaves{Var(oracle::random_tensor({1, 8, 8, 8}, rng), true)};
  for (NamedParam& p : params.entries()) leaves.push_back(p.var);
  auto closure = [&] { return probe(rsdam_forward(leaves[0], block), 13); };
  expect_passes(grad_check("rsdam", closure, leaves, kTol));
}

TEST(Inference, NoGradValuesAreBitIdentical) {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.distill_channels = 4;
  cfg.num_blocks = 2;
  const SdanModel model(cfg, 21);
  std::mt19937_64 rng(22);
  const Tensor img = oracle::random_tensor({1, 3, 12, 10}, rng, 0, 1, DType::f32);
  const Var graph = model.forward(Var(img));
  EXPECT_TRUE(graph.requires_grad());
  const Tensor detached = model.infer(img);
  EXPECT_TRUE(detached.identical(graph.value()));
}

TEST(Properties, ConcatGradientIsSplitOfUpstream) {
  std::mt19937_64 rng(30);
  Var a(oracle::random_tensor({1, 2, 3, 3}, rng), true);
  Var b(oracle::random_tensor({1, 3, 3, 3}, rng), true);
  const Tensor r = oracle::random_tensor({1, 5, 3, 3}, rng);
  const std::vector<Var> parts{a, b};
  ag::backward(ag::sum(ag::star_product(ag::concat_channels(parts), Var(r))));
  EXPECT_TRUE(a.grad().identical(oracle::channels(r, 0, 2)));
  EXPECT_TRUE(b.grad().identical(oracle::channels(r, 2, 3)));
}

TEST(Properties, SplitGradientIsZeroPaddedConcat) {
  std::mt19937_64 rng(31);
  Var x(oracle::random_tensor({1, 5, 2, 2}, rng), true);
  const std::vector<std::size_t> sizes{2, 1, 2};
  const std::vector<Var> parts = ag::split_channels(x, sizes);
  const Tensor r = oracle::random_tensor({1, 2, 2, 2}, rng);
  ag::backward(ag::sum(ag::star_product(parts[2], Var(r))));
  const Tensor zeros = Tensor::zeros({1, 3, 2, 2}, DType::f64);
  EXPECT_TRUE(x.grad().identical(oracle::concat({zeros, r})));
}

TEST(Properties, PixelShuffleGradientIsInversePermutation) {
  std::mt19937_64 rng(32);
  Var x(oracle::random_tensor({1, 8, 3, 2}, rng), true);
  const Tensor r = oracle::random_tensor({1, 2, 6, 4}, rng);
  ag::backward(ag::sum(ag::star_product(ag::pixel_shuffle(x, 2), Var(r))));
  std::vector<double> grad = x.grad().to_vector();
  std::vector<double> upstream = r.to_vector();
  std::sort(grad.begin(), grad.end());
  std::sort(upstream.begin(), upstream.end());
  EXPECT_EQ(grad, upstream);
  EXPECT_TRUE(x.grad().identical(pixel_unshuffle(r, 2)));
}

// The h=1e-3 check leaves a truncation term of order h^2 that, on some
// initialisations, lands above the gate for entries whose GELU input sits near
// the function's minimum. Halving h must cut every such discrepancy roughly fourfold,
// which only happens if the analytic value is the limit being approached.
TEST(GradCheck, SdanDiscrepancyIsSecondOrderInStep) {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.num_blocks = 2;
  cfg.distill_channels = 4;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    SdanModel model(cfg, seed + 3, DType::f64);
    Tensor w = oracle::random_tensor({1, 3, 16, 16}, rng);
    const Var r(w);
    std::vector<Var> leaves{Var(oracle::random_tensor({1, 3, 8, 8}, rng, 0, 1), true)};
    for (NamedParam& p : model.parameters().entries()) leaves.push_back(p.var);
    auto loss = [&] { return ag::sum(ag::star_product(model.forward(leaves[0]), r)); };
    ag::backward(loss());
    std::vector<Tensor> analytic;
    for (const Var& v : leaves) analytic.push_back(v.grad());

    auto central = [&](Tensor& t, std::size_t i, double h) {
      const double x0 = t.flat(i);
      t.set_flat(i, x0 + h);
      const double up = loss().value().flat(0);
      t.set_flat(i, x0 - h);
      const double down = loss().value().flat(0);
      t.set_flat(i, x0);
      return (up - down) / (2 * h);
    };
    int widest = 0;
    for (std::size_t leaf = 0; leaf < leaves.size(); ++leaf) {
      Tensor& t = leaves[leaf].mutable_value();
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double a = analytic[leaf].flat(i);
        const double coarse = std::abs(central(t, i, 1e-3) - a);
        if (coarse < 1e-4 * std::max(std::abs(a), 1e-8)) continue;
        ++widest;
        const double fine = std::abs(central(t, i, 5e-4) - a);
        EXPECT_LT(fine, 0.35 * coarse + 1e-12)
            << "seed " << seed << " leaf " << leaf << "[" << i << "] analytic=" << a;
      }
    }
    RecordProperty("seed" + std::to_string(seed) + "_entries_over_gate", widest);
  }
}
