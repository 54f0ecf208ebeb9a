#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "corpgnn/diffcore.hpp"
#include "corpgnn/error.hpp"
#include "corpgnn/gradient_suite.hpp"

using namespace corpgnn;

namespace {

Array2 random_array(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  Array2 a(r, c);
  for (double& v : a.data()) v = d(rng);
  return a;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Matmul, HandProductAndIdentity) {
  const Array2 a{{1, 2}, {3, 4}};
  const Array2 ones{{1}, {1}};
  EXPECT_EQ(matmul(a, ones), (Array2{{3}, {7}}));
  const Array2 b = random_array(3, 4, 1);
  Array2 eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(matmul(eye, b), b);
  EXPECT_EQ(code_of([&] { matmul(b, b); }), ErrorCode::kShapeMismatch);
}

TEST(Matmul, BackwardMatchesExplicitFormulas) {
  const Array2 a = random_array(3, 4, 2), b = random_array(4, 5, 3), d = random_array(3, 5, 4);
  const auto g = matmul_backward(a, b, d);
  const Array2 da = matmul(d, transpose(b));
  const Array2 db = matmul(transpose(a), d);
  for (std::size_t i = 0; i < da.size(); ++i) EXPECT_NEAR(g.da.data()[i], da.data()[i], 1e-14);
  for (std::size_t i = 0; i < db.size(); ++i) EXPECT_NEAR(g.db.data()[i], db.data()[i], 1e-14);
}

TEST(AddBias, ShiftsColumns) {
  const Array2 x{{1, 2}, {3, 4}};
  EXPECT_EQ(add_bias(x, Array2(1, 2)), x);
  EXPECT_EQ(add_bias(x, Array2{{1, -1}}), (Array2{{2, 1}, {4, 3}}));
  EXPECT_EQ(add_bias_backward(x), (Array2{{4, 6}}));
  EXPECT_EQ(code_of([&] { add_bias(x, Array2(1, 3)); }), ErrorCode::kShapeMismatch);
}

TEST(Relu, Definition) {
  EXPECT_EQ(relu(Array2{{-1, -2}}), (Array2{{0, 0}}));
  EXPECT_EQ(relu(Array2{{-1, 2}}), (Array2{{0, 2}}));
  EXPECT_EQ(relu_backward(Array2{{-1, 2}}, Array2{{5, 7}}), (Array2{{0, 7}}));
}

TEST(Tanh, ZeroAndSaturation) {
  const Array2 t = tanh_op(Array2{{0, 40, -40}});
  EXPECT_EQ(t(0, 0), 0.0);
  EXPECT_NEAR(t(0, 1), 1.0, 1e-9);
  EXPECT_NEAR(t(0, 2), -1.0, 1e-9);
}

TEST(SegmentMean, Conventions) {
  const Array2 x{{1, 2}, {3, 4}, {5, 6}};
  const std::vector<int> one{0, 0, 0};
  EXPECT_EQ(segment_mean(x, one, 1), (Array2{{3, 4}}));
  const std::vector<int> singles{0, 1, 2};
  EXPECT_EQ(segment_mean(x, singles, 3), x);
  const std::vector<int> gap{0, 2, 0};
  const Array2 m = segment_mean(x, gap, 3);
  EXPECT_EQ(m(1, 0), 0.0);
  EXPECT_EQ(m(1, 1), 0.0);
  const Array2 dx = segment_mean_backward(Array2{{2, 2}, {9, 9}, {1, 1}}, gap, 3);
  EXPECT_EQ(dx, (Array2{{1, 1}, {1, 1}, {1, 1}}));
  const std::vector<int> bad{0, 3, 0};
  EXPECT_EQ(code_of([&] { segment_mean(x, bad, 3); }), ErrorCode::kBadSegmentId);

  Array2 c(5, 3, 2.5);
  const std::vector<int> segs{1, 0, 1, 1, 0};
  EXPECT_EQ(segment_mean(c, segs, 2), Array2(2, 3, 2.5));
}

TEST(GatherRows, ReorderAndScatterAdd) {
  const Array2 x{{1, 2}, {3, 4}, {5, 6}};
  const std::vector<int> all{0, 1, 2};
  EXPECT_EQ(gather_rows(x, all), x);
  const std::vector<int> swap{2, 0};
  EXPECT_EQ(gather_rows(x, swap), (Array2{{5, 6}, {1, 2}}));
  const std::vector<int> dup{1, 1};
  EXPECT_EQ(gather_rows_backward(Array2{{1, 2}, {10, 20}}, dup, 3), (Array2{{0, 0}, {11, 22}, {0, 0}}));
}

TEST(ScaleRows, IdentityAndZero) {
  const Array2 x = random_array(3, 2, 5);
  EXPECT_EQ(scale_rows(x, Array2(3, 1, 1.0)), x);
  EXPECT_EQ(scale_rows(x, Array2(3, 1, 0.0)), Array2(3, 2));
}

TEST(NormalizedProjection, ZeroProjectionIsAnError) {
  EXPECT_EQ(code_of([] { normalized_projection(Array2(2, 3, 1.0), Array2(3, 1)); }), ErrorCode::kZeroProjection);
  const Array2 y = normalized_projection(Array2{{3, 4}}, Array2{{3}, {4}});
  EXPECT_NEAR(y(0, 0), 5.0, 1e-15);
}

TEST(SoftmaxXent, UniformAndStabilized) {
  const std::vector<int> labels{0, 2};
  const auto u = softmax_xent(Array2(2, 3), labels);
  EXPECT_NEAR(u.loss, std::log(3.0), 1e-15);
  EXPECT_NEAR(u.probs(0, 1), 1.0 / 3.0, 1e-15);

  const std::vector<int> zero{0};
  const auto s = softmax_xent(Array2{{10, -10}}, zero);
  EXPECT_NEAR(s.loss, std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_NEAR(s.loss, 2.06e-9, 1e-11);

  const Array2 big = random_array(6, 4, 9);
  const std::vector<int> lab{0, 1, 2, 3, 0, 1};
  const auto r = softmax_xent(big, lab);
  EXPECT_GE(r.loss, 0.0);
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < 4; ++c) sum += r.probs(i, c);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  const std::vector<int> out_of_range{0, 3};
  EXPECT_EQ(code_of([&] { softmax_xent(Array2(2, 3), out_of_range); }), ErrorCode::kLabelOutOfRange);
}

TEST(SoftmaxXent, BackwardIsProbsMinusOneHotOverBatch) {
  const Array2 logits = random_array(4, 3, 11);
  const std::vector<int> lab{2, 0, 1, 1};
  const auto r = softmax_xent(logits, lab);
  const Array2 d = softmax_xent_backward(r.probs, lab);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_NEAR(d(i, c), (r.probs(i, c) - (static_cast<int>(c) == lab[i] ? 1.0 : 0.0)) / 4.0, 1e-16);
}

TEST(NonFinite, OpsRejectNaN) {
  Array2 x{{1, 2}};
  x(0, 1) = std::nan("");
  EXPECT_EQ(code_of([&] { relu(x); }), ErrorCode::kNonFinite);
  EXPECT_EQ(code_of([&] { matmul(x, Array2{{1}, {1}}); }), ErrorCode::kNonFinite);
}

TEST(Determinism, BitwiseIdenticalOutputs) {
  const Array2 a = random_array(7, 5, 1), b = random_array(5, 6, 2);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
  const std::vector<int> seg{0, 1, 0, 2, 1, 1, 0};
  EXPECT_EQ(segment_mean(a, seg, 3), segment_mean(a, seg, 3));
}

TEST(GradCheck, QuadraticIsExact) {
  ParameterStore ps;
  ps.add("theta", random_array(3, 4, 21));
  auto f = [](ParameterStore& p, bool g) {
    double s = 0;
    for (double v : p.value("theta").data()) s += v * v;
    if (g) {
      Array2& gr = p.grad("theta");
      for (std::size_t i = 0; i < gr.size(); ++i) gr.data()[i] = 2.0 * p.value("theta").data()[i];
    }
    return s;
  };
  const auto r = grad_check(ps, f);
  EXPECT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsAWrongGradient) {
  ParameterStore ps;
  ps.add("theta", random_array(2, 2, 22));
  auto f = [](ParameterStore& p, bool g) {
    double s = 0;
    for (double v : p.value("theta").data()) s += v * v * v;
    if (g) p.grad("theta").fill(1.0);
    return s;
  };
  EXPECT_GT(grad_check(ps, f).max_rel_error, 1e-2);
}

class OpGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradient, CentralDifferencesAgree) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto e = check_op_gradient(GetParam(), seed, 1e-5, 1e-6);
    EXPECT_TRUE(e.finite);
    EXPECT_LT(e.max_rel_error, 1e-6) << GetParam() << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(gradient_op_names()),
                         [](const auto& info) { return info.param; });

TEST(ParameterStore, InsertionOrderAndJsonRoundTrip) {
  ParameterStore ps;
  ps.add("z", random_array(2, 3, 1));
  ps.add("a", random_array(1, 4, 2));
  EXPECT_THROW(ps.add("z", Array2(1, 1)), Error);
  EXPECT_EQ(ps.entries().front().name, "z");
  EXPECT_EQ(ps.num_values(), 10u);
  const auto j = ps.to_json();
  EXPECT_EQ(j.begin().key(), "z");
  const auto back = ParameterStore::from_json(nlohmann::ordered_json::parse(j.dump()));
  for (const auto& p : ps.entries()) {
    const Array2& v = back.value(p.name);
    ASSERT_TRUE(v.same_shape(p.value));
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v.data()[i], p.value.data()[i], 1e-15);
  }
  EXPECT_EQ(code_of([] { ParameterStore::from_json(nlohmann::ordered_json::parse(R"({"w":{"shape":[2,2],"data":[1]}})")); }),
            ErrorCode::kCorruptCheckpoint);
}
