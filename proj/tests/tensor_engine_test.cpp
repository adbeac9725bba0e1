#include <cmath>
#include <limits>

#include "hsnn/gradcheck.hpp"
#include "hsnn/ops.hpp"
#include "test_util.hpp"

using namespace hsnn;
using hsnn::testing::expect_near;
using hsnn::testing::random_tensor;

namespace {

using G = Graph<double>;
using V = Var<double>;
using Td = Tensor<double>;

// Direct six-nested-loop cross-correlation with zero padding.
Td naive_conv(const Td& x, const Td& w, std::size_t stride, Padding pad) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (H + pad.top + pad.bottom - kh) / stride + 1;
  const std::size_t ow = (W + pad.left + pad.right - kw) / stride + 1;
  Td out({N, Co, oh, ow});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t b = 0; b < kw; ++b) {
                const long long y = static_cast<long long>(i * stride + a) - static_cast<long long>(pad.top);
                const long long z = static_cast<long long>(j * stride + b) - static_cast<long long>(pad.left);
                if (y < 0 || z < 0 || y >= static_cast<long long>(H) || z >= static_cast<long long>(W)) continue;
                acc += x.at({n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(z)}) * w.at({o, c, a, b});
              }
          out.at({n, o, i, j}) = acc;
        }
  return out;
}

double dot(const Td& a, const Td& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

Td eval_conv(const Td& x, const Td& w, std::size_t stride, Padding pad) {
  G g;
  return conv2d(g.constant(x), g.constant(w), stride, pad).value();
}

}  // namespace

// ---------------------------------------------------------------- conv2d

TEST(Conv2d, OnesKernelSumsWindow) {
  G g;
  auto y = conv2d(g.constant(Td::ones({1, 1, 3, 3})), g.constant(Td::ones({1, 1, 3, 3})));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.value()[0], 9.0);
}

TEST(Conv2d, CenterKernelIsIdentity) {
  Rng rng(1);
  Td x = random_tensor(rng, {1, 1, 5, 6});
  Td k({1, 1, 3, 3});
  k.at({0, 0, 1, 1}) = 1.0;
  EXPECT_EQ(eval_conv(x, k, 1, Padding::uniform(1)), x);
}

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(2);
  Td x = random_tensor(rng, {1, 2, 5, 5});
  Td w = random_tensor(rng, {3, 2, 3, 3});
  expect_near(eval_conv(x, w, 1, {}), naive_conv(x, w, 1, {}), 1e-12);
  expect_near(eval_conv(x, w, 2, Padding{1, 0, 2, 1}), naive_conv(x, w, 2, Padding{1, 0, 2, 1}), 1e-12);
}

TEST(Conv2d, OutputExtentFormula) {
  G g;
  auto y = conv2d(g.constant(Td({2, 1, 7, 9})), g.constant(Td({4, 1, 3, 3})), 2, Padding{1, 2, 0, 1});
  // floor((7+3-3)/2)+1 = 4, floor((9+1-3)/2)+1 = 4
  EXPECT_EQ(y.shape(), (Shape{2, 4, 4, 4}));
}

TEST(Conv2d, RejectsChannelMismatch) {
  G g;
  try {
    conv2d(g.constant(Td({1, 3, 4, 4})), g.constant(Td({2, 2, 3, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Conv2d, RejectsKernelLargerThanPaddedInput) {
  G g;
  EXPECT_THROW(conv2d(g.constant(Td({1, 1, 2, 2})), g.constant(Td({1, 1, 3, 3}))), ShapeError);
}

// ---------------------------------------------------------------- conv_transpose2d

TEST(ConvTranspose2d, SingleValueBroadcastsKernel) {
  G g;
  auto y = conv_transpose2d(g.constant(Td({1, 1, 1, 1}, 2.0)), g.constant(Td::ones({1, 1, 2, 2})));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.value().data()) EXPECT_EQ(v, 2.0);
}

TEST(ConvTranspose2d, UpsamplesThirtyToSixty) {
  G g;
  auto y = conv_transpose2d(g.constant(Td({1, 2, 30, 30})), g.constant(Td({2, 3, 4, 4})), 2, Padding::uniform(1));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 60, 60}));
}

TEST(ConvTranspose2d, CropKeepsThirtyAtStrideOne) {
  G g;
  auto y = conv_transpose2d(g.constant(Td({1, 2, 30, 30})), g.constant(Td({2, 3, 4, 4})), 1, Padding::uniform(1),
                            Padding{0, 1, 0, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 3, 30, 30}));
}

TEST(ConvTranspose2d, RejectsNonPositiveExtent) {
  G g;
  EXPECT_THROW(conv_transpose2d(g.constant(Td({1, 1, 1, 1})), g.constant(Td({1, 1, 2, 2})), 1, Padding::uniform(1)),
               ShapeError);
}

TEST(ConvTranspose2d, ForwardEqualsConvInputGradient) {
  Rng rng(3);
  // Extents chosen so the transposed output lands exactly on the conv input.
  for (auto [stride, extent] : {std::pair<std::size_t, std::size_t>{1, 7}, {2, 8}}) {
    Td x = random_tensor(rng, {1, 2, extent, extent});
    Td w = random_tensor(rng, {3, 2, 4, 4});
    const Padding pad = Padding::uniform(1);
    G g;
    V xv = g.leaf(x);
    V y = conv2d(xv, g.constant(w), stride, pad);
    Td gy = random_tensor(rng, y.shape());
    g.backward(sum(hadamard(y, g.constant(gy))));
    G g2;
    Td t = conv_transpose2d(g2.constant(gy), g2.constant(w), stride, pad).value();
    expect_near(t, g.grad(xv), 1e-12);
  }
}

TEST(ConvTranspose2d, AdjointInnerProductIdentity) {
  Rng rng(4);
  for (auto [stride, pad] : {std::pair<std::size_t, Padding>{1, Padding::uniform(1)}, {2, Padding::uniform(1)},
                             {1, Padding{1, 1, 0, 2}}}) {
    Td x = random_tensor(rng, {2, 3, 9, 9});
    Td w = random_tensor(rng, {4, 3, 3, 3});
    Td cx = eval_conv(x, w, stride, pad);
    Td y = random_tensor(rng, cx.shape());
    G g;
    Td ty = conv_transpose2d(g.constant(y), g.constant(w), stride, pad).value();
    ASSERT_EQ(ty.shape(), x.shape());
    EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10);
  }
}

// ---------------------------------------------------------------- deformable_conv2d

TEST(DeformableConv2d, ZeroOffsetsAreBitIdenticalToConv) {
  Rng rng(5);
  Td x = random_tensor(rng, {2, 3, 6, 7});
  Td w = random_tensor(rng, {4, 3, 3, 3});
  G g;
  V y1 = conv2d(g.constant(x), g.constant(w), 1, Padding::uniform(1));
  V y2 = deformable_conv2d(g.constant(x), g.constant(w), g.constant(Td({2, 18, 6, 7})), 1, Padding::uniform(1));
  EXPECT_EQ(y1.value(), y2.value());
}

TEST(DeformableConv2d, IntegerOffsetShiftsInput) {
  Rng rng(6);
  Td x = random_tensor(rng, {1, 2, 6, 6});
  Td w = random_tensor(rng, {3, 2, 3, 3});
  for (int axis = 0; axis < 2; ++axis) {
    // Unpadded, so both sides read zeros at exactly the same border samples.
    Td off({1, 18, 4, 4});
    for (std::size_t tap = 0; tap < 9; ++tap)
      for (std::size_t p = 0; p < 16; ++p) off[(2 * tap + axis) * 16 + p] = 1.0;
    // Shifted copy: shifted(y, x) = x(y + dy, x + dx), zero beyond the border.
    Td shifted({1, 2, 6, 6});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          const std::size_t si = i + (axis == 0), sj = j + (axis == 1);
          if (si < 6 && sj < 6) shifted.at({0, c, i, j}) = x.at({0, c, si, sj});
        }
    G g;
    Td got = deformable_conv2d(g.constant(x), g.constant(w), g.constant(off)).value();
    expect_near(got, eval_conv(shifted, w, 1, {}), 1e-12);
  }
}

TEST(DeformableConv2d, HalfOffsetSamplesMidpointOfRamp) {
  // Ramp image v(y, x) = 10y + x, single centre-tap kernel, dy = 0.5.
  Td x({1, 1, 4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) x.at({0, 0, i, j}) = 10.0 * i + j;
  Td w({1, 1, 1, 1}, 1.0);
  Td off({1, 2, 4, 4});
  for (std::size_t p = 0; p < 16; ++p) off[p] = 0.5;
  G g;
  Td y = deformable_conv2d(g.constant(x), g.constant(w), g.constant(off)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at({0, 0, i, j}), 10.0 * i + 5.0 + j, 1e-12);
  // Last row: midpoint between the border row and the zero padding.
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at({0, 0, 3, j}), 0.5 * (30.0 + j), 1e-12);
}

TEST(DeformableConv2d, RejectsWrongOffsetChannels) {
  G g;
  EXPECT_THROW(deformable_conv2d(g.constant(Td({1, 1, 4, 4})), g.constant(Td({1, 1, 3, 3})),
                                 g.constant(Td({1, 9, 4, 4})), 1, Padding::uniform(1)),
               ShapeError);
}

// ---------------------------------------------------------------- max_pool2d

TEST(MaxPool2d, PicksBlockMaximum) {
  G g;
  auto y = max_pool2d(g.constant(Td({1, 1, 2, 2}, {1, 2, 3, 4})), 2, 2);
  EXPECT_EQ(y.value()[0], 4.0);
}

TEST(MaxPool2d, TiesRouteGradientToFirstElement) {
  G g;
  V x = g.leaf(Td({1, 1, 4, 4}, 3.0));
  g.backward(sum(max_pool2d(x, 2, 2)));
  Td gx = g.grad(x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(gx.at({0, 0, i, j}), (i % 2 == 0 && j % 2 == 0) ? 1.0 : 0.0);
}

TEST(MaxPool2d, MatchesNaiveLoops) {
  Rng rng(7);
  Td x = random_tensor(rng, {2, 3, 8, 8});
  for (auto [k, s] : {std::pair<std::size_t, std::size_t>{2, 2}, {3, 2}, {3, 1}}) {
    G g;
    Td y = max_pool2d(g.constant(x), k, s).value();
    const std::size_t o = (8 - k) / s + 1;
    ASSERT_EQ(y.shape(), (Shape{2, 3, o, o}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < o; ++i)
          for (std::size_t j = 0; j < o; ++j) {
            double m = -1e300;
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) m = std::max(m, x.at({n, c, i * s + a, j * s + b}));
            EXPECT_EQ(y.at({n, c, i, j}), m);
          }
  }
}

TEST(MaxPool2d, RejectsOversizedKernel) {
  G g;
  EXPECT_THROW(max_pool2d(g.constant(Td({1, 1, 3, 3})), 4, 1), ShapeError);
}

// ---------------------------------------------------------------- elementwise

TEST(Elementwise, ClosedFormValues) {
  G g;
  EXPECT_EQ(sigmoid(g.constant(Td::scalar(0.0))).value()[0], 0.5);
  EXPECT_EQ(tanh(g.constant(Td::scalar(0.0))).value()[0], 0.0);
  auto h = hadamard(g.constant(Td({2}, {1, 2})), g.constant(Td({2}, {3, 4})));
  EXPECT_EQ(h.value(), Td({2}, {3, 8}));
  EXPECT_EQ(relu(g.constant(Td({3}, {-1, 0, 2}))).value(), Td({3}, {0, 0, 2}));
}

TEST(Elementwise, BinaryShapeMismatchRejected) {
  G g;
  EXPECT_THROW(add(g.constant(Td({2})), g.constant(Td({3}))), ShapeError);
  EXPECT_THROW(hadamard(g.constant(Td({2, 1})), g.constant(Td({1, 2}))), ShapeError);
}

// ---------------------------------------------------------------- matmul

TEST(Matmul, IdentityAndSmallProduct) {
  Rng rng(8);
  Td x = random_tensor(rng, {3, 4});
  Td eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
  G g;
  EXPECT_EQ(matmul(g.constant(eye), g.constant(x)).value(), x);
  EXPECT_EQ(matmul(g.constant(Td({1, 2}, {1, 2})), g.constant(Td({2, 1}, {3, 4}))).value()[0], 11.0);
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  Rng rng(9);
  Td a = random_tensor(rng, {7, 5}), b = random_tensor(rng, {5, 3});
  G g;
  Td c = matmul(g.constant(a), g.constant(b)).value();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), s, 1e-12);
    }
}

TEST(Matmul, BroadcastsBatchAxes) {
  Rng rng(10);
  Td a = random_tensor(rng, {2, 3, 4}), b = random_tensor(rng, {4, 5});
  G g;
  Td c = matmul(g.constant(a), g.constant(b)).value();
  ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += a.at({n, i, k}) * b.at({k, j});
        EXPECT_NEAR(c.at({n, i, j}), s, 1e-12);
      }
}

TEST(Matmul, RejectsInnerMismatch) {
  G g;
  EXPECT_THROW(matmul(g.constant(Td({2, 3})), g.constant(Td({4, 2}))), ShapeError);
}

// ---------------------------------------------------------------- softmax

TEST(Softmax, SymmetricSingletonAndStable) {
  G g;
  EXPECT_EQ(softmax(g.constant(Td({2}, {0, 0}))).value(), Td({2}, {0.5, 0.5}));
  EXPECT_EQ(softmax(g.constant(Td::scalar(3.0))).value()[0], 1.0);
  Td big = softmax(g.constant(Td({2}, {1000, 0}))).value();
  EXPECT_NEAR(big[0], 1.0, 1e-12);
  EXPECT_NEAR(big[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(big[1]));
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Td x = random_tensor(rng, {4, 9}, -20, 20);
    Td shifted = x;
    const double c = rng.uniform(-50, 50);
    for (auto& v : shifted.data()) v += c;
    G g;
    Td y = softmax(g.constant(x), 1).value();
    Td ys = softmax(g.constant(shifted), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) s += y.at({r, j});
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
    expect_near(y, ys, 1e-12);
  }
}

// ---------------------------------------------------------------- group_norm

TEST(GroupNorm, ConstantInputGivesZero) {
  G g;
  Td y = group_norm(g.constant(Td({1, 4, 3, 3}, 7.0)), 2, g.constant(Td::ones({4})), g.constant(Td({4}))).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(GroupNorm, ZeroGainGivesBias) {
  Rng rng(12);
  Td bias = random_tensor(rng, {4});
  G g;
  Td y = group_norm(g.constant(random_tensor(rng, {2, 4, 3, 3})), 2, g.constant(Td({4})), g.constant(bias)).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[(n * 4 + c) * 9 + i], bias[c]);
}

TEST(GroupNorm, PerChannelMatchesDirectFormula) {
  Rng rng(13);
  Td x = random_tensor(rng, {2, 3, 4, 5}, -3, 3);
  Td gain = random_tensor(rng, {3}), bias = random_tensor(rng, {3});
  G g;
  Td y = group_norm(g.constant(x), 3, g.constant(gain), g.constant(bias)).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double mu = 0, var = 0;
      for (std::size_t i = 0; i < 20; ++i) mu += x[(n * 3 + c) * 20 + i] / 20.0;
      for (std::size_t i = 0; i < 20; ++i) var += std::pow(x[(n * 3 + c) * 20 + i] - mu, 2) / 20.0;
      for (std::size_t i = 0; i < 20; ++i) {
        const double want = (x[(n * 3 + c) * 20 + i] - mu) / std::sqrt(var + 1e-5) * gain[c] + bias[c];
        EXPECT_NEAR(y[(n * 3 + c) * 20 + i], want, 1e-12);
      }
    }
}

TEST(GroupNorm, GroupsAreStandardized) {
  // Variance ~ 300 keeps eps/var below the 1e-6 tolerance on the unit variance.
  Rng rng(14);
  Td x = random_tensor(rng, {1, 8, 5, 5}, -30, 30);
  G g;
  Td y = group_norm(g.constant(x), 4, g.constant(Td::ones({8})), g.constant(Td({8}))).value();
  for (std::size_t gi = 0; gi < 4; ++gi) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < 50; ++i) mu += y[gi * 50 + i] / 50.0;
    for (std::size_t i = 0; i < 50; ++i) var += std::pow(y[gi * 50 + i] - mu, 2) / 50.0;
    EXPECT_NEAR(mu, 0.0, 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(GroupNorm, RejectsIndivisibleChannels) {
  G g;
  EXPECT_THROW(group_norm(g.constant(Td({1, 6, 2, 2})), 4, g.constant(Td({6})), g.constant(Td({6}))), ShapeError);
}

// ---------------------------------------------------------------- backward

TEST(Backward, SumGivesOnes) {
  G g;
  V x = g.leaf(Td({2, 3}, 0.7));
  g.backward(sum(x));
  EXPECT_EQ(g.grad(x), Td::ones({2, 3}));
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Rng rng(15);
  Td xv = random_tensor(rng, {5});
  G g;
  V x = g.leaf(xv);
  g.backward(sum(hadamard(x, x)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g.grad(x)[i], 2 * xv[i]);
}

TEST(Backward, RejectsNonScalarLoss) {
  G g;
  V x = g.leaf(Td({2}));
  EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Backward, UnreachableLeafGetsZero) {
  G g;
  V x = g.leaf(Td({3}, 1.0));
  V unused = g.leaf(Td({2}, 5.0));
  g.backward(sum(x));
  EXPECT_EQ(g.grad(unused), Td::zeros({2}));
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Rng rng(16);
  Td x = random_tensor(rng, {3, 3});
  auto report = grad_check("shared", {x}, [](G&, const std::vector<V>& in) {
    V t = tanh(in[0]);
    V s = hadamard(t, t);  // t used twice, and reused again below
    return add(s, matmul(t, t));
  });
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
}

TEST(Backward, CompositeConvPoolMatmulMatchesFiniteDifferences) {
  Rng rng(17);
  Td x = random_tensor(rng, {1, 2, 6, 6});
  Td w = random_tensor(rng, {3, 2, 3, 3});
  Td m = random_tensor(rng, {3, 4});
  auto report = grad_check("conv-pool-matmul", {x, w, m}, [](G&, const std::vector<V>& in) {
    V c = conv2d(in[0], in[1], 1, Padding::uniform(1));  // [1,3,6,6]
    V p = max_pool2d(c, 2, 2);                            // [1,3,3,3]
    V flat = reshape(p, {3, 9});
    return matmul(transpose(flat), in[2]);  // [9,4]
  });
  EXPECT_LT(report.max_rel_error, 1e-4);
}

// ---------------------------------------------------------------- grad_check over every op, 3 shapes each

struct GradCase {
  const char* name;
  std::function<std::vector<Td>(Rng&, int)> make;
  std::function<V(G&, const std::vector<V>&)> op;
};

class GradCheckAllOps : public ::testing::TestWithParam<int> {};

TEST_P(GradCheckAllOps, ThreeRandomShapes) {
  const std::vector<GradCase> cases = {
      {"conv2d",
       [](Rng& r, int s) {
         return std::vector<Td>{random_tensor(r, {1 + s % 2, 2, 4 + s, 5}), random_tensor(r, {3, 2, 3, 3})};
       },
       [](G&, const std::vector<V>& in) { return conv2d(in[0], in[1], 1 + 0, Padding{1, 0, 1, 1}); }},
      {"conv2d_strided",
       [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {1, 2, 5 + s, 6}), random_tensor(r, {2, 2, 3, 3})}; },
       [](G&, const std::vector<V>& in) { return conv2d(in[0], in[1], 2, Padding::uniform(1)); }},
      {"conv_transpose2d",
       [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {1, 2, 3 + s, 4}), random_tensor(r, {2, 3, 4, 4})}; },
       [](G&, const std::vector<V>& in) {
         return conv_transpose2d(in[0], in[1], 2, Padding::uniform(1), Padding{0, 1, 1, 0});
       }},
      {"deformable_conv2d",
       [](Rng& r, int s) {
         const std::size_t h = 4 + s;
         return std::vector<Td>{random_tensor(r, {1, 2, h, 5}), random_tensor(r, {2, 2, 3, 3}),
                                random_tensor(r, {1, 18, h, 5}, -1.4, 1.4)};
       },
       [](G&, const std::vector<V>& in) { return deformable_conv2d(in[0], in[1], in[2], 1, Padding::uniform(1)); }},
      {"max_pool2d", [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {1, 2, 4 + s, 6})}; },
       [](G&, const std::vector<V>& in) { return max_pool2d(in[0], 2, 2); }},
      {"adaptive_avg_pool2d", [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {1, 2, 5 + s, 7})}; },
       [](G&, const std::vector<V>& in) { return adaptive_avg_pool2d(in[0], 3, 4); }},
      {"group_norm",
       [](Rng& r, int s) {
         return std::vector<Td>{random_tensor(r, {2, 4, 2 + s, 3}), random_tensor(r, {4}), random_tensor(r, {4})};
       },
       [](G&, const std::vector<V>& in) { return group_norm(in[0], 2, in[1], in[2]); }},
      {"matmul",
       [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {2, 3 + s, 4}), random_tensor(r, {4, 2 + s})}; },
       [](G&, const std::vector<V>& in) { return matmul(in[0], in[1]); }},
      {"softmax", [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {3, 4 + s}, -3, 3)}; },
       [](G&, const std::vector<V>& in) { return softmax(in[0], 1); }},
      {"softmax_axis0", [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {3 + s, 4}, -3, 3)}; },
       [](G&, const std::vector<V>& in) { return softmax(in[0], 0); }},
      {"elementwise",
       [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {2, 3 + s}), random_tensor(r, {2, 3 + s})}; },
       [](G&, const std::vector<V>& in) {
         return sub(add(sigmoid(in[0]), tanh(in[1])), hadamard(relu(in[0]), scale(in[1], 0.7)));
       }},
      {"bias_concat_slice",
       [](Rng& r, int s) { return std::vector<Td>{random_tensor(r, {2, 3 + s}), random_tensor(r, {2})}; },
       [](G&, const std::vector<V>& in) {
         V b = add_bias(in[0], in[1], 0);
         return slice(concat<double>({b, in[0]}, 1), 1, 1, 4);
       }},
  };
  const int shape_variant = GetParam();
  for (const auto& c : cases) {
    Rng rng(100 + shape_variant);
    auto report = grad_check(c.name, c.make(rng, shape_variant), c.op);
    EXPECT_TRUE(report.passed()) << c.name << " variant " << shape_variant << " max rel err " << report.max_rel_error;
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, GradCheckAllOps, ::testing::Values(0, 1, 2));
