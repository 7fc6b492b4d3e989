#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fgd/attention.hpp"
#include "fgd/gradcheck.hpp"

namespace fgd {
namespace {

Tensor<double> uniform(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

std::vector<double> project(const Linear<double>& l, const std::vector<double>& x) {
  const std::size_t out = l.out_features(), in = l.in_features();
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = l.bias.value[o];
    for (std::size_t i = 0; i < in; ++i) acc += l.weight.value[o * in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

// Literal non-local sum: y_i = (1/C(x)) sum_j exp(theta(x_i).phi(x_j)) g(x_j),
// C(x) = sum_j exp(theta(x_i).phi(x_j)); out = x + gamma * w_z(y).
Tensor<double> literal_nonlocal(const NonLocalBlock<double>& blk, const Tensor<double>& x) {
  const std::size_t T = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), N = T * H * W;
  auto vec_at = [&](std::size_t p) {
    const std::size_t t = p / (H * W), r = p % (H * W);
    std::vector<double> v(C);
    for (std::size_t c = 0; c < C; ++c) v[c] = x[(t * C + c) * H * W + r];
    return v;
  };
  Tensor<double> out = x;
  for (std::size_t i = 0; i < N; ++i) {
    const auto ti = project(blk.theta, vec_at(i));
    std::vector<double> y(C / 2, 0.0);
    double norm = 0;
    for (std::size_t j = 0; j < N; ++j) {
      const auto pj = project(blk.phi, vec_at(j));
      const auto gj = project(blk.g, vec_at(j));
      double dot = 0;
      for (std::size_t k = 0; k < C / 2; ++k) dot += ti[k] * pj[k];
      const double f = std::exp(dot);
      norm += f;
      for (std::size_t k = 0; k < C / 2; ++k) y[k] += f * gj[k];
    }
    for (auto& v : y) v /= norm;
    const auto z = project(blk.w_z, y);
    const std::size_t t = i / (H * W), r = i % (H * W);
    for (std::size_t c = 0; c < C; ++c) out[(t * C + c) * H * W + r] += blk.gamma * z[c];
  }
  return out;
}

TEST(NonLocal, ZeroGammaIsBitExactIdentity) {
  Rng rng(1);
  NonLocalBlock<float> blk("nl", 8, rng);
  blk.gamma = 0.0f;
  std::normal_distribution<float> n(0.0f, 3.0f);
  for (int i = 0; i < 100; ++i) {
    Tensor<float> x({3, 8, 4, 4});
    for (auto& v : x.storage()) v = n(rng);
    Tape<float> tape;
    EXPECT_EQ(blk.forward(tape, tape.constant(x)).value(), x);
  }
}

TEST(NonLocal, SinglePositionAttendsToItself) {
  Rng rng(2);
  NonLocalBlock<double> blk("nl", 4, rng);
  blk.gamma = 0.7;
  const auto x = uniform({1, 4, 1, 1}, rng);
  Tape<double> tape;
  Var<double> attn;
  auto out = blk.forward(tape, tape.constant(x), &attn).value();
  EXPECT_DOUBLE_EQ(attn.value().item(), 1.0);
  const auto z = project(blk.w_z, project(blk.g, x.storage()));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out[c], x[c] + 0.7 * z[c], 1e-14);
}

TEST(NonLocal, MatchesLiteralDoubleLoop) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    NonLocalBlock<double> blk("nl", 2, rng);
    blk.gamma = 0.5 + 0.1 * trial;
    const auto x = uniform({2, 2, 2, 2}, rng);
    Tape<double> tape;
    const auto out = blk.forward(tape, tape.constant(x)).value();
    const auto ref = literal_nonlocal(blk, x);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_LT(std::abs(out[i] - ref[i]), 1e-10);
  }
}

TEST(NonLocal, OddChannelsRejected) {
  Rng rng(4);
  EXPECT_THROW(NonLocalBlock<double>("nl", 3, rng), ContractError);
  NonLocalBlock<double> blk("nl", 4, rng);
  Tape<double> tape;
  EXPECT_THROW(blk.forward(tape, tape.constant(Tensor<double>({1, 3, 2, 2}))), ContractError);
}

TEST(NonLocal, AttentionRowsSumToOne) {
  Rng rng(5);
  NonLocalBlock<double> blk("nl", 6, rng);
  blk.gamma = 1.0;
  const auto x = uniform({3, 6, 3, 2}, rng, -3, 3);
  Tape<double> tape;
  Var<double> attn;
  blk.forward(tape, tape.constant(x), &attn);
  const std::size_t n = 18;
  ASSERT_EQ(attn.shape(), (Shape{n, n}));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += attn.value()[i * n + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(NonLocal, PositionPermutationEquivariance) {
  Rng rng(6);
  NonLocalBlock<double> blk("nl", 4, rng);
  blk.gamma = 0.8;
  const std::size_t T = 2, C = 4, H = 3, W = 2, N = T * H * W;
  const auto x = uniform({T, C, H, W}, rng);
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute_positions = [&](const Tensor<double>& src, bool inverse) {
    Tensor<double> dst(src.shape());
    for (std::size_t p = 0; p < N; ++p) {
      const std::size_t from = inverse ? perm[p] : p, to = inverse ? p : perm[p];
      for (std::size_t c = 0; c < C; ++c) {
        dst[((to / (H * W)) * C + c) * H * W + to % (H * W)] = src[((from / (H * W)) * C + c) * H * W + from % (H * W)];
      }
    }
    return dst;
  };
  Tape<double> tape;
  const auto direct = blk.forward(tape, tape.constant(x)).value();
  const auto via_perm = permute_positions(blk.forward(tape, tape.constant(permute_positions(x, false))).value(), true);
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(direct[i], via_perm[i], 1e-12);
}

TEST(NonLocal, GradCheckInputAndParameters) {
  Rng rng(7);
  NonLocalBlock<double> blk("nl", 4, rng);
  blk.gamma = 0.9;
  const auto x = uniform({2, 4, 3, 3}, rng);
  const auto target = uniform({2, 4, 3, 3}, rng);
  DiffFn<double> f = [&](const Var<double>& in) {
    Tape<double>& t = in.tape();
    return sum(mul(blk.forward(t, in), t.constant(target)));
  };
  auto r = grad_check(f, x, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
  // A shift of phi's bias moves every score in a row equally, so softmax
  // removes it: that gradient is exactly zero and only checked absolutely.
  ParamList<double> params;
  blk.collect(params);
  std::erase(params, &blk.phi.bias);
  auto pr = grad_check_params<double>([&](Tape<double>& t) { return f(t.constant(x)); }, params, 1e-4);
  EXPECT_TRUE(pr.pass) << pr.worst_param << " " << pr.max_rel_error;
  blk.phi.bias.zero_grad();
  Tape<double> tape;
  tape.backward(f(tape.constant(x)));
  for (double gb : blk.phi.bias.grad.data()) EXPECT_LT(std::abs(gb), 1e-12);
}

TEST(TemporalAttention, SingleStepPassesThrough) {
  Rng rng(8);
  TemporalAttention<double> att("att", 5, rng);
  const auto h = uniform({1, 5}, rng);
  Tape<double> tape;
  auto out = att.attend(tape, tape.constant(h)).value();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(out[i], h[i]);
}

TEST(TemporalAttention, IdenticalStatesReturnThatState) {
  Rng rng(9);
  TemporalAttention<double> att("att", 3, rng);
  Tensor<double> h({4, 3});
  for (std::size_t t = 0; t < 4; ++t) {
    h[t * 3] = 0.25;
    h[t * 3 + 1] = -1.5;
    h[t * 3 + 2] = 2.0;
  }
  Tape<double> tape;
  auto out = att.attend(tape, tape.constant(h)).value();
  EXPECT_NEAR(out[0], 0.25, 1e-15);
  EXPECT_NEAR(out[1], -1.5, 1e-15);
  EXPECT_NEAR(out[2], 2.0, 1e-15);
}

TEST(TemporalAttention, MatchesManualSoftmaxAverage) {
  Rng rng(10);
  TemporalAttention<double> att("att", 4, rng);
  att.score.weight.value = Tensor<double>({1, 4}, {0.5, -1.0, 0.25, 2.0});
  att.score.bias.value = Tensor<double>({1}, {0.3});
  const auto h = uniform({3, 4}, rng);
  double s[3], z = 0;
  for (int t = 0; t < 3; ++t) {
    s[t] = 0.3 + 0.5 * h[t * 4] - 1.0 * h[t * 4 + 1] + 0.25 * h[t * 4 + 2] + 2.0 * h[t * 4 + 3];
    z += std::exp(s[t]);
  }
  Tape<double> tape;
  Var<double> w;
  auto out = att.attend(tape, tape.constant(h), &w).value();
  for (int k = 0; k < 4; ++k) {
    double expect = 0;
    for (int t = 0; t < 3; ++t) expect += std::exp(s[t]) / z * h[t * 4 + k];
    EXPECT_NEAR(out[k], expect, 1e-14);
  }
  EXPECT_NEAR(w.value()[1], std::exp(s[1]) / z, 1e-15);
}

TEST(TemporalAttention, OutputInConvexHull) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    TemporalAttention<double> att("att", 6, rng);
    for (auto& v : att.score.weight.value.storage()) v *= 5;
    const auto h = uniform({7, 6}, rng);
    Tape<double> tape;
    auto out = att.attend(tape, tape.constant(h)).value();
    for (std::size_t k = 0; k < 6; ++k) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t t = 0; t < 7; ++t) {
        lo = std::min(lo, h[t * 6 + k]);
        hi = std::max(hi, h[t * 6 + k]);
      }
      EXPECT_GE(out[k], lo - 1e-12);
      EXPECT_LE(out[k], hi + 1e-12);
    }
  }
}

TEST(TemporalAttention, EmptySequenceRejected) {
  Rng rng(12);
  TemporalAttention<double> att("att", 3, rng);
  Tape<double> tape;
  EXPECT_THROW(att.attend(tape, std::vector<Var<double>>{}), ContractError);
}

TEST(TemporalAttention, GradCheck) {
  Rng rng(13);
  TemporalAttention<double> att("att", 4, rng);
  const auto h = uniform({5, 4}, rng);
  const auto target = uniform({4}, rng);
  DiffFn<double> f = [&](const Var<double>& in) {
    return sum(mul(att.attend(in.tape(), in), in.tape().constant(target)));
  };
  EXPECT_TRUE(grad_check(f, h, 1e-4).pass);
  ParamList<double> params;
  att.collect(params);
  EXPECT_TRUE(grad_check_params<double>([&](Tape<double>& t) { return f(t.constant(h)); }, params, 1e-4).pass);
}

TEST(Heatmap, SingleChannelIsNormalizedMagnitude) {
  Tensor<float> f({1, 2, 2}, {-2.0f, 1.0f, 0.0f, 4.0f});
  auto m = attention_heatmap(f);
  EXPECT_EQ(m.shape(), (Shape{2, 2}));
  EXPECT_FLOAT_EQ(m[0], 0.5f);
  EXPECT_FLOAT_EQ(m[1], 0.25f);
  EXPECT_FLOAT_EQ(m[2], 0.0f);
  EXPECT_FLOAT_EQ(m[3], 1.0f);
}

TEST(Heatmap, OpposedChannelsMatchDoubledMagnitude) {
  Rng rng(14);
  std::uniform_real_distribution<float> d(-1, 1);
  Tensor<float> v({1, 3, 3}), both({2, 3, 3}), doubled({1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    v[i] = d(rng);
    both[i] = v[i];
    both[9 + i] = -v[i];
    doubled[i] = 2 * std::abs(v[i]);
  }
  auto a = attention_heatmap(both), b = attention_heatmap(doubled);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(Heatmap, MatchesChannelLoop) {
  Rng rng(15);
  std::normal_distribution<float> n;
  Tensor<float> f({4, 5, 5});
  for (auto& v : f.storage()) v = n(rng);
  std::vector<float> raw(25, 0.0f);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t m = 0; m < 4; ++m) raw[i * 5 + j] += std::abs(f[(m * 5 + i) * 5 + j]);
  const float lo = *std::min_element(raw.begin(), raw.end()), hi = *std::max_element(raw.begin(), raw.end());
  auto map = attention_heatmap(f);
  for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(map[k], (raw[k] - lo) / (hi - lo), 1e-6);
}

TEST(Heatmap, AllZeroFeaturesGiveZeroMap) {
  auto m = attention_heatmap(Tensor<float>({3, 4, 4}));
  for (float v : m.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Heatmap, PgmEncoding) {
  Tensor<float> m({1, 2}, {0.0f, 1.0f});
  const std::string pgm = encode_pgm(m, 2);
  const std::string header = "P5\n4 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 8);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 0u);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 2]), 255u);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 7]), 255u);
}

TEST(GammaSchedule, RampEndpoints) {
  EXPECT_DOUBLE_EQ(gamma_schedule(0, 10), 0.1);
  EXPECT_DOUBLE_EQ(gamma_schedule(9, 10), 1.0);
  EXPECT_DOUBLE_EQ(gamma_schedule(-1, 10), 0.0);
  EXPECT_DOUBLE_EQ(gamma_schedule(20, 10), 1.0);
  EXPECT_NEAR(gamma_schedule(3, 10), 0.4, 1e-15);
  for (int e = 1; e < 10; ++e) EXPECT_GT(gamma_schedule(e, 10), gamma_schedule(e - 1, 10));
  EXPECT_THROW(gamma_schedule(0, 0), ContractError);
}

}  // namespace
}  // namespace fgd
