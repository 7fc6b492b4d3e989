// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Usage: fgd_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "fgd/detector.hpp"
#include "fgd/gradcheck.hpp"
#include "fgd/posegan.hpp"
#include "fgd/streams.hpp"
#include "fgd/synth.hpp"

namespace fgd {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

Tensor<double> uniform(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

// ---------------------------------------------------------------- 1

struct GradSuite {
  Outcome& out;
  double worst = 0;
  std::string worst_name;
  int checks = 0;

  void note(const std::string& name, double err) {
    if (err > worst) worst = err, worst_name = name;
    ++checks;
  }

  void params(const std::string& name, const std::function<Var<double>(Tape<double>&)>& loss, ParamList<double> ps,
              double tol, double h = 1e-6) {
    const auto r = grad_check_params<double>(loss, ps, tol, h);
    note(name + " params", r.max_rel_error);
    out.check(r.pass, name + " params (" + r.worst_param + ")");
  }
  void input(const std::string& name, const DiffFn<double>& f, const Tensor<double>& x, double tol, double h = 1e-6) {
    const auto r = grad_check(f, x, tol, h);
    note(name + " input", r.max_rel_error);
    out.check(r.pass, name + " input");
  }
};

NetConfig small_net() {
  NetConfig c;
  c.hidden = 12;
  c.widths = {4, 8, 8};
  return c;
}

VideoSample random_clip(std::size_t t, std::size_t hw, int label, Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  VideoSample s;
  s.frames = Tensor<float>({t, 3, hw, hw});
  s.joint_map = Tensor<float>({t, 1, hw, hw});
  s.object_map = Tensor<float>({t, 1, hw, hw});
  for (auto& v : s.frames.storage()) v = u(rng);
  for (auto& v : s.joint_map.storage()) v = u(rng) < 0.2f ? 1.0f : 0.0f;
  for (auto& v : s.object_map.storage()) v = u(rng) < 0.1f ? 1.0f : 0.0f;
  s.label = label;
  return s;
}

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  GradSuite g{o};
  constexpr double tol = 1e-4;
  Rng rng(101);

  {
    Linear<double> lin("lin", 5, 4, rng);
    const auto x = uniform({3, 5}, rng), target = uniform({3, 4}, rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      return sum(mul(fgd::tanh(lin.forward(in.tape(), in)), in.tape().constant(target)));
    };
    ParamList<double> ps;
    lin.collect(ps);
    g.params("linear", [&](Tape<double>& t) { return f(t.constant(x)); }, ps, tol);
    g.input("linear", f, x, tol);
  }
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {2, 0}}) {
    Conv2dLayer<double> conv("conv", 2, 3, 3, stride, pad, rng);
    const auto x = uniform({2, 2, 6, 6}, rng);
    Tape<double> probe;
    const auto target = uniform(conv.forward(probe, probe.constant(x)).value().shape(), rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      return sum(mul(fgd::tanh(conv.forward(in.tape(), in)), in.tape().constant(target)));
    };
    ParamList<double> ps;
    conv.collect(ps);
    g.params("conv2d", [&](Tape<double>& t) { return f(t.constant(x)); }, ps, tol);
    g.input("conv2d", f, x, tol);
  }
  {
    const auto x = uniform({2, 3, 4, 4}, rng), w = uniform({2, 3}, rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      auto pooled = avg_pool2d(in, 2);
      return add(sum(mul(global_avg_pool(pooled), in.tape().constant(w))), mean(mul(pooled, pooled)));
    };
    g.input("pooling", f, x, tol);
  }
  {
    const auto x = uniform({4, 6}, rng), w = uniform({4, 6}, rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      Tape<double>& t = in.tape();
      return sum(mul(add(add(fgd::sigmoid(in), fgd::softplus(in)), fgd::tanh(in)), t.constant(w)));
    };
    g.input("activations", f, x, tol);
  }
  {
    LstmCell<double> cell("lstm", 3, 4, rng);
    const auto xs = uniform({5, 3}, rng), target = uniform({5, 4}, rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      return sum(mul(cell.run(in.tape(), in), in.tape().constant(target)));
    };
    ParamList<double> ps;
    cell.collect(ps);
    g.params("lstm", [&](Tape<double>& t) { return f(t.constant(xs)); }, ps, tol, 1e-4);
    g.input("lstm", f, xs, tol);
  }
  {
    NonLocalBlock<double> blk("nl", 4, rng);
    blk.gamma = 0.9;
    const auto x = uniform({2, 4, 3, 3}, rng), target = uniform({2, 4, 3, 3}, rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      return sum(mul(blk.forward(in.tape(), in), in.tape().constant(target)));
    };
    g.input("nonlocal", f, x, tol);
    // phi's bias shifts a whole score row, which softmax cancels: zero gradient
    ParamList<double> ps;
    blk.collect(ps);
    std::erase(ps, &blk.phi.bias);
    g.params("nonlocal", [&](Tape<double>& t) { return f(t.constant(x)); }, ps, tol);
    blk.phi.bias.zero_grad();
    Tape<double> tape;
    tape.backward(f(tape.constant(x)));
    double gb = 0;
    for (double v : blk.phi.bias.grad.data()) gb = std::max(gb, std::abs(v));
    o.check(gb < 1e-12, "nonlocal phi bias gradient not zero");
  }
  {
    TemporalAttention<double> att("att", 4, rng);
    const auto h = uniform({5, 4}, rng), target = uniform({4}, rng);
    DiffFn<double> f = [&](const Var<double>& in) {
      return sum(mul(att.attend(in.tape(), in), in.tape().constant(target)));
    };
    ParamList<double> ps;
    att.collect(ps);
    g.params("temporal attention", [&](Tape<double>& t) { return f(t.constant(h)); }, ps, tol);
    g.input("temporal attention", f, h, tol);
  }
  for (std::size_t label : {0u, 3u}) {
    const auto z = uniform({6}, rng, -3, 3);
    DiffFn<double> f = [&](const Var<double>& in) { return cross_entropy(in, label); };
    g.input("cross entropy", f, z, tol);
  }
  {
    Critic<double> critic({7, 5}, Activation::tanh, rng);
    const auto q = uniform({3, 12}, rng, 0, 1);
    DiffFn<double> f = [&](const Var<double>& in) { return sum(critic.forward(in.tape(), in)); };
    g.params("critic", [&](Tape<double>& t) { return f(t.constant(q)); }, critic.parameters(), tol);
    g.input("critic", f, q, tol);
  }
  {
    PoseGenerator<double> gen(16, 16, rng, 8);
    const auto x = uniform({2, 4, 16, 16}, rng, 0, 1), target = uniform({2, 12}, rng, 0, 1);
    auto loss = [&](Tape<double>& t) {
      auto d = sub(gen.forward(t, t.constant(x)), t.constant(target));
      return mean(mul(d, d));
    };
    g.params("pose generator", loss, gen.parameters(), tol, 1e-4);
  }
  {
    Rng data(10);
    const auto clip = random_clip(2, 16, 3, data);
    Rng init(11);
    BiStreamNet<double> net(small_net(), init);
    net.set_gamma(0.7);
    g.params("bi-stream graph", [&](Tape<double>& t) { return cross_entropy(net.logits(t, clip), 3); },
             net.parameters(), 1e-3, 1e-4);
  }
  const double secs = seconds_since(t0);
  o.check(secs < 120.0, "runtime");
  o.detail << g.checks << " checks, worst rel err " << g.worst << " (" << g.worst_name << "), " << secs << " s";
  return o;
}

// ---------------------------------------------------------------- 2

Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, std::size_t stride,
                          std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor<double> y({B, O, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t oc = 0; oc < O; ++oc)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += w[((oc * C + c) * K + ki) * K + kj] * x[((n * C + c) * H + iy) * W + ix];
              }
          y[((n * O + oc) * Ho + oy) * Wo + ox] = acc + b[oc];
        }
  return y;
}

// eighths in [-2,2]: every product and partial sum is exact
Tensor<double> dyadic(Shape s, Rng& rng) {
  std::uniform_int_distribution<int> d(-16, 16);
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = d(rng) / 8.0;
  return t;
}

std::vector<double> project(const Linear<double>& l, const std::vector<double>& x) {
  std::vector<double> y(l.out_features());
  for (std::size_t o = 0; o < y.size(); ++o) {
    double acc = l.bias.value[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += l.weight.value[o * x.size() + i] * x[i];
    y[o] = acc;
  }
  return y;
}

Tensor<double> literal_nonlocal(const NonLocalBlock<double>& blk, const Tensor<double>& x) {
  const std::size_t T = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3), N = T * HW;
  auto vec_at = [&](std::size_t p) {
    std::vector<double> v(C);
    for (std::size_t c = 0; c < C; ++c) v[c] = x[((p / HW) * C + c) * HW + p % HW];
    return v;
  };
  Tensor<double> out = x;
  for (std::size_t i = 0; i < N; ++i) {
    const auto ti = project(blk.theta, vec_at(i));
    std::vector<double> y(C / 2, 0.0);
    double norm = 0;
    for (std::size_t j = 0; j < N; ++j) {
      const auto pj = project(blk.phi, vec_at(j)), gj = project(blk.g, vec_at(j));
      double dot = 0;
      for (std::size_t k = 0; k < C / 2; ++k) dot += ti[k] * pj[k];
      const double f = std::exp(dot);
      norm += f;
      for (std::size_t k = 0; k < C / 2; ++k) y[k] += f * gj[k];
    }
    for (auto& v : y) v /= norm;
    const auto z = project(blk.w_z, y);
    for (std::size_t c = 0; c < C; ++c) out[((i / HW) * C + c) * HW + i % HW] += blk.gamma * z[c];
  }
  return out;
}

std::vector<int> fuse_oracle(const std::vector<ScoredWindow>& ws, std::size_t t) {
  std::vector<int> out(t);
  for (std::size_t f = 0; f < t; ++f) {
    std::vector<const ScoredWindow*> covering;
    for (const auto& w : ws)
      if (w.start <= f && f < w.end) covering.push_back(&w);
    int best = 0;
    double best_v = -1;
    for (std::size_t c = 0; c < covering.front()->probs.size(); ++c) {
      double v = 0;
      for (const auto* w : covering) v += w->probs[c];
      v /= static_cast<double>(covering.size());
      if (v > best_v) best_v = v, best = static_cast<int>(c);
    }
    out[f] = best;
  }
  return out;
}

std::vector<double> random_simplex(std::size_t k, Rng& rng) {
  std::uniform_real_distribution<double> d(0.01, 1.0);
  std::vector<double> p(k);
  for (auto& v : p) v = d(rng);
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= s;
  return p;
}

// Disjoint segments in [0,frames), optionally with gaps between them.
std::vector<Segment> random_disjoint(Rng& rng, std::size_t max_segments, std::size_t frames, bool gaps) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_segments)(rng);
  std::set<std::size_t> cuts;
  std::uniform_int_distribution<std::size_t> pos(1, frames - 1);
  while (cuts.size() + 1 < 2 * n) cuts.insert(pos(rng));
  std::vector<std::size_t> b{0};
  b.insert(b.end(), cuts.begin(), cuts.end());
  b.push_back(frames);
  std::uniform_int_distribution<int> cls(0, 2);
  std::vector<Segment> out;
  if (gaps) {
    for (std::size_t i = 0; i + 1 < b.size(); i += 2) out.push_back({b[i], b[i + 1], cls(rng)});
  } else {
    // tiling: merge pairs of pieces
    for (std::size_t i = 0; i + 1 < b.size(); i += 2) out.push_back({b[i], b[std::min(i + 2, b.size() - 1)], cls(rng)});
  }
  return out;
}

std::vector<Segment> random_overlapping(Rng& rng, std::size_t max_segments, std::size_t frames) {
  std::uniform_int_distribution<std::size_t> nseg(0, max_segments), pos(0, frames);
  std::uniform_int_distribution<int> cls(0, 1);
  std::vector<Segment> out;
  for (std::size_t n = nseg(rng); out.size() < n;) {
    const std::size_t a = pos(rng), b = pos(rng);
    if (a != b) out.push_back({std::min(a, b), std::max(a, b), cls(rng)});
  }
  return out;
}

std::size_t optimal_matches(const std::vector<Segment>& p, const std::vector<Segment>& t, double thr, std::size_t i,
                            std::vector<bool>& used) {
  if (i == p.size()) return 0;
  std::size_t best = optimal_matches(p, t, thr, i + 1, used);
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (used[j] || p[i].label != t[j].label || segment_iou(p[i], t[j]) < thr) continue;
    used[j] = true;
    best = std::max(best, 1 + optimal_matches(p, t, thr, i + 1, used));
    used[j] = false;
  }
  return best;
}

bool distinct_ious(const std::vector<Segment>& p, const std::vector<Segment>& t) {
  std::vector<double> v;
  for (const auto& a : p)
    for (const auto& b : t)
      if (a.label == b.label && segment_iou(a, b) > 0) v.push_back(segment_iou(a, b));
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) == v.end();
}

Outcome criterion2() {
  Outcome o;
  Rng rng(202);

  int conv_cases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
      Conv2dLayer<double> conv("c", 3, 4, 3, stride, pad, rng);
      conv.weight.value = dyadic({4, 3, 3, 3}, rng);
      conv.bias.value = dyadic({4}, rng);
      const auto x = dyadic({2, 3, 7, 7}, rng);
      Tape<double> tape;
      const bool same = conv.forward(tape, tape.constant(x)).value() ==
                        naive_conv(x, conv.weight.value, conv.bias.value, stride, pad);
      o.check(same, "conv2d differs from naive loop");
      ++conv_cases;
    }
  }

  double nl_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    NonLocalBlock<double> blk("nl", trial % 2 ? 4 : 2, rng);
    blk.gamma = 0.3 + 0.1 * trial;
    const auto x = uniform({2, blk.channels(), 3, 2}, rng);
    Tape<double> tape;
    const auto got = blk.forward(tape, tape.constant(x)).value();
    const auto ref = literal_nonlocal(blk, x);
    for (std::size_t i = 0; i < got.size(); ++i) nl_err = std::max(nl_err, std::abs(got[i] - ref[i]));
  }
  o.check(nl_err < 1e-10, "non-local vs literal loop");

  std::uniform_int_distribution<std::size_t> len(1, 120), win(5, 40);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t t = len(rng), w = win(rng);
    const DetectorConfig cfg{w, std::uniform_int_distribution<std::size_t>(1, w)(rng)};
    const auto ws = slide_and_score(t, cfg, [&](std::size_t, std::size_t) { return random_simplex(6, rng); });
    if (fuse_labels(ws, t) != fuse_oracle(ws, t)) {
      o.check(false, "fuse_labels vs enumeration");
      break;
    }
  }

  // Disjoint segments (what detection emits): greedy is provably optimal at
  // IoU >= 0.5, checked here against the exhaustive matcher.
  std::size_t instances = 0, mismatches = 0;
  for (int i = 0; i < 6000; ++i) {
    const bool gaps = i % 2;
    const auto p = random_disjoint(rng, 6, 60, gaps), t = random_disjoint(rng, 6, 60, gaps);
    if (!distinct_ious(p, t)) continue;
    ++instances;
    for (double thr : {0.5, 0.7}) {
      std::vector<bool> used(t.size());
      if (f1_at_iou(p, t, thr).matches != optimal_matches(p, t, thr, 0, used)) ++mismatches;
    }
  }
  o.check(mismatches == 0, "greedy vs exhaustive");

  // reported only: overlapping predictions can defeat greedy matching
  std::size_t over = 0, gap = 0;
  for (int i = 0; i < 3000; ++i) {
    const auto p = random_overlapping(rng, 6, 30), t = random_overlapping(rng, 6, 30);
    if (!distinct_ious(p, t)) continue;
    std::vector<bool> used(t.size());
    gap += optimal_matches(p, t, 0.5, 0, used) - f1_at_iou(p, t, 0.5).matches;
    ++over;
  }
  o.detail << conv_cases << " conv cases exact, non-local max err " << nl_err << ", greedy exact on " << instances
           << " disjoint instances (overlapping-segment gap: " << gap << " matches over " << over << ")";
  return o;
}

// ---------------------------------------------------------------- 3

Outcome criterion3() {
  Outcome o;
  Rng rng(303);
  {
    Critic<double> critic({8}, Activation::tanh, rng);
    critic.layers.back().weight.value.fill(0.0);
    critic.layers.back().bias.value.fill(3.25);
    Tape<double> tape;
    const double loss = wgan_gp_loss(critic, tape, tape.constant(uniform({5, 12}, rng, 0, 1)),
                                     tape.constant(uniform({5, 12}, rng, 0, 1)), {0.1, 0.2, 0.3, 0.4, 0.5}, 10.0)
                            .value()
                            .item();
    o.check(loss == 10.0, "constant critic loss != lambda");
    o.detail << "constant critic loss " << loss << "; ";
  }
  {
    Critic<double> critic({}, Activation::tanh, rng);
    auto& w = critic.layers.front().weight.value;
    w.fill(0.0);
    for (std::size_t k : {0, 3, 7, 10}) w[k] = 0.5;
    const auto real = uniform({4, 12}, rng, 0, 1), fake = uniform({4, 12}, rng, 0, 1);
    const std::vector<double> eps{0.3, 0.9, 0.0, 1.0};
    Tape<double> a, b;
    const double with = wgan_gp_loss(critic, a, a.constant(real), a.constant(fake), eps, 10.0).value().item();
    const double without = wgan_gp_loss(critic, b, b.constant(real), b.constant(fake), eps, 0.0).value().item();
    o.check(with == without, "unit linear critic has a penalty");
    o.detail << "unit linear critic penalty " << with - without << "; ";
  }
  double worst = 0;
  for (auto act : {Activation::tanh, Activation::softplus}) {
    for (const std::vector<std::size_t>& hidden : {std::vector<std::size_t>{6}, std::vector<std::size_t>{7, 5}}) {
      Critic<double> critic(hidden, act, rng);
      const auto real = uniform({3, 12}, rng, 0, 1), fake = uniform({3, 12}, rng, 0, 1);
      const std::vector<double> eps{0.2, 0.55, 0.8};
      auto loss = [&](Tape<double>& t) {
        return wgan_gp_loss(critic, t, t.constant(real), t.constant(fake), eps, 10.0);
      };
      // the output bias cancels in D(fake) - D(real) and is absent from the
      // input gradient: exactly zero, checked absolutely
      auto params = critic.parameters();
      auto& out_bias = critic.layers.back().bias;
      std::erase(params, &out_bias);
      const auto r = grad_check_params<double>(loss, params, 1e-4, 1e-4);
      worst = std::max(worst, r.max_rel_error);
      o.check(r.pass, "penalty gradient " + r.worst_param);
      out_bias.grad.fill(0.0);
      Tape<double> tape;
      tape.backward(loss(tape));
      o.check(std::abs(out_bias.grad[0]) < 1e-12, "output bias gradient not zero");
    }
  }
  o.detail << "parameter gradients worst rel err " << worst;
  return o;
}

// ---------------------------------------------------------------- 4

Outcome criterion4() {
  Outcome o;
  Rng rng(404);
  NonLocalBlock<float> blk("nl", 8, rng);
  blk.gamma = 0.0f;
  std::normal_distribution<float> n(0.0f, 3.0f);
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    Tensor<float> x({2 + static_cast<std::size_t>(i % 3), 8, 4, 4});
    for (auto& v : x.storage()) v = n(rng);
    Tape<float> tape;
    identical += blk.forward(tape, tape.constant(x)).value() == x;
  }
  o.check(identical == 100, "gamma=0 non-local changed its input");

  int passthrough = 0;
  for (int i = 0; i < 20; ++i) {
    TemporalAttention<double> att("att", 6, rng);
    const auto h = uniform({1, 6}, rng, -5, 5);
    Tape<double> tape;
    Var<double> w;
    const auto out = att.attend(tape, tape.constant(h), &w).value();
    bool same = w.value()[0] == 1.0;
    for (std::size_t k = 0; k < 6; ++k) same = same && out[k] == h[k];
    passthrough += same;
  }
  o.check(passthrough == 20, "T=1 temporal attention not a passthrough");

  int idempotent = 0;
  SynthConfig sc;
  sc.height = sc.width = 16;
  for (std::size_t t = 1; t <= 40; ++t) {
    std::vector<std::size_t> all(t);
    std::iota(all.begin(), all.end(), std::size_t{0});
    bool ok = subsample_indices(t) == all;
    sc.min_length = sc.max_length = t;
    const auto s = gen_sequence(static_cast<int>(t % 6), sc, t);
    const auto once = subsample_sequence(s), twice = subsample_sequence(once);
    ok = ok && once.frames == s.frames && twice.frames == once.frames && twice.joint_map == once.joint_map &&
         twice.object_map == once.object_map;
    idempotent += ok;
  }
  o.check(idempotent == 40, "subsampling not idempotent for T <= 40");
  o.detail << identical << "/100 bit-identical, " << passthrough << "/20 passthrough, " << idempotent
           << "/40 lengths idempotent";
  return o;
}

// ---------------------------------------------------------------- 5-7

struct RecognitionRun {
  double accuracy = 0;
  double seconds = 0;
};

struct Shared {
  std::vector<VideoSample> train, test;
  std::optional<BiStreamNet<float>> attention_net;
  std::map<StreamVariant, RecognitionRun> runs;

  void ensure_data() {
    if (!train.empty()) return;
    SynthConfig sc;
    sc.seed = 7;
    train = gen_split(sc, 300, kTrainSplit);
    test = gen_split(sc, 60, kTestSplit);
  }

  RecognitionRun& run(StreamVariant v) {
    if (auto it = runs.find(v); it != runs.end()) return it->second;
    ensure_data();
    const auto t0 = Clock::now();
    Rng rng(7);
    BiStreamNet<float> net(NetConfig::for_variant(v), rng);
    train_recognizer(net, train, TrainConfig{});
    RecognitionRun r{recognition_accuracy(net, test), seconds_since(t0)};
    std::printf("  %-14s accuracy %.3f  (%.0f s)\n", variant_name(v), r.accuracy, r.seconds);
    std::fflush(stdout);
    if (v == StreamVariant::bi_stream_att) attention_net.emplace(std::move(net));
    return runs[v] = r;
  }
};

Outcome criterion5(Shared& sh) {
  Outcome o;
  const auto& r = sh.run(StreamVariant::bi_stream_att);
  o.check(r.accuracy >= 0.90, "accuracy");
  o.check(r.seconds < 15 * 60, "runtime");
  o.detail << "bi_stream_att held-out accuracy " << r.accuracy << " after 20 epochs in " << r.seconds << " s";
  return o;
}

Outcome criterion6(Shared& sh) {
  Outcome o;
  std::map<StreamVariant, double> acc;
  for (auto v : all_variants()) acc[v] = sh.run(v).accuracy;
  constexpr double tol = 0.02;
  const double att = acc[StreamVariant::bi_stream_att], bi = acc[StreamVariant::bi_stream];
  o.check(att >= bi - tol, "attention below bi-stream");
  for (auto v : {StreamVariant::raw_frame, StreamVariant::pose_stream, StreamVariant::object_map})
    o.check(bi >= acc[v] - tol, std::string("bi-stream below ") + variant_name(v));
  for (auto v : all_variants())
    if (v != StreamVariant::object_map) o.check(acc[StreamVariant::object_map] <= acc[v], std::string("object_map above ") + variant_name(v));
  for (auto v : all_variants()) o.detail << variant_name(v) << " " << acc[v] << " ";
  return o;
}

Outcome criterion7(Shared& sh) {
  Outcome o;
  sh.run(StreamVariant::bi_stream_att);
  auto& net = *sh.attention_net;
  SynthConfig sc;
  sc.seed = 7;
  const auto videos = gen_untrimmed_set(sc, UntrimmedSetConfig{}, kVideoSplit);
  const auto t0 = Clock::now();
  std::vector<WindowCache> caches;
  caches.reserve(videos.size());
  std::vector<GridVideo> grid;
  for (const auto& v : videos) {
    caches.emplace_back(net_classifier(net, v.video));
    grid.push_back({v.video.length(), std::ref(caches.back()), v.segments});
  }
  std::vector<std::size_t> windows(36);
  std::iota(windows.begin(), windows.end(), std::size_t{5});
  const auto result = grid_search(grid, windows, 0.5, kBackground);
  const double grid_secs = seconds_since(t0);

  // re-evaluation with fresh, uncached classifiers
  std::vector<GridVideo> fresh;
  for (const auto& v : videos) fresh.push_back({v.video.length(), net_classifier(net, v.video), v.segments});
  const double again = evaluate_config(fresh, result.best, 0.5, kBackground);

  o.check(result.best_f1 >= 0.80, "F1@0.5 below 0.80");
  o.check(again == result.best_f1, "re-evaluation differs");
  o.detail << "best window " << result.best.window << " stride " << result.best.stride << " F1@0.5 "
           << result.best_f1 << ", re-evaluated " << again << " (" << result.surface.size() << " configs, "
           << grid_secs << " s)";
  return o;
}

// ---------------------------------------------------------------- 8

Outcome criterion8() {
  Outcome o;
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.seed = 7;
  auto train = gen_heatmap_set(sc, HeatmapNoise{}, 20000, kHeatmapSplit);
  const auto test = gen_heatmap_set(sc, HeatmapNoise{}, 200, kTestSplit + 100);
  Rng rng(7);
  PoseGenerator<float> gen(sc.height, sc.width, rng);
  GanConfig cfg;
  cfg.epochs = 2;
  Critic<float> critic(cfg.critic_hidden, Activation::tanh, rng);
  fit_pose_gan(gen, critic, train, cfg);
  train.clear();
  const double ours = generator_error_px(gen, test), baseline = argmax_error_px(test);
  o.check(ours < baseline, "generator not better than argmax");
  o.detail << "generator " << ours << " px vs argmax " << baseline << " px over " << test.size() << " samples ("
           << seconds_since(t0) << " s)";
  return o;
}

// ---------------------------------------------------------------- 9

Outcome criterion9() {
  Outcome o;
  SynthConfig sc;
  sc.seed = 7;
  sc.height = sc.width = 16;
  const auto videos = gen_untrimmed_set(sc, UntrimmedSetConfig{}, kVideoSplit);
  // fixed detections: truth labels with every frame flipped with probability 0.1
  Rng rng(909);
  std::vector<std::vector<Segment>> pred, truth;
  for (const auto& v : videos) {
    std::vector<int> labels(v.video.length());
    for (const auto& s : v.segments)
      for (auto f = s.start; f < s.end; ++f) labels[f] = s.label;
    std::bernoulli_distribution flip(0.1);
    std::uniform_int_distribution<int> cls(0, 5);
    for (auto& l : labels)
      if (flip(rng)) l = cls(rng);
    pred.push_back(extract_segments(labels));
    truth.push_back(v.segments);
  }
  double prev = 2.0;
  std::ostringstream sweep;
  bool monotone = true;
  for (int k = 1; k <= 9; ++k) {
    const double f1 = f1_at_iou_pooled(pred, truth, k / 10.0, kBackground).f1;
    monotone = monotone && f1 <= prev;
    prev = f1;
    sweep << (k > 1 ? "," : "") << f1;
  }
  o.check(monotone, "F1 increased with the threshold");

  std::vector<std::vector<Segment>> scripted;
  const auto trans = natural_transitions();
  for (int i = 0; i < 50; ++i) {
    const auto script = sample_script(8, trans, 6, 5, 20, rng);
    std::vector<Segment> segs;
    std::size_t start = 0;
    for (const auto& [cls, d] : script.entries) {
      segs.push_back({start, start + d, cls});
      start += d;
    }
    scripted.push_back(segs);
  }
  const auto m = transition_matrix(scripted, 6);
  double worst = 0;
  for (std::size_t a = 0; a < 6; ++a) {
    const double row = std::accumulate(m.begin() + static_cast<std::ptrdiff_t>(a * 6),
                                       m.begin() + static_cast<std::ptrdiff_t>(a * 6 + 6), 0.0);
    if (row > 0) worst = std::max(worst, std::abs(row - 100.0));
  }
  o.check(worst <= 0.1, "transition row sum");
  o.detail << "F1 sweep 0.1..0.9: " << sweep.str() << "; worst row-sum deviation " << worst;
  return o;
}

}  // namespace
}  // namespace fgd

int main(int argc, char** argv) {
  using namespace fgd;
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  if (wanted.empty())
    for (int i = 1; i <= 9; ++i) wanted.insert(i);

  Shared shared;
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, [&] { return criterion5(shared); }},
      {6, [&] { return criterion6(shared); }},
      {7, [&] { return criterion7(shared); }},
      {8, criterion8},
      {9, criterion9},
  };
  int failures = 0;
  for (int id : wanted) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += !o.pass;
    std::printf("CRITERION %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
