#include "fgd/posegan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fgd/io.hpp"

namespace fgd {

Tensor<float> HeatmapSample::stacked() const {
  const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
  Tensor<float> out({4, h, w});
  std::copy(image.data().begin(), image.data().end(), out.storage().begin());
  std::copy(heatmap.data().begin(), heatmap.data().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(3 * hw));
  return out;
}

Tensor<float> synth_heatmap(const JointSet& truth, std::size_t h, std::size_t w, const HeatmapNoise& noise,
                            std::uint64_t seed) {
  validate(truth);
  if (noise.sigma_px <= 0) throw ContractError("synth_heatmap: sigma must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> jit(0.0, 1.0);
  std::vector<std::pair<double, double>> centers;  // pixel units
  for (std::size_t j = 0; j < kJoints; ++j) {
    const bool drop = uni(rng) < noise.p_drop;
    const double dx = jit(rng) * noise.jitter_px, dy = jit(rng) * noise.jitter_px;
    if (drop) continue;
    // pixel centre of the joint's pixel, so the noiseless bump peaks there
    centers.emplace_back(static_cast<double>(to_pixel(truth[2 * j], w)) + 0.5 + dx,
                         static_cast<double>(to_pixel(truth[2 * j + 1], h)) + 0.5 + dy);
  }
  for (std::size_t k = 0; k < noise.spurious; ++k)
    centers.emplace_back(uni(rng) * static_cast<double>(w), uni(rng) * static_cast<double>(h));
  Tensor<float> map({1, h, w});
  const double inv = 1.0 / (2.0 * noise.sigma_px * noise.sigma_px);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double y = static_cast<double>(i) + 0.5, x = static_cast<double>(j) + 0.5;
      double v = 0;
      for (const auto& [cx, cy] : centers) v += std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
      map[i * w + j] = static_cast<float>(std::min(1.0, v));
    }
  return map;
}

HeatmapSample make_heatmap_sample(const SynthFrame& frame, const HeatmapNoise& noise, std::uint64_t seed) {
  return {frame.image, synth_heatmap(frame.joints, frame.image.dim(1), frame.image.dim(2), noise, seed), frame.joints};
}

std::vector<HeatmapSample> gen_heatmap_set(const SynthConfig& cfg, const HeatmapNoise& noise, std::size_t n,
                                           std::uint64_t split) {
  std::vector<HeatmapSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = derive_seed(cfg.seed, split, i);
    out.push_back(make_heatmap_sample(gen_frame(cfg, seed), noise, seed ^ 0xa5a5a5a5ULL));
  }
  return out;
}

void save_heatmap_set(const std::filesystem::path& dir, const std::vector<HeatmapSample>& set) {
  if (set.empty()) throw ContractError("save_heatmap_set: empty set");
  const std::size_t n = set.size(), h = set.front().image.dim(1), w = set.front().image.dim(2), hw = h * w;
  Tensor<float> images({n, 3, h, w}), maps({n, 1, h, w});
  std::ostringstream csv;
  csv.precision(9);
  csv << "id";
  for (std::size_t j = 0; j < kJoints; ++j) csv << ",x" << j << ",y" << j;
  csv << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = set[i];
    if (s.image.shape() != Shape{3, h, w} || s.heatmap.shape() != Shape{1, h, w}) {
      throw ContractError("save_heatmap_set: samples differ in size");
    }
    std::copy(s.image.data().begin(), s.image.data().end(), images.storage().begin() + static_cast<std::ptrdiff_t>(i * 3 * hw));
    std::copy(s.heatmap.data().begin(), s.heatmap.data().end(), maps.storage().begin() + static_cast<std::ptrdiff_t>(i * hw));
    csv << i;
    for (float v : s.truth) csv << ',' << v;
    csv << '\n';
  }
  std::filesystem::create_directories(dir);
  write_fgt(dir / "images.fgt", images);
  write_fgt(dir / "heatmaps.fgt", maps);
  write_file_atomic(dir / "truth.csv", csv.str());
}

std::vector<HeatmapSample> load_heatmap_set(const std::filesystem::path& dir) {
  const Tensor<float> images = read_fgt(dir / "images.fgt"), maps = read_fgt(dir / "heatmaps.fgt");
  const std::string origin = (dir / "truth.csv").string();
  if (images.rank() != 4 || images.dim(1) != 3 || maps.rank() != 4 || maps.dim(1) != 1 || maps.dim(0) != images.dim(0) ||
      maps.dim(2) != images.dim(2) || maps.dim(3) != images.dim(3)) {
    throw IoError(dir.string() + ": image / heatmap tensors do not match");
  }
  const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3), hw = h * w;
  std::istringstream in(read_file(dir / "truth.csv"));
  std::string line;
  std::getline(in, line);  // header
  std::vector<HeatmapSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw IoError(origin + ": expected " + std::to_string(n) + " rows");
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    if (std::stoul(cell) != i) throw IoError(origin + ": row " + std::to_string(i) + " has id " + cell);
    auto& s = out[i];
    for (auto& v : s.truth) {
      if (!std::getline(row, cell, ',')) throw IoError(origin + ": row " + std::to_string(i) + " has fewer than 12 values");
      v = std::stof(cell);
    }
    validate(s.truth);
    s.image = Tensor<float>({3, h, w});
    s.heatmap = Tensor<float>({1, h, w});
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * 3 * hw), 3 * hw, s.image.storage().begin());
    std::copy_n(maps.data().begin() + static_cast<std::ptrdiff_t>(i * hw), hw, s.heatmap.storage().begin());
  }
  return out;
}

JointSet argmax_decode(const Tensor<float>& heatmap, const JointSet& truth, double radius_px) {
  if (heatmap.rank() != 3 || heatmap.dim(0) != 1) throw ContractError("argmax_decode: expected [1,H,W] heatmap");
  const std::size_t h = heatmap.dim(1), w = heatmap.dim(2);
  const long r = static_cast<long>(std::floor(radius_px));
  JointSet out{};
  for (std::size_t j = 0; j < kJoints; ++j) {
    const long cx = static_cast<long>(to_pixel(truth[2 * j], w)), cy = static_cast<long>(to_pixel(truth[2 * j + 1], h));
    float best = -1.0f;
    long bx = cx, by = cy, bd = 0;
    for (long y = std::max(0L, cy - r); y <= std::min<long>(static_cast<long>(h) - 1, cy + r); ++y)
      for (long x = std::max(0L, cx - r); x <= std::min<long>(static_cast<long>(w) - 1, cx + r); ++x) {
        const long d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        if (d > r * r) continue;
        const float v = heatmap[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
        // clipped overlaps form plateaus at 1; prefer the plateau pixel nearest the centre
        if (v > best || (v == best && d < bd)) best = v, bx = x, by = y, bd = d;
      }
    out[2 * j] = static_cast<float>((static_cast<double>(bx) + 0.5) / static_cast<double>(w));
    out[2 * j + 1] = static_cast<float>((static_cast<double>(by) + 0.5) / static_cast<double>(h));
  }
  return out;
}

double joint_error_px(const JointSet& a, const JointSet& b, std::size_t h, std::size_t w) {
  double total = 0;
  for (std::size_t j = 0; j < kJoints; ++j) {
    const double dx = (a[2 * j] - b[2 * j]) * static_cast<double>(w), dy = (a[2 * j + 1] - b[2 * j + 1]) * static_cast<double>(h);
    total += std::sqrt(dx * dx + dy * dy);
  }
  return total / static_cast<double>(kJoints);
}

// ---- critic ----

template <typename T>
Critic<T>::Critic(std::vector<std::size_t> hidden, Activation act, Rng& rng) : activation(act) {
  if (act == Activation::relu) throw ContractError("critic: relu has no smooth input gradient; use tanh or softplus");
  std::size_t in = 12;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.emplace_back("critic.fc" + std::to_string(i + 1), in, hidden[i], rng);
    in = hidden[i];
  }
  layers.emplace_back("critic.out", in, 1, rng);
}

template <typename T>
void Critic<T>::collect(ParamList<T>& out) {
  for (auto& l : layers) l.collect(out);
}

template <typename T>
ParamList<T> Critic<T>::parameters() {
  ParamList<T> p;
  collect(p);
  return p;
}

namespace {

template <typename T>
Var<T> activate(Activation a, const Var<T>& x) {
  switch (a) {
    case Activation::tanh: return tanh(x);
    case Activation::softplus: return softplus(x);
    case Activation::relu: break;
  }
  throw ContractError("critic: unsupported activation");
}

template <typename T>
Var<T> activation_derivative(Activation a, const Var<T>& pre) {
  switch (a) {
    case Activation::tanh: {
      Var<T> t = tanh(pre);
      return add_scalar(scale(mul(t, t), T{-1}), T{1});
    }
    case Activation::softplus: return sigmoid(pre);
    case Activation::relu: break;
  }
  throw ContractError("critic: unsupported activation for the input gradient");
}

template <typename T>
void require_joint_batch(const Var<T>& q, const char* what) {
  if (q.shape().size() != 2 || q.shape()[1] != 12) {
    throw ContractError(std::string(what) + ": expected joint batch [B,12], got " + to_string(q.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> Critic<T>::forward(Tape<T>& tape, const Var<T>& q) {
  require_joint_batch(q, "critic");
  Var<T> h = q;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) h = activate(activation, layers[i].forward(tape, h));
  return layers.back().forward(tape, h);
}

template <typename T>
Var<T> Critic<T>::input_gradient(Tape<T>& tape, const Var<T>& q) {
  require_joint_batch(q, "critic input gradient");
  if (activation == Activation::relu) throw ContractError("critic: unsupported activation for the input gradient");
  const std::size_t b = q.shape()[0];
  std::vector<Var<T>> pre;
  Var<T> h = q;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    pre.push_back(layers[i].forward(tape, h));
    h = activate(activation, pre.back());
  }
  // G = ones[B,1] W_L, then G <- (G * act'(a_l)) W_l down to the input
  Var<T> g = matmul(tape.constant(Tensor<T>({b, 1}, T{1})), tape.param(layers.back().weight));
  for (std::size_t i = pre.size(); i-- > 0;) {
    g = matmul(mul(g, activation_derivative(activation, pre[i])), tape.param(layers[i].weight));
  }
  return g;
}

template <typename T>
Var<T> wgan_gp_loss(Critic<T>& critic, Tape<T>& tape, const Var<T>& real, const Var<T>& fake, const std::vector<T>& eps,
                    double lambda_gp) {
  require_joint_batch(real, "wgan_gp_loss real");
  require_joint_batch(fake, "wgan_gp_loss fake");
  const std::size_t b = real.shape()[0];
  if (fake.shape()[0] != b || b == 0) throw ContractError("wgan_gp_loss: real and fake batches must have equal size >= 1");
  if (eps.size() != b) throw ContractError("wgan_gp_loss: need one interpolation weight per pair");
  if (lambda_gp < 0) throw ContractError("wgan_gp_loss: lambda must be >= 0");
  Tensor<T> e({b, 12}), one_minus({b, 12});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < 12; ++k) {
      e[i * 12 + k] = eps[i];
      one_minus[i * 12 + k] = T{1} - eps[i];
    }
  Var<T> d_real = critic.forward(tape, real);
  Var<T> d_fake = critic.forward(tape, fake);
  for (const auto& d : {d_real, d_fake})
    if (!d.value().all_finite()) throw NumericError("wgan_gp_loss: critic produced a non-finite score");
  Var<T> x_hat = add(mul(tape.constant(e), real), mul(tape.constant(one_minus), fake));
  Var<T> g = critic.input_gradient(tape, x_hat);
  Var<T> norms = sqrt(sum_last(mul(g, g)));
  Var<T> dev = add_scalar(norms, T{-1});
  Var<T> penalty = mean(mul(dev, dev));
  return add(sub(mean(d_fake), mean(d_real)), scale(penalty, static_cast<T>(lambda_gp)));
}

// ---- generator ----

template <typename T>
PoseGenerator<T>::PoseGenerator(std::size_t height, std::size_t width, Rng& rng, std::size_t hidden)
    : height_(height), width_(width) {
  if (height % 8 || width % 8 || height < 8 || width < 8) {
    throw ContractError("pose generator: frame size must be a positive multiple of 8");
  }
  convs.emplace_back("gen.conv1", 4, 8, 3, 2, 1, rng);
  convs.emplace_back("gen.conv2", 8, 16, 3, 2, 1, rng);
  convs.emplace_back("gen.conv3", 16, 32, 3, 2, 1, rng);
  fc1 = Linear<T>("gen.fc1", 32 * (height / 8) * (width / 8), hidden, rng);
  fc2 = Linear<T>("gen.fc2", hidden, 12, rng);
}

template <typename T>
void PoseGenerator<T>::collect(ParamList<T>& out) {
  for (auto& c : convs) c.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

template <typename T>
ParamList<T> PoseGenerator<T>::parameters() {
  ParamList<T> p;
  collect(p);
  return p;
}

template <typename T>
Var<T> PoseGenerator<T>::forward(Tape<T>& tape, const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 4) throw ContractError("pose generator: expected [B,4,H,W] input, got " + to_string(s));
  if (s[2] != height_ || s[3] != width_) {
    throw ContractError("pose generator: built for " + std::to_string(height_) + "x" + std::to_string(width_) +
                        " frames, got " + to_string(s));
  }
  Var<T> h = x;
  for (auto& c : convs) h = tanh(c.forward(tape, h));
  h = reshape(h, {s[0], h.size() / s[0]});
  return sigmoid(fc2.forward(tape, tanh(fc1.forward(tape, h))));
}

template <typename T>
JointSet PoseGenerator<T>::regress(const Tensor<float>& stacked) {
  if (stacked.rank() != 3 || stacked.dim(0) != 4) {
    throw ContractError("regress_joints: expected a 4-channel [4,H,W] input, got " + to_string(stacked.shape()));
  }
  Tape<T> tape;
  Var<T> out = forward(tape, tape.constant(stacked.template cast<T>().reshaped({1, 4, stacked.dim(1), stacked.dim(2)})));
  JointSet q{};
  for (std::size_t k = 0; k < 12; ++k) q[k] = static_cast<float>(out.value()[k]);
  return q;
}

void GanConfig::validate() const {
  if (n_critic < 1) throw ContractError("gan config: n_critic must be >= 1");
  if (lambda_gp < 0) throw ContractError("gan config: lambda_gp must be >= 0");
  if (batch < 1) throw ContractError("gan config: batch must be >= 1");
  if (!(pretrain_fraction >= 0 && pretrain_fraction <= 1)) throw ContractError("gan config: pretrain fraction outside [0,1]");
  if (lr <= 0 || pretrain_lr <= 0) throw ContractError("gan config: learning rates must be positive");
}

namespace {

template <typename T>
Tensor<T> stack_inputs(const std::vector<const HeatmapSample*>& batch) {
  const std::size_t h = batch.front()->image.dim(1), w = batch.front()->image.dim(2), hw = h * w;
  Tensor<T> x({batch.size(), 4, h, w});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    T* dst = x.storage().data() + i * 4 * hw;
    std::copy(batch[i]->image.data().begin(), batch[i]->image.data().end(), dst);
    std::copy(batch[i]->heatmap.data().begin(), batch[i]->heatmap.data().end(), dst + 3 * hw);
  }
  return x;
}

template <typename T>
Tensor<T> stack_truth(const std::vector<const HeatmapSample*>& batch) {
  Tensor<T> q({batch.size(), 12});
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t k = 0; k < 12; ++k) q[i * 12 + k] = static_cast<T>(batch[i]->truth[k]);
  return q;
}

}  // namespace

template <typename T>
double pretrain_generator(PoseGenerator<T>& gen, const std::vector<const HeatmapSample*>& subset, std::size_t epochs,
                          double lr, std::size_t batch, std::uint64_t seed) {
  if (subset.empty()) throw ContractError("pretrain_generator: empty labeled subset");
  if (batch < 1) throw ContractError("pretrain_generator: batch must be >= 1");
  AdamConfig ac;
  ac.lr = lr;
  Adam<T> opt(gen.parameters(), ac);
  Rng rng(seed);
  std::vector<const HeatmapSample*> order = subset;
  double last = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::vector<const HeatmapSample*> mb(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b0 + batch)));
      opt.zero_grad();
      Tape<T> tape;
      Var<T> diff = sub(gen.forward(tape, tape.constant(stack_inputs<T>(mb))), tape.constant(stack_truth<T>(mb)));
      Var<T> loss = mean(mul(diff, diff));
      total += static_cast<double>(loss.value().item()) * static_cast<double>(mb.size());
      tape.backward(loss);
      opt.step();
    }
    last = total / static_cast<double>(order.size());
  }
  return last;
}

namespace {

template <typename T>
std::vector<GanEpochReport> run_gan(PoseGenerator<T>& gen, Critic<T>& critic, const std::vector<HeatmapSample>& data,
                                    const GanConfig& cfg, const std::function<void(const GanEpochReport&)>& on_epoch,
                                    const std::function<void(GanEpochReport&)>& after_epoch) {
  cfg.validate();
  if (data.empty()) throw ContractError("train_gan: empty dataset");
  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.beta1 = cfg.beta1;
  ac.beta2 = cfg.beta2;
  Adam<T> gopt(gen.parameters(), ac), copt(critic.parameters(), ac);
  Rng rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto draw = [&](std::size_t n) {
    std::vector<const HeatmapSample*> b(n);
    for (auto& p : b) p = &data[pick(rng)];
    return b;
  };
  const std::size_t bsz = std::min(cfg.batch, data.size());
  const std::size_t steps = std::max<std::size_t>(1, data.size() / bsz);
  std::vector<GanEpochReport> reports;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double closs = 0, gloss = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      for (std::size_t k = 0; k < cfg.n_critic; ++k) {
        // real joint vectors are drawn independently of the generator's images
        const auto real_b = draw(bsz), fake_b = draw(bsz);
        Tensor<T> fake_q;
        {
          Tape<T> gt;
          fake_q = gen.forward(gt, gt.constant(stack_inputs<T>(fake_b))).value();
        }
        std::vector<T> eps(bsz);
        for (auto& e : eps) e = static_cast<T>(uni(rng));
        copt.zero_grad();
        Tape<T> tape;
        Var<T> loss = wgan_gp_loss(critic, tape, tape.constant(stack_truth<T>(real_b)), tape.constant(fake_q), eps,
                                   cfg.lambda_gp);
        const double l = static_cast<double>(loss.value().item());
        if (!std::isfinite(l) || std::abs(l) > 1e6) {
          throw NumericError("train_gan: critic loss diverged (" + std::to_string(l) + ") at epoch " + std::to_string(epoch));
        }
        closs += l;
        tape.backward(loss);
        copt.step();
      }
      gopt.zero_grad();
      Tape<T> tape;
      Var<T> loss = scale(mean(critic.forward(tape, gen.forward(tape, tape.constant(stack_inputs<T>(draw(bsz)))))), T{-1});
      gloss += static_cast<double>(loss.value().item());
      tape.backward(loss);
      gopt.step();
      copt.zero_grad();  // the generator pass also filled critic gradients
    }
    GanEpochReport r{epoch, closs / static_cast<double>(steps * cfg.n_critic), gloss / static_cast<double>(steps)};
    if (after_epoch) after_epoch(r);
    reports.push_back(r);
    if (on_epoch) on_epoch(r);
  }
  return reports;
}

template <typename T>
std::vector<Tensor<T>> snapshot(const ParamList<T>& params) {
  std::vector<Tensor<T>> out;
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

template <typename T>
void restore(const ParamList<T>& params, const std::vector<Tensor<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

template <typename T>
std::vector<GanEpochReport> train_gan(PoseGenerator<T>& gen, Critic<T>& critic, const std::vector<HeatmapSample>& data,
                                      const GanConfig& cfg, const std::function<void(const GanEpochReport&)>& on_epoch) {
  return run_gan(gen, critic, data, cfg, on_epoch, {});
}

template <typename T>
std::vector<GanEpochReport> fit_pose_gan(PoseGenerator<T>& gen, Critic<T>& critic, const std::vector<HeatmapSample>& data,
                                         const GanConfig& cfg, const std::function<void(const GanEpochReport&)>& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ContractError("fit_pose_gan: empty dataset");
  if (cfg.pretrain_fraction <= 0) return train_gan(gen, critic, data, cfg, on_epoch);
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.pretrain_fraction * static_cast<double>(data.size()))));
  std::vector<const HeatmapSample*> subset;
  for (std::size_t i = 0; i < n; ++i) subset.push_back(&data[i]);
  pretrain_generator(gen, subset, cfg.pretrain_epochs, cfg.pretrain_lr, cfg.batch, cfg.seed);

  const ParamList<T> params = gen.parameters();
  double best = generator_error_px(gen, subset);
  auto kept = snapshot(params);
  auto reports = run_gan(gen, critic, data, cfg, on_epoch, [&](GanEpochReport& r) {
    r.labeled_error_px = generator_error_px(gen, subset);
    if (r.labeled_error_px < best) {
      best = r.labeled_error_px;
      kept = snapshot(params);
    }
  });
  restore(params, kept);
  return reports;
}

template <typename T>
double generator_error_px(PoseGenerator<T>& gen, const std::vector<const HeatmapSample*>& data) {
  if (data.empty()) throw ContractError("generator_error_px: empty dataset");
  double total = 0;
  for (const auto* s : data) total += joint_error_px(gen.regress(s->stacked()), s->truth, gen.height(), gen.width());
  return total / static_cast<double>(data.size());
}

double generator_error_px(PoseGenerator<float>& gen, const std::vector<HeatmapSample>& data) {
  std::vector<const HeatmapSample*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  return generator_error_px(gen, ptrs);
}

double argmax_error_px(const std::vector<HeatmapSample>& data, double radius_px) {
  if (data.empty()) throw ContractError("argmax_error_px: empty dataset");
  double total = 0;
  for (const auto& s : data) {
    total += joint_error_px(argmax_decode(s.heatmap, s.truth, radius_px), s.truth, s.heatmap.dim(1), s.heatmap.dim(2));
  }
  return total / static_cast<double>(data.size());
}

void save_generator(const std::filesystem::path& dir, PoseGenerator<float>& gen) {
  save_checkpoint(dir, gen.parameters());
  write_file_atomic(dir / "generator.txt", format_key_values({{"height", std::to_string(gen.height())},
                                                              {"width", std::to_string(gen.width())},
                                                              {"hidden", std::to_string(gen.fc1.out_features())}}));
}

PoseGenerator<float> load_generator(const std::filesystem::path& dir) {
  const auto kv = parse_key_values(read_file(dir / "generator.txt"), (dir / "generator.txt").string());
  auto get = [&](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw IoError((dir / "generator.txt").string() + ": missing key " + k);
    return std::stoul(it->second);
  };
  Rng rng(0);
  PoseGenerator<float> gen(get("height"), get("width"), rng, get("hidden"));
  load_checkpoint(dir, gen.parameters());
  return gen;
}

VideoSample refine_joint_maps(PoseGenerator<float>& gen, const VideoSample& video, const HeatmapNoise& noise,
                              double radius_px, std::uint64_t seed) {
  if (!video.joints) throw ContractError("refine_joint_maps: video has no joint annotations to derive heatmaps from");
  VideoSample out = video;
  const std::size_t h = video.height(), w = video.width(), hw = h * w;
  for (std::size_t t = 0; t < video.length(); ++t) {
    JointSet truth;
    std::copy_n(video.joints->data().begin() + static_cast<std::ptrdiff_t>(t * 12), 12, truth.begin());
    HeatmapSample s;
    s.image = Tensor<float>({3, h, w});
    std::copy_n(video.frames.data().begin() + static_cast<std::ptrdiff_t>(t * 3 * hw), 3 * hw, s.image.storage().begin());
    s.heatmap = synth_heatmap(truth, h, w, noise, derive_seed(seed, 0, t));
    const auto map = build_joint_map(gen.regress(s.stacked()), h, w, radius_px);
    std::copy(map.data().begin(), map.data().end(), out.joint_map.storage().begin() + static_cast<std::ptrdiff_t>(t * hw));
  }
  return out;
}

template class Critic<float>;
template class Critic<double>;
template class PoseGenerator<float>;
template class PoseGenerator<double>;
template Var<float> wgan_gp_loss(Critic<float>&, Tape<float>&, const Var<float>&, const Var<float>&,
                                 const std::vector<float>&, double);
template Var<double> wgan_gp_loss(Critic<double>&, Tape<double>&, const Var<double>&, const Var<double>&,
                                  const std::vector<double>&, double);
template double pretrain_generator(PoseGenerator<float>&, const std::vector<const HeatmapSample*>&, std::size_t, double,
                                   std::size_t, std::uint64_t);
template double pretrain_generator(PoseGenerator<double>&, const std::vector<const HeatmapSample*>&, std::size_t, double,
                                   std::size_t, std::uint64_t);
template std::vector<GanEpochReport> train_gan(PoseGenerator<float>&, Critic<float>&, const std::vector<HeatmapSample>&,
                                               const GanConfig&, const std::function<void(const GanEpochReport&)>&);
template std::vector<GanEpochReport> train_gan(PoseGenerator<double>&, Critic<double>&, const std::vector<HeatmapSample>&,
                                               const GanConfig&, const std::function<void(const GanEpochReport&)>&);
template double generator_error_px(PoseGenerator<float>&, const std::vector<const HeatmapSample*>&);
template double generator_error_px(PoseGenerator<double>&, const std::vector<const HeatmapSample*>&);
template std::vector<GanEpochReport> fit_pose_gan(PoseGenerator<float>&, Critic<float>&, const std::vector<HeatmapSample>&,
                                                  const GanConfig&, const std::function<void(const GanEpochReport&)>&);
template std::vector<GanEpochReport> fit_pose_gan(PoseGenerator<double>&, Critic<double>&,
                                                  const std::vector<HeatmapSample>&, const GanConfig&,
                                                  const std::function<void(const GanEpochReport&)>&);

}  // namespace fgd
