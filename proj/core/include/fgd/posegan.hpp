#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fgd/nn.hpp"
#include "fgd/synth.hpp"

namespace fgd {

struct HeatmapNoise {
  double sigma_px = 2.5;   // bump width
  double p_drop = 0.25;    // per-joint drop probability
  double jitter_px = 3.0;  // bump displacement
  std::size_t spurious = 2;

  static HeatmapNoise none() { return {2.5, 0.0, 0.0, 0}; }
};

struct HeatmapSample {
  Tensor<float> image;    // [3,H,W] in [0,1]
  Tensor<float> heatmap;  // [1,H,W] in [0,1]
  JointSet truth;

  /// image and heatmap stacked into [4,H,W]
  Tensor<float> stacked() const;
};

/// Sum of Gaussian bumps at the (dropped / jittered) joints plus spurious
/// bumps, clipped to [0,1]. Deterministic in the seed.
Tensor<float> synth_heatmap(const JointSet& truth, std::size_t h, std::size_t w, const HeatmapNoise& noise,
                            std::uint64_t seed);

HeatmapSample make_heatmap_sample(const SynthFrame& frame, const HeatmapNoise& noise, std::uint64_t seed);

/// n samples, sample i from derive_seed(cfg.seed, split, i).
std::vector<HeatmapSample> gen_heatmap_set(const SynthConfig& cfg, const HeatmapNoise& noise, std::size_t n,
                                           std::uint64_t split);

/// images.fgt [N,3,H,W], heatmaps.fgt [N,1,H,W] and truth.csv (id + 12
/// coordinates).
void save_heatmap_set(const std::filesystem::path& dir, const std::vector<HeatmapSample>& set);
std::vector<HeatmapSample> load_heatmap_set(const std::filesystem::path& dir);

/// Per joint: the heatmap's maximum within `radius_px` of the true joint
/// (ties: nearest the true joint's pixel, then raster order). An
/// oracle-assisted baseline.
JointSet argmax_decode(const Tensor<float>& heatmap, const JointSet& truth, double radius_px = 6.0);

/// Mean Euclidean joint error in pixels.
double joint_error_px(const JointSet& a, const JointSet& b, std::size_t h, std::size_t w);

enum class Activation { tanh, softplus, relu };

/// Perceptron stack 12 -> hidden... -> 1 scoring joint vectors.
template <typename T>
class Critic {
 public:
  Critic() = default;
  Critic(std::vector<std::size_t> hidden, Activation act, Rng& rng);

  /// q[B,12] -> scores [B,1]
  Var<T> forward(Tape<T>& tape, const Var<T>& q);
  /// dD/dq [B,12] written out with the chain rule from forward primitives,
  /// so the result is itself differentiable wrt the critic parameters.
  Var<T> input_gradient(Tape<T>& tape, const Var<T>& q);

  void collect(ParamList<T>& out);
  ParamList<T> parameters();

  std::vector<Linear<T>> layers;
  Activation activation = Activation::tanh;
};

/// mean D(fake) - mean D(real) + lambda * mean((|grad D(x_hat)| - 1)^2),
/// x_hat = eps * real + (1 - eps) * fake with one eps per row.
template <typename T>
Var<T> wgan_gp_loss(Critic<T>& critic, Tape<T>& tape, const Var<T>& real, const Var<T>& fake,
                    const std::vector<T>& eps, double lambda_gp);

/// Conv stack 4->8->16->32 (stride 2) on the stacked image + heatmap, then a
/// two-layer perceptron to 12 sigmoid outputs.
template <typename T>
class PoseGenerator {
 public:
  PoseGenerator() = default;
  PoseGenerator(std::size_t height, std::size_t width, Rng& rng, std::size_t hidden = 64);

  /// x[B,4,H,W] -> [B,12] in [0,1]
  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  /// stacked [4,H,W] -> joints
  JointSet regress(const Tensor<float>& stacked);

  void collect(ParamList<T>& out);
  ParamList<T> parameters();
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  std::vector<Conv2dLayer<T>> convs;
  Linear<T> fc1, fc2;

 private:
  std::size_t height_ = 0, width_ = 0;
};

struct GanConfig {
  double lambda_gp = 10.0;
  double lr = 1e-4;
  std::size_t n_critic = 5;
  double beta1 = 0.5;
  double beta2 = 0.99;
  std::size_t epochs = 200;
  std::size_t batch = 16;
  std::vector<std::size_t> critic_hidden{64, 64};
  double pretrain_fraction = 0.005;
  std::size_t pretrain_epochs = 200;
  double pretrain_lr = 1e-3;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GanEpochReport {
  std::size_t epoch = 0;
  double critic_loss = 0;     // mean over critic steps
  double generator_loss = 0;  // mean over generator steps
  double labeled_error_px = -1;  // fit_pose_gan only: error on the pretrain subset
};

/// Supervised mean-squared-error regression on `subset`; returns the final
/// epoch's mean training MSE.
template <typename T>
double pretrain_generator(PoseGenerator<T>& gen, const std::vector<const HeatmapSample*>& subset, std::size_t epochs,
                          double lr, std::size_t batch, std::uint64_t seed);

/// Alternates n_critic critic updates (real joint vectors vs generator
/// output) with one generator update on -mean D(G(I)). Throws NumericError
/// when the critic loss magnitude exceeds 1e6.
template <typename T>
std::vector<GanEpochReport> train_gan(PoseGenerator<T>& gen, Critic<T>& critic, const std::vector<HeatmapSample>& data,
                                      const GanConfig& cfg,
                                      const std::function<void(const GanEpochReport&)>& on_epoch = {});

/// Pretrains on the first pretrain_fraction of `data` (at least one sample),
/// then runs train_gan. The labeled subset doubles as the selection set: the
/// generator that ends up in `gen` is the snapshot (pretrained state or end of
/// some epoch) with the lowest mean error on it. Without a subset the last
/// epoch is kept.
template <typename T>
std::vector<GanEpochReport> fit_pose_gan(PoseGenerator<T>& gen, Critic<T>& critic, const std::vector<HeatmapSample>& data,
                                         const GanConfig& cfg,
                                         const std::function<void(const GanEpochReport&)>& on_epoch = {});

/// Mean pixel error of the generator over `data`.
template <typename T>
double generator_error_px(PoseGenerator<T>& gen, const std::vector<const HeatmapSample*>& data);
double generator_error_px(PoseGenerator<float>& gen, const std::vector<HeatmapSample>& data);
/// Mean pixel error of argmax_decode over `data`.
double argmax_error_px(const std::vector<HeatmapSample>& data, double radius_px = 6.0);

void save_generator(const std::filesystem::path& dir, PoseGenerator<float>& gen);
PoseGenerator<float> load_generator(const std::filesystem::path& dir);

/// Replaces each frame's joint map with a map built from the generator's
/// joints, regressed from the frame and a noisy heatmap of `joints`.
VideoSample refine_joint_maps(PoseGenerator<float>& gen, const VideoSample& video, const HeatmapNoise& noise,
                              double radius_px, std::uint64_t seed);

}  // namespace fgd
