#pragma once

#include <filesystem>

#include "fgd/nn.hpp"

namespace fgd {

/// Embedded-Gaussian non-local block over all space-time positions of a
/// [T,C,H,W] clip, in residual form x + gamma * w_z(y).
///
/// theta, phi and g are 1x1 projections C -> C/2 applied per position; for
/// position i, y_i = sum_j softmax_j(theta(x_i) . phi(x_j)) g(x_j).
template <typename T>
class NonLocalBlock {
 public:
  NonLocalBlock() = default;
  NonLocalBlock(std::string name, std::size_t channels, Rng& rng);

  /// With gamma == 0 the input Var is returned unchanged. If `attention` is
  /// given it receives the [N,N] softmax matrix (N = T*H*W); `response`
  /// receives w_z(y) in [T,C,H,W] layout. Both force the branch to run.
  Var<T> forward(Tape<T>& tape, const Var<T>& x, Var<T>* attention = nullptr, Var<T>* response = nullptr);

  void collect(ParamList<T>& out);
  std::size_t channels() const { return w_z.out_features(); }

  Linear<T> theta, phi, g, w_z;
  T gamma{0};
};

/// Softmax-weighted average of LSTM hidden states.
template <typename T>
class TemporalAttention {
 public:
  TemporalAttention() = default;
  TemporalAttention(std::string name, std::size_t hidden, Rng& rng);

  /// hidden[T,h] -> h_out[h]; optional per-frame weights [T].
  Var<T> attend(Tape<T>& tape, const Var<T>& hidden, Var<T>* weights = nullptr);
  /// Same over a sequence of [h] states; an empty sequence is a contract error.
  Var<T> attend(Tape<T>& tape, const std::vector<Var<T>>& hidden, Var<T>* weights = nullptr);

  void collect(ParamList<T>& out) { score.collect(out); }

  Linear<T> score;  // h -> 1
};

/// Per-pixel sum over channels of |features|, min-max normalized to [0,1].
/// An all-equal map (including all-zero features) normalizes to zeros.
Tensor<float> attention_heatmap(const Tensor<float>& features);

/// 8-bit binary PGM (P5) of a [H,W] map in [0,1], each pixel repeated
/// `upscale` times along both axes.
std::string encode_pgm(const Tensor<float>& map, std::size_t upscale = 1);
void write_pgm(const std::filesystem::path& path, const Tensor<float>& map, std::size_t upscale = 1);

/// Contribution weight of the non-local branch. Negative epochs mean the ramp
/// has not started (0); otherwise min(1, 0.1 + 0.9 * e / (ramp - 1)).
double gamma_schedule(int epoch_in_ramp, int ramp_epochs);

}  // namespace fgd
