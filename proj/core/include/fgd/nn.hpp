#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <utility>

#include "fgd/ops.hpp"

namespace fgd {

using Rng = std::mt19937_64;

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng);

  /// x[B,in] -> [B,out]; x[in] -> [out].
  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void collect(ParamList<T>& out) { out.insert(out.end(), {&weight, &bias}); }

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Parameter<T> weight;  // [out, in]
  Parameter<T> bias;    // [out]
};

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
              std::size_t padding, Rng& rng);

  /// floor((n + 2 pad - k) / stride) + 1; throws if that is < 1.
  std::size_t output_size(std::size_t n) const;

  /// x[B,in_ch,H,W] -> [B,out_ch,H',W']
  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void collect(ParamList<T>& out) { out.insert(out.end(), {&weight, &bias}); }

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t kernel() const { return weight.value.dim(2); }

  Parameter<T> weight;  // [out_ch, in_ch, k, k]
  Parameter<T> bias;    // [out_ch]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// LSTM with fused gate weights in (input, forget, cell, output) order.
template <typename T>
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::string name, std::size_t input, std::size_t hidden, Rng& rng);

  struct State {
    Var<T> h;  // [1,hidden]
    Var<T> c;  // [1,hidden]
  };

  /// One recurrence step; x, h, c may be rank-1 or [1,n].
  State step(Tape<T>& tape, const Var<T>& x, const Var<T>& h, const Var<T>& c);
  /// Runs over xs[T,input] from zero state; returns hidden states [T,hidden].
  Var<T> run(Tape<T>& tape, const Var<T>& xs);

  void collect(ParamList<T>& out) { out.insert(out.end(), {&w_ih, &w_hh, &bias}); }
  std::size_t input_size() const { return w_ih.value.dim(1); }
  std::size_t hidden_size() const { return w_hh.value.dim(1); }

  Parameter<T> w_ih;  // [4h, d]
  Parameter<T> w_hh;  // [4h, h]
  Parameter<T> bias;  // [4h]

 private:
  State gates_to_state(const Var<T>& gates, const Var<T>& c);
};

/// -log softmax(logits)[label]
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::size_t label) {
  return cross_entropy(logits, label);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list; consumes Parameter::grad.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig cfg = {});

  /// One update with grad * grad_scale; throws NumericError naming the
  /// parameter on a non-finite gradient (before touching any parameter).
  void step(T grad_scale = T{1});
  void zero_grad();

  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t t_ = 0;
};

struct AccumulationStats {
  std::size_t steps = 0;
  std::size_t samples = 0;
  double mean_loss = 0.0;
};

/// Runs `sample_backward` (forward + backward into Parameter::grad, returning
/// the loss) per sample and applies one averaged Adam step every
/// `accumulation_size` samples, plus one for a trailing partial group.
template <typename T>
AccumulationStats accumulate_gradients(std::size_t batch_size, const std::function<double(std::size_t)>& sample_backward,
                                       Adam<T>& opt, std::size_t accumulation_size);

/// manifest.txt ("name file dims...") plus one FGT1 file per parameter.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParamList<T>& params);
/// Loads every listed parameter by name; shapes must match.
template <typename T>
void load_checkpoint(const std::filesystem::path& dir, const ParamList<T>& params);

void log_warning(const std::string& msg);

}  // namespace fgd
