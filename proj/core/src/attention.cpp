#include "fgd/attention.hpp"

#include <algorithm>
#include <cmath>

#include "fgd/io.hpp"

namespace fgd {

template <typename T>
NonLocalBlock<T>::NonLocalBlock(std::string name, std::size_t channels, Rng& rng) {
  if (channels == 0 || channels % 2 != 0) {
    throw ContractError(name + ": non-local block needs an even channel count, got " + std::to_string(channels));
  }
  const std::size_t inner = channels / 2;
  theta = Linear<T>(name + ".theta", channels, inner, rng);
  phi = Linear<T>(name + ".phi", channels, inner, rng);
  g = Linear<T>(name + ".g", channels, inner, rng);
  w_z = Linear<T>(name + ".w_z", inner, channels, rng);
}

template <typename T>
void NonLocalBlock<T>::collect(ParamList<T>& out) {
  theta.collect(out);
  phi.collect(out);
  g.collect(out);
  w_z.collect(out);
}

template <typename T>
Var<T> NonLocalBlock<T>::forward(Tape<T>& tape, const Var<T>& x, Var<T>* attention, Var<T>* response) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ContractError("non-local block: expected [T,C,H,W], got " + to_string(s));
  const std::size_t frames = s[0], c = s[1], hw = s[2] * s[3];
  if (c % 2 != 0) throw ContractError("non-local block: odd channel count " + std::to_string(c));
  if (c != channels()) {
    throw ContractError("non-local block: expected " + std::to_string(channels()) + " channels, got " + to_string(s));
  }
  if (gamma == T{0} && attention == nullptr && response == nullptr) return x;

  // Positions as rows: [T*H*W, C].
  Var<T> pos = reshape(permute(reshape(x, {frames, c, hw}), {0, 2, 1}), {frames * hw, c});
  Var<T> th = theta.forward(tape, pos);
  Var<T> ph = phi.forward(tape, pos);
  Var<T> gv = g.forward(tape, pos);
  Var<T> attn = softmax(matmul_nt(th, ph));
  Var<T> y = matmul(attn, gv);
  Var<T> z = w_z.forward(tape, y);
  Var<T> z_img = reshape(permute(reshape(z, {frames, hw, c}), {0, 2, 1}), s);
  if (attention != nullptr) *attention = attn;
  if (response != nullptr) *response = z_img;
  if (gamma == T{0}) return x;
  return add(x, scale(z_img, gamma));
}

template <typename T>
TemporalAttention<T>::TemporalAttention(std::string name, std::size_t hidden, Rng& rng)
    : score(name + ".score", hidden, 1, rng) {}

template <typename T>
Var<T> TemporalAttention<T>::attend(Tape<T>& tape, const Var<T>& hidden, Var<T>* weights) {
  const Shape& s = hidden.shape();
  if (s.size() != 2 || s[1] != score.in_features()) {
    throw ContractError("temporal attention: expected hidden states [T," + std::to_string(score.in_features()) +
                        "], got " + to_string(s));
  }
  const std::size_t steps = s[0];
  Var<T> w = softmax(reshape(score.forward(tape, hidden), {1, steps}));
  if (weights != nullptr) *weights = reshape(w, {steps});
  return reshape(matmul(w, hidden), {s[1]});
}

template <typename T>
Var<T> TemporalAttention<T>::attend(Tape<T>& tape, const std::vector<Var<T>>& hidden, Var<T>* weights) {
  if (hidden.empty()) throw ContractError("temporal attention: empty hidden-state sequence");
  std::vector<Var<T>> rows;
  rows.reserve(hidden.size());
  for (const auto& h : hidden) rows.push_back(reshape(h, {1, h.size()}));
  return attend(tape, rows.size() == 1 ? rows.front() : concat(rows, 0), weights);
}

Tensor<float> attention_heatmap(const Tensor<float>& features) {
  if (features.rank() != 3) throw ContractError("attention_heatmap: expected [C,H,W], got " + to_string(features.shape()));
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  Tensor<float> map({h, w});
  for (std::size_t m = 0; m < c; ++m)
    for (std::size_t i = 0; i < h * w; ++i) map[i] += std::abs(features[m * h * w + i]);
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const float mn = *lo, range = *hi - *lo;
  for (auto& v : map.storage()) v = range > 0.0f ? (v - mn) / range : 0.0f;
  return map;
}

std::string encode_pgm(const Tensor<float>& map, std::size_t upscale) {
  if (map.rank() != 2) throw ContractError("encode_pgm: expected [H,W], got " + to_string(map.shape()));
  if (upscale == 0) throw ContractError("encode_pgm: upscale must be >= 1");
  const std::size_t h = map.dim(0), w = map.dim(1), oh = h * upscale, ow = w * upscale;
  std::string out = "P5\n" + std::to_string(ow) + " " + std::to_string(oh) + "\n255\n";
  out.reserve(out.size() + oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const float v = std::clamp(map[(i / upscale) * w + j / upscale], 0.0f, 1.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& map, std::size_t upscale) {
  write_file_atomic(path, encode_pgm(map, upscale));
}

double gamma_schedule(int epoch_in_ramp, int ramp_epochs) {
  if (ramp_epochs < 1) throw ContractError("gamma_schedule: ramp length must be >= 1");
  if (epoch_in_ramp < 0) return 0.0;
  if (ramp_epochs == 1) return 1.0;
  return std::min(1.0, 0.1 + 0.9 * static_cast<double>(epoch_in_ramp) / static_cast<double>(ramp_epochs - 1));
}

template class NonLocalBlock<float>;
template class NonLocalBlock<double>;
template class TemporalAttention<float>;
template class TemporalAttention<double>;

}  // namespace fgd
