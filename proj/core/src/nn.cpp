#include "fgd/nn.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fgd/io.hpp"

namespace fgd {

void log_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

template <typename T>
void xavier_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
}

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", Tensor<T>({out, in})), bias(name + ".bias", Tensor<T>({out})) {
  xavier_uniform(weight.value, in, out, rng);
}

template <typename T>
Var<T> Linear<T>::forward(Tape<T>& tape, const Var<T>& x) {
  const std::size_t in = in_features();
  const bool vec = x.shape().size() == 1;
  if (x.shape().back() != in || x.shape().size() > 2) {
    throw ContractError(weight.name + ": expected input [B," + std::to_string(in) + "], got " + to_string(x.shape()));
  }
  Var<T> x2 = vec ? reshape(x, {1, in}) : x;
  Var<T> y = add_rowwise(matmul_nt(x2, tape.param(weight)), tape.param(bias));
  return vec ? reshape(y, {out_features()}) : y;
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                            std::size_t stride_, std::size_t padding_, Rng& rng)
    : weight(name + ".weight", Tensor<T>({out_ch, in_ch, kernel, kernel})),
      bias(name + ".bias", Tensor<T>({out_ch})),
      stride(stride_),
      padding(padding_) {
  if (stride == 0) throw ContractError(name + ": stride must be positive");
  xavier_uniform(weight.value, in_ch * kernel * kernel, out_ch * kernel * kernel, rng);
}

template <typename T>
std::size_t Conv2dLayer<T>::output_size(std::size_t n) const {
  const long span = static_cast<long>(n + 2 * padding) - static_cast<long>(kernel());
  if (span < 0) {
    throw ContractError(weight.name + ": input extent " + std::to_string(n) + " too small for kernel " +
                        std::to_string(kernel()));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

template <typename T>
Var<T> Conv2dLayer<T>::forward(Tape<T>& tape, const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != in_channels()) {
    throw ContractError(weight.name + ": expected input [B," + std::to_string(in_channels()) + ",H,W], got " +
                        to_string(s));
  }
  output_size(s[2]);
  output_size(s[3]);
  return conv2d(x, tape.param(weight), tape.param(bias), stride, padding);
}

template <typename T>
LstmCell<T>::LstmCell(std::string name, std::size_t input, std::size_t hidden, Rng& rng)
    : w_ih(name + ".w_ih", Tensor<T>({4 * hidden, input})),
      w_hh(name + ".w_hh", Tensor<T>({4 * hidden, hidden})),
      bias(name + ".bias", Tensor<T>({4 * hidden})) {
  xavier_uniform(w_ih.value, input, 4 * hidden, rng);
  xavier_uniform(w_hh.value, hidden, 4 * hidden, rng);
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias.value[i] = T{1};
}

template <typename T>
typename LstmCell<T>::State LstmCell<T>::gates_to_state(const Var<T>& gates, const Var<T>& c) {
  const std::size_t h = hidden_size();
  Var<T> i = sigmoid(slice(gates, 1, 0, h));
  Var<T> f = sigmoid(slice(gates, 1, h, 2 * h));
  Var<T> g = fgd::tanh(slice(gates, 1, 2 * h, 3 * h));
  Var<T> o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  Var<T> c_next = add(mul(f, c), mul(i, g));
  Var<T> h_next = mul(o, fgd::tanh(c_next));
  return {h_next, c_next};
}

template <typename T>
typename LstmCell<T>::State LstmCell<T>::step(Tape<T>& tape, const Var<T>& x, const Var<T>& h, const Var<T>& c) {
  const std::size_t d = input_size(), hs = hidden_size();
  auto as_row = [](const Var<T>& v, std::size_t n, const char* what) {
    if (v.size() != n || v.shape().size() > 2) {
      throw ContractError(std::string("lstm_step: ") + what + " expected " + std::to_string(n) + " values, got " +
                          to_string(v.shape()));
    }
    return v.shape().size() == 2 ? v : reshape(v, {1, n});
  };
  Var<T> xr = as_row(x, d, "x");
  Var<T> hr = as_row(h, hs, "h");
  Var<T> cr = as_row(c, hs, "c");
  Var<T> gates = add(add_rowwise(matmul_nt(xr, tape.param(w_ih)), tape.param(bias)), matmul_nt(hr, tape.param(w_hh)));
  return gates_to_state(gates, cr);
}

template <typename T>
Var<T> LstmCell<T>::run(Tape<T>& tape, const Var<T>& xs) {
  const std::size_t hs = hidden_size();
  if (xs.shape().size() != 2 || xs.shape()[1] != input_size()) {
    throw ContractError("lstm: expected sequence [T," + std::to_string(input_size()) + "], got " + to_string(xs.shape()));
  }
  const std::size_t steps = xs.shape()[0];
  Var<T> proj = add_rowwise(matmul_nt(xs, tape.param(w_ih)), tape.param(bias));
  Var<T> whh = tape.param(w_hh);
  Var<T> c = tape.constant(Tensor<T>({1, hs}));
  Var<T> h;
  std::vector<Var<T>> hidden;
  hidden.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var<T> gates = slice(proj, 0, t, t + 1);
    if (t > 0) gates = add(gates, matmul_nt(h, whh));
    State s = gates_to_state(gates, c);
    h = s.h;
    c = s.c;
    hidden.push_back(h);
  }
  return steps == 1 ? hidden.front() : concat(hidden, 0);
}

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
void Adam<T>::step(T grad_scale) {
  for (auto* p : params_) {
    if (!p->grad.all_finite()) throw NumericError("adam: non-finite gradient for parameter " + p->name);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i] * grad_scale;
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const double mhat = static_cast<double>(m[i]) / c1;
      const double vhat = static_cast<double>(v[i]) / c2;
      p.value[i] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template <typename T>
AccumulationStats accumulate_gradients(std::size_t batch_size, const std::function<double(std::size_t)>& sample_backward,
                                       Adam<T>& opt, std::size_t accumulation_size) {
  if (accumulation_size == 0) throw ContractError("accumulate_gradients: accumulation size must be >= 1");
  AccumulationStats stats;
  if (batch_size == 0) {
    log_warning("accumulate_gradients: empty batch, no optimizer step taken");
    return stats;
  }
  opt.zero_grad();
  std::size_t pending = 0;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < batch_size; ++i) {
    loss_sum += sample_backward(i);
    ++pending;
    if (pending == accumulation_size || i + 1 == batch_size) {
      opt.step(T{1} / static_cast<T>(pending));
      opt.zero_grad();
      ++stats.steps;
      pending = 0;
    }
  }
  stats.samples = batch_size;
  stats.mean_loss = loss_sum / static_cast<double>(batch_size);
  return stats;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParamList<T>& params) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto* p : params) {
    const std::string file = p->name + ".fgt";
    write_fgt(dir / file, p->value.template cast<float>());
    manifest << p->name << ' ' << file;
    for (auto d : p->value.shape()) manifest << ' ' << d;
    manifest << '\n';
  }
  write_file_atomic(dir / "manifest.txt", manifest.str());
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, const ParamList<T>& params) {
  std::istringstream manifest(read_file(dir / "manifest.txt"));
  std::unordered_map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, file;
    ls >> name >> file;
    files[name] = file;
  }
  for (auto* p : params) {
    auto it = files.find(p->name);
    if (it == files.end()) throw IoError((dir / "manifest.txt").string() + ": missing parameter " + p->name);
    Tensor<float> t = read_fgt(dir / it->second);
    if (t.shape() != p->value.shape()) {
      throw IoError((dir / it->second).string() + ": shape " + to_string(t.shape()) + ", expected " +
                    to_string(p->value.shape()));
    }
    p->value = t.template cast<T>();
    p->grad = Tensor<T>(p->value.shape());
  }
}

#define FGD_INSTANTIATE_NN(T)                                                                                 \
  template void xavier_uniform(Tensor<T>&, std::size_t, std::size_t, Rng&);                                   \
  template class Linear<T>;                                                                                   \
  template class Conv2dLayer<T>;                                                                              \
  template class LstmCell<T>;                                                                                 \
  template class Adam<T>;                                                                                     \
  template AccumulationStats accumulate_gradients(std::size_t, const std::function<double(std::size_t)>&,    \
                                                  Adam<T>&, std::size_t);                                     \
  template void save_checkpoint(const std::filesystem::path&, const ParamList<T>&);                           \
  template void load_checkpoint(const std::filesystem::path&, const ParamList<T>&);

FGD_INSTANTIATE_NN(float)
FGD_INSTANTIATE_NN(double)

#undef FGD_INSTANTIATE_NN

}  // namespace fgd
