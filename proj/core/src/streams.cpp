#include "fgd/streams.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fgd/io.hpp"

namespace fgd {

const char* variant_name(StreamVariant v) {
  switch (v) {
    case StreamVariant::raw_frame: return "raw_frame";
    case StreamVariant::pose_stream: return "pose_stream";
    case StreamVariant::object_map: return "object_map";
    case StreamVariant::bi_stream: return "bi_stream";
    case StreamVariant::bi_stream_att: return "bi_stream_att";
  }
  return "?";
}

std::vector<StreamVariant> all_variants() {
  return {StreamVariant::raw_frame, StreamVariant::pose_stream, StreamVariant::object_map, StreamVariant::bi_stream,
          StreamVariant::bi_stream_att};
}

StreamVariant parse_variant(const std::string& name) {
  for (auto v : all_variants())
    if (name == variant_name(v)) return v;
  throw ContractError("unknown variant '" + name +
                      "' (expected raw_frame, pose_stream, object_map, bi_stream or bi_stream_att)");
}

NetConfig NetConfig::for_variant(StreamVariant v) {
  NetConfig c;
  c.attention = v == StreamVariant::bi_stream_att;
  c.pose = v != StreamVariant::object_map;
  c.object = v == StreamVariant::object_map || v == StreamVariant::bi_stream || v == StreamVariant::bi_stream_att;
  c.pose_channels = v == StreamVariant::raw_frame ? 3 : 4;
  return c;
}

void NetConfig::validate() const {
  if (!pose && !object) throw ContractError("net config: at least one stream is required");
  if (pose_channels != 3 && pose_channels != 4) throw ContractError("net config: pose_channels must be 3 or 4");
  if (classes < 2 || hidden < 1 || stem_pool < 1) throw ContractError("net config: bad sizes");
  if (widths.size() != 3) throw ContractError("net config: exactly three conv widths expected");
  if (attention && (!pose || widths[1] % 2 || widths[2] % 2)) {
    throw ContractError("net config: attention needs the pose stream and even widths");
  }
}

KeyValues NetConfig::to_key_values() const {
  return {{"classes", std::to_string(classes)},
          {"hidden", std::to_string(hidden)},
          {"pose", pose ? "1" : "0"},
          {"pose_channels", std::to_string(pose_channels)},
          {"object", object ? "1" : "0"},
          {"attention", attention ? "1" : "0"},
          {"stem_pool", std::to_string(stem_pool)},
          {"widths", std::to_string(widths[0]) + "," + std::to_string(widths[1]) + "," + std::to_string(widths[2])}};
}

NetConfig NetConfig::from_key_values(const KeyValues& kv) {
  NetConfig c;
  auto flag = [](const std::string& k, const std::string& v) {
    if (v != "0" && v != "1") throw ContractError("net config: " + k + " must be 0 or 1");
    return v == "1";
  };
  for (const auto& [k, v] : kv) {
    try {
      if (k == "classes") c.classes = std::stoul(v);
      else if (k == "hidden") c.hidden = std::stoul(v);
      else if (k == "pose") c.pose = flag(k, v);
      else if (k == "pose_channels") c.pose_channels = std::stoul(v);
      else if (k == "object") c.object = flag(k, v);
      else if (k == "attention") c.attention = flag(k, v);
      else if (k == "stem_pool") c.stem_pool = std::stoul(v);
      else if (k == "widths") {
        c.widths.clear();
        std::istringstream in(v);
        std::string part;
        while (std::getline(in, part, ',')) c.widths.push_back(std::stoul(part));
      } else {
        throw ContractError("net config: unknown key '" + k + "'");
      }
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ContractError*>(&e)) throw;
      throw ContractError("net config: bad value for '" + k + "': '" + v + "'");
    }
  }
  c.validate();
  return c;
}

template <typename T>
BiStreamNet<T>::BiStreamNet(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const auto& w = cfg_.widths;
  if (cfg_.pose) {
    pose_convs.emplace_back("pose.conv1", cfg_.pose_channels, w[0], 3, 2, 1, rng);
    pose_convs.emplace_back("pose.conv2", w[0], w[1], 3, 2, 1, rng);
    pose_convs.emplace_back("pose.conv3", w[1], w[2], 3, 2, 1, rng);
    if (cfg_.attention) {
      nonlocal.emplace_back("pose.nl2", w[1], rng);
      nonlocal.emplace_back("pose.nl3", w[2], rng);
    }
  }
  if (cfg_.object) {
    object_convs.emplace_back("object.conv1", 1, w[0], 3, 2, 1, rng);
    object_convs.emplace_back("object.conv2", w[0], w[1], 3, 2, 1, rng);
    object_convs.emplace_back("object.conv3", w[1], w[2], 3, 2, 1, rng);
  }
  const std::size_t fused = w[2] * (static_cast<std::size_t>(cfg_.pose) + static_cast<std::size_t>(cfg_.object));
  lstm = LstmCell<T>("lstm", fused, cfg_.hidden, rng);
  if (cfg_.attention) temporal = TemporalAttention<T>("temporal", cfg_.hidden, rng);
  head = Linear<T>("head", cfg_.hidden, cfg_.classes, rng);
}

template <typename T>
void BiStreamNet<T>::collect(ParamList<T>& out) {
  for (auto& c : pose_convs) c.collect(out);
  for (auto& n : nonlocal) n.collect(out);
  for (auto& c : object_convs) c.collect(out);
  lstm.collect(out);
  if (cfg_.attention) temporal.collect(out);
  head.collect(out);
}

template <typename T>
ParamList<T> BiStreamNet<T>::parameters() {
  ParamList<T> p;
  collect(p);
  return p;
}

template <typename T>
void BiStreamNet<T>::set_gamma(T g) {
  for (auto& n : nonlocal) n.gamma = g;
}

template <typename T>
T BiStreamNet<T>::gamma() const {
  return nonlocal.empty() ? T{0} : nonlocal.front().gamma;
}

template <typename T>
Var<T> BiStreamNet<T>::stream(Tape<T>& tape, Var<T> x, std::vector<Conv2dLayer<T>>& convs, bool with_nonlocal) {
  if (cfg_.stem_pool > 1) x = avg_pool2d(x, cfg_.stem_pool);
  for (std::size_t i = 0; i < convs.size(); ++i) {
    x = tanh(convs[i].forward(tape, x));
    if (with_nonlocal && i >= 1) x = nonlocal[i - 1].forward(tape, x);
  }
  return x;
}

template <typename T>
Var<T> BiStreamNet<T>::logits(Tape<T>& tape, const VideoSample& raw) {
  validate(raw, cfg_.classes);
  const VideoSample s = subsample_sequence(raw, 40);
  const std::size_t frames = s.length();
  if (s.height() % cfg_.stem_pool || s.width() % cfg_.stem_pool) {
    throw ContractError("bi-stream: frame size " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                        " not divisible by the stem pool " + std::to_string(cfg_.stem_pool));
  }
  std::vector<Var<T>> feats;
  if (cfg_.pose) {
    Var<T> rgb = tape.constant(s.frames.template cast<T>());
    Var<T> x = cfg_.pose_channels == 4 ? concat<T>({rgb, tape.constant(s.joint_map.template cast<T>())}, 1) : rgb;
    Var<T> f = stream(tape, x, pose_convs, cfg_.attention);
    last_features_ = f.value();
    feats.push_back(global_avg_pool(f));
  }
  if (cfg_.object) {
    Var<T> f = stream(tape, tape.constant(s.object_map.template cast<T>()), object_convs, false);
    feats.push_back(global_avg_pool(f));
  }
  Var<T> fused = feats.size() == 1 ? feats.front() : concat(feats, 1);
  Var<T> hs = lstm.run(tape, fused);
  Var<T> ctx;
  if (cfg_.attention) {
    Var<T> w;
    ctx = temporal.attend(tape, hs, &w);
    last_weights_ = w.value();
  } else {
    ctx = reshape(slice(hs, 0, frames - 1, frames), {cfg_.hidden});
    last_weights_ = Tensor<T>();
  }
  return head.forward(tape, ctx);
}

template <typename T>
std::vector<double> BiStreamNet<T>::classify(const VideoSample& sample) {
  Tape<T> tape;
  const Tensor<T> p = softmax(logits(tape, sample)).value();
  return std::vector<double>(p.data().begin(), p.data().end());
}

int argmax(const std::vector<double>& p) {
  if (p.empty()) throw ContractError("argmax: empty vector");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

template <typename T>
int predict(BiStreamNet<T>& net, const VideoSample& s) {
  return argmax(net.classify(s));
}

template <typename T>
double recognition_accuracy(BiStreamNet<T>& net, const std::vector<VideoSample>& data, std::vector<int>* predictions) {
  if (data.empty()) throw ContractError("recognition_accuracy: empty dataset");
  std::size_t hit = 0;
  if (predictions) predictions->clear();
  for (const auto& s : data) {
    const int p = predict(net, s);
    hit += p == s.label;
    if (predictions) predictions->push_back(p);
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

template <typename T>
std::vector<EpochReport> train_recognizer(BiStreamNet<T>& net, const std::vector<VideoSample>& data,
                                          const TrainConfig& cfg,
                                          const std::function<void(const EpochReport&)>& on_epoch) {
  if (data.empty()) throw ContractError("train_recognizer: empty dataset");
  if (cfg.accumulation < 1) throw ContractError("train_recognizer: accumulation must be >= 1");
  if (cfg.gamma_ramp < 1) throw ContractError("train_recognizer: gamma ramp must be >= 1 epoch");
  for (const auto& s : data) {
    if (s.label < 0) throw ContractError("train_recognizer: training samples need a class label");
  }
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam<T> opt(net.parameters(), adam_cfg);
  if (cfg.crop_prob < 0 || cfg.crop_prob > 1) throw ContractError("train_recognizer: crop probability outside [0,1]");
  if (cfg.min_crop < 1) throw ContractError("train_recognizer: min_crop must be >= 1");
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t phase1 = cfg.epochs > cfg.gamma_ramp ? cfg.epochs - cfg.gamma_ramp : 0;
  std::vector<EpochReport> reports;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double g = epoch < phase1 ? 0.0 : gamma_schedule(static_cast<int>(epoch - phase1), static_cast<int>(cfg.gamma_ramp));
    net.set_gamma(static_cast<T>(g));
    std::shuffle(order.begin(), order.end(), rng);
    const auto stats = accumulate_gradients<T>(
        data.size(),
        [&](std::size_t i) {
          const VideoSample* sp = &data[order[i]];
          VideoSample cropped;
          if (coin(rng) < cfg.crop_prob && sp->length() > cfg.min_crop) {
            const std::size_t n = sp->length();
            const std::size_t len = std::uniform_int_distribution<std::size_t>(cfg.min_crop, n)(rng);
            const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
            cropped = slice_frames(*sp, start, start + len);
            sp = &cropped;
          }
          const VideoSample& s = *sp;
          Tape<T> tape;
          Var<T> loss = softmax_cross_entropy(net.logits(tape, s), static_cast<std::size_t>(s.label));
          const double l = static_cast<double>(loss.value().item());
          if (!std::isfinite(l)) {
            throw NumericError("train_recognizer: non-finite loss at epoch " + std::to_string(epoch));
          }
          tape.backward(loss);
          return l;
        },
        opt, cfg.accumulation);
    EpochReport r{epoch, stats.mean_loss, g,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    reports.push_back(r);
    if (on_epoch) on_epoch(r);
  }
  return reports;
}

void save_model(const std::filesystem::path& dir, BiStreamNet<float>& net) {
  save_checkpoint(dir, net.parameters());
  KeyValues kv = net.config().to_key_values();
  kv["gamma"] = std::to_string(net.gamma());
  write_file_atomic(dir / "model.txt", format_key_values(kv));
}

BiStreamNet<float> load_model(const std::filesystem::path& dir) {
  KeyValues kv = parse_key_values(read_file(dir / "model.txt"), (dir / "model.txt").string());
  float gamma = 1.0f;
  if (auto it = kv.find("gamma"); it != kv.end()) {
    gamma = std::stof(it->second);
    kv.erase(it);
  }
  Rng rng(0);
  BiStreamNet<float> net(NetConfig::from_key_values(kv), rng);
  load_checkpoint(dir, net.parameters());
  net.set_gamma(gamma);
  return net;
}

template class BiStreamNet<float>;
template class BiStreamNet<double>;
template std::vector<EpochReport> train_recognizer(BiStreamNet<float>&, const std::vector<VideoSample>&,
                                                   const TrainConfig&, const std::function<void(const EpochReport&)>&);
template std::vector<EpochReport> train_recognizer(BiStreamNet<double>&, const std::vector<VideoSample>&,
                                                   const TrainConfig&, const std::function<void(const EpochReport&)>&);
template int predict(BiStreamNet<float>&, const VideoSample&);
template int predict(BiStreamNet<double>&, const VideoSample&);
template double recognition_accuracy(BiStreamNet<float>&, const std::vector<VideoSample>&, std::vector<int>*);
template double recognition_accuracy(BiStreamNet<double>&, const std::vector<VideoSample>&, std::vector<int>*);

}  // namespace fgd
