#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fgd/attention.hpp"
#include "fgd/video.hpp"

namespace fgd {

/// Rows of the ablation table, in order.
enum class StreamVariant { raw_frame, pose_stream, object_map, bi_stream, bi_stream_att };

const char* variant_name(StreamVariant v);
StreamVariant parse_variant(const std::string& name);
std::vector<StreamVariant> all_variants();

struct NetConfig {
  std::size_t classes = 6;
  std::size_t hidden = 64;
  bool pose = true;
  std::size_t pose_channels = 4;  // 3: RGB only, 4: RGB + joint map
  bool object = true;
  bool attention = true;  // non-local blocks + temporal attention
  std::size_t stem_pool = 2;
  std::vector<std::size_t> widths{8, 16, 32};

  static NetConfig for_variant(StreamVariant v);
  void validate() const;
  KeyValues to_key_values() const;
  static NetConfig from_key_values(const KeyValues& kv);
};

/// Pose stream (conv stack + non-local blocks) on RGB + joint map, object
/// stream (three convs) on the object map, per-frame concatenation into one
/// LSTM, temporal attention over its states, linear class head.
template <typename T>
class BiStreamNet {
 public:
  BiStreamNet(const NetConfig& cfg, Rng& rng);

  /// Class scores [K] for one clip (subsampled to 40 frames first).
  Var<T> logits(Tape<T>& tape, const VideoSample& sample);
  /// Softmax probabilities; no gradient bookkeeping kept.
  std::vector<double> classify(const VideoSample& sample);

  /// Non-local residual weight of every block.
  void set_gamma(T g);
  T gamma() const;

  void collect(ParamList<T>& out);
  ParamList<T> parameters();
  const NetConfig& config() const { return cfg_; }

  /// Last pose-stream activation [T,C,h,w] after the final non-local block
  /// (or conv stage without attention), captured by the latest logits().
  const Tensor<T>& last_pose_features() const { return last_features_; }
  /// Temporal attention weights [T] from the latest logits(); empty without attention.
  const Tensor<T>& last_temporal_weights() const { return last_weights_; }

  std::vector<Conv2dLayer<T>> pose_convs, object_convs;
  std::vector<NonLocalBlock<T>> nonlocal;  // after pose stages 2 and 3
  LstmCell<T> lstm;
  TemporalAttention<T> temporal;
  Linear<T> head;

 private:
  Var<T> stream(Tape<T>& tape, Var<T> x, std::vector<Conv2dLayer<T>>& convs, bool with_nonlocal);

  NetConfig cfg_;
  Tensor<T> last_features_;
  Tensor<T> last_weights_;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t gamma_ramp = 10;
  std::size_t accumulation = 12;
  double lr = 1e-3;
  std::uint64_t seed = 7;
  // random temporal crop per visit, so the classifier also sees partial
  // activities as a sliding window does
  double crop_prob = 0.5;
  std::size_t min_crop = 5;
};

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double gamma = 0;
  double seconds = 0;
};

/// Phase 1 (gamma = 0) for epochs - gamma_ramp epochs, then the ramp phase
/// with gamma_schedule. Returns one report per epoch.
template <typename T>
std::vector<EpochReport> train_recognizer(BiStreamNet<T>& net, const std::vector<VideoSample>& data,
                                          const TrainConfig& cfg,
                                          const std::function<void(const EpochReport&)>& on_epoch = {});

template <typename T>
int predict(BiStreamNet<T>& net, const VideoSample& s);

/// Argmax with ties toward the lowest index.
int argmax(const std::vector<double>& p);

template <typename T>
double recognition_accuracy(BiStreamNet<T>& net, const std::vector<VideoSample>& data,
                            std::vector<int>* predictions = nullptr);

/// net.cfg as config.txt plus parameters, loadable with load_model.
void save_model(const std::filesystem::path& dir, BiStreamNet<float>& net);
BiStreamNet<float> load_model(const std::filesystem::path& dir);

}  // namespace fgd
