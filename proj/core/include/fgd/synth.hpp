#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgd/nn.hpp"
#include "fgd/video.hpp"

namespace fgd {

enum ActivityClass : int {
  kBackground = 0,
  kReach = 1,
  kRetract = 2,
  kHandIn = 3,
  kInspectProduct = 4,
  kInspectShelf = 5,
};

const std::vector<std::string>& class_names();

struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t classes = 6;
  std::size_t min_length = 8;
  std::size_t max_length = 40;
  double joint_radius = 3.0;
  std::size_t object_box = 12;
  double fps = 15.0;
  std::uint64_t seed = 7;
  double jitter_px = 1.0;     // per-joint Gaussian jitter
  double pixel_noise = 0.02;  // per-pixel Gaussian noise
  double object_prob = 0.5;   // object presence for reach / retract / hand-in

  void validate() const;
  KeyValues to_key_values() const;
  static SynthConfig from_key_values(const KeyValues& kv);
};

/// splitmix64 over (master, split, index); splits get disjoint streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t split, std::uint64_t index);

/// One trimmed clip of class `cls` starting from that class's natural
/// predecessor pose. Deterministic in (cls, cfg, seed).
VideoSample gen_sequence(int cls, const SynthConfig& cfg, std::uint64_t seed);

struct SynthFrame {
  Tensor<float> image;  // [3,H,W]
  JointSet joints;
  int label = 0;
};

/// One frame at a random position of a random-class clip.
SynthFrame gen_frame(const SynthConfig& cfg, std::uint64_t seed);

struct ActivityScript {
  std::vector<std::pair<int, std::size_t>> entries;  // (class, duration)
  std::size_t total_length() const;
};

/// Row-major K x K probabilities with a zero diagonal, following the order
/// in which shelf activities naturally occur.
std::vector<double> natural_transitions();

/// Markov chain over classes: first entry `first` (or drawn uniformly when
/// negative), durations uniform in [min_dur, max_dur].
ActivityScript sample_script(std::size_t entries, const std::vector<double>& transitions, std::size_t classes,
                             std::size_t min_dur, std::size_t max_dur, Rng& rng, int first = -1);

struct UntrimmedVideo {
  VideoSample video;  // label -1
  std::vector<Segment> segments;
};

/// Clips chained with continuous joint trajectories; segments follow the
/// script exactly.
UntrimmedVideo gen_untrimmed(const ActivityScript& script, const SynthConfig& cfg, std::uint64_t seed);

/// Balanced split: sample i has class i mod K and seed derive_seed(seed, split, i).
std::vector<VideoSample> gen_split(const SynthConfig& cfg, std::size_t n, std::uint64_t split);

struct UntrimmedSetConfig {
  std::size_t videos = 10;
  std::size_t segments = 6;
  std::size_t min_duration = 15;
  std::size_t max_duration = 35;
};
std::vector<UntrimmedVideo> gen_untrimmed_set(const SynthConfig& cfg, const UntrimmedSetConfig& set,
                                              std::uint64_t split);

inline constexpr std::uint64_t kTrainSplit = 1;
inline constexpr std::uint64_t kTestSplit = 2;
inline constexpr std::uint64_t kVideoSplit = 3;
inline constexpr std::uint64_t kHeatmapSplit = 4;

/// Writes <out>/train, <out>/test (and <out>/videos when n_videos > 0),
/// each with a config.txt snapshot of `cfg`.
void gen_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_test, const std::filesystem::path& out,
                 const UntrimmedSetConfig* videos = nullptr);

}  // namespace fgd
