#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fgd/eval.hpp"
#include "fgd/tensor.hpp"

namespace fgd {

/// (x,y) per joint in [0,1] image coordinates, ordered L/R shoulder,
/// L/R elbow, L/R wrist.
using JointSet = std::array<float, 12>;
inline constexpr std::size_t kJoints = 6;

void validate(const JointSet& q);

struct VideoSample {
  Tensor<float> frames;      // [T,3,H,W] in [0,1]
  Tensor<float> joint_map;   // [T,1,H,W] binary
  Tensor<float> object_map;  // [T,1,H,W] binary
  int label = 0;             // -1 for untrimmed videos
  double fps = 15.0;
  std::optional<Tensor<float>> joints;  // [T,12] ground truth, when known

  std::size_t length() const { return frames.dim(0); }
  std::size_t height() const { return frames.dim(2); }
  std::size_t width() const { return frames.dim(3); }
};

/// Throws ContractError on shape mismatches, non-binary maps or
/// out-of-range pixels.
void validate(const VideoSample& s, std::size_t classes);

/// Pixel of a normalized coordinate: floor(v * n), clamped to [0, n-1].
std::size_t to_pixel(float v, std::size_t n);

/// 1 where the pixel lies within `radius_px` (Euclidean) of any joint.
Tensor<float> build_joint_map(const JointSet& joints, std::size_t h, std::size_t w, double radius_px);

/// 1 inside the box_px square around each center (normalized coords).
Tensor<float> build_object_map(const std::vector<std::pair<float, float>>& centers, std::size_t h, std::size_t w,
                               std::size_t box_px);

/// Frame indices kept by repeated halving (0,2,4,...) while above `limit`.
std::vector<std::size_t> subsample_indices(std::size_t length, std::size_t limit = 40);
VideoSample subsample_sequence(const VideoSample& s, std::size_t limit = 40);

/// Frames [begin, end) of every per-frame tensor.
VideoSample slice_frames(const VideoSample& s, std::size_t begin, std::size_t end);

// On-disk layout: frames.fgt, jointmap.fgt, objmap.fgt, label.txt, optional
// joints.csv and segments.csv (start,end,class).
void save_sample(const std::filesystem::path& dir, const VideoSample& s,
                 const std::vector<Segment>* segments = nullptr);
VideoSample load_sample(const std::filesystem::path& dir);
std::vector<Segment> load_segments(const std::filesystem::path& dir);
std::string segments_csv(const std::vector<Segment>& segs);
std::vector<Segment> parse_segments_csv(const std::string& text, const std::string& context);

/// Sorted sample directories below a split root.
std::vector<std::filesystem::path> list_samples(const std::filesystem::path& root);

using KeyValues = std::map<std::string, std::string>;
std::string format_key_values(const KeyValues& kv);
KeyValues parse_key_values(const std::string& text, const std::string& context);

}  // namespace fgd
