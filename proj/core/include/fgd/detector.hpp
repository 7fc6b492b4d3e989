#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fgd/eval.hpp"
#include "fgd/streams.hpp"

namespace fgd {

struct DetectorConfig {
  std::size_t window = 11;
  std::size_t stride = 3;

  /// 5 <= window <= 40, 1 <= stride <= window.
  void validate() const;
};

struct ScoredWindow {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<double> probs;
};

/// Window starts 0, stride, 2*stride, ... plus a tail window clamped to end
/// at T when the regular windows stop short. Windows longer than the video
/// shrink to [0,T).
std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t frames, const DetectorConfig& cfg);

/// Probabilities for frames [start, end) of one video.
using WindowClassifier = std::function<std::vector<double>(std::size_t start, std::size_t end)>;

std::vector<ScoredWindow> slide_and_score(std::size_t frames, const DetectorConfig& cfg, const WindowClassifier& classify);

template <typename T>
std::vector<ScoredWindow> slide_and_score(BiStreamNet<T>& net, const VideoSample& video, const DetectorConfig& cfg);

/// Per frame: mean probability over covering windows, then argmax (ties to
/// the lowest class). Throws ContractError on an uncovered frame.
std::vector<int> fuse_labels(const std::vector<ScoredWindow>& windows, std::size_t frames);

struct Detection {
  std::vector<int> labels;        // per frame
  std::vector<Segment> segments;  // background dropped when requested
};

Detection detect(std::size_t frames, const DetectorConfig& cfg, const WindowClassifier& classify, int background = -1);

/// Memoizes window classifications of one video by span, so a grid search
/// classifies each distinct window once.
class WindowCache {
 public:
  explicit WindowCache(WindowClassifier inner) : inner_(std::move(inner)) {}
  std::vector<double> operator()(std::size_t start, std::size_t end);
  std::size_t evaluations() const { return evaluations_; }

 private:
  WindowClassifier inner_;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> memo_;
  std::size_t evaluations_ = 0;
};

template <typename T>
WindowClassifier net_classifier(BiStreamNet<T>& net, const VideoSample& video);

struct GridPoint {
  std::size_t window = 0;
  std::size_t stride = 0;
  double f1 = 0;
};

struct GridResult {
  DetectorConfig best;
  double best_f1 = -1;
  std::vector<GridPoint> surface;
};

struct GridVideo {
  std::size_t frames = 0;
  WindowClassifier classify;
  std::vector<Segment> truth;
};

/// Every window in `windows` with every stride 1..window; objective is pooled
/// F1 at `iou` over all videos. Ties go to the smaller window, then stride.
GridResult grid_search(const std::vector<GridVideo>& videos, const std::vector<std::size_t>& windows, double iou,
                       int background);

/// Pooled F1 of one configuration.
double evaluate_config(const std::vector<GridVideo>& videos, const DetectorConfig& cfg, double iou, int background);

std::string surface_csv(const std::vector<GridPoint>& surface);

}  // namespace fgd
