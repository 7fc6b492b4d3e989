#include "fgd/detector.hpp"

#include <algorithm>
#include <sstream>

namespace fgd {

void DetectorConfig::validate() const {
  if (window < 5 || window > 40) throw ContractError("detector: window " + std::to_string(window) + " outside [5,40]");
  if (stride < 1 || stride > window) {
    throw ContractError("detector: stride " + std::to_string(stride) + " outside [1," + std::to_string(window) + "]");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t frames, const DetectorConfig& cfg) {
  if (frames == 0) throw ContractError("detector: empty video");
  if (cfg.window == 0 || cfg.stride == 0) throw ContractError("detector: window and stride must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (cfg.window >= frames) return {{0, frames}};
  std::size_t start = 0;
  for (; start + cfg.window <= frames; start += cfg.stride) spans.emplace_back(start, start + cfg.window);
  if (spans.back().second < frames) spans.emplace_back(frames - cfg.window, frames);
  return spans;
}

std::vector<ScoredWindow> slide_and_score(std::size_t frames, const DetectorConfig& cfg, const WindowClassifier& classify) {
  std::vector<ScoredWindow> out;
  for (const auto& [s, e] : window_spans(frames, cfg)) out.push_back({s, e, classify(s, e)});
  return out;
}

template <typename T>
WindowClassifier net_classifier(BiStreamNet<T>& net, const VideoSample& video) {
  return [&net, &video](std::size_t s, std::size_t e) { return net.classify(slice_frames(video, s, e)); };
}

template <typename T>
std::vector<ScoredWindow> slide_and_score(BiStreamNet<T>& net, const VideoSample& video, const DetectorConfig& cfg) {
  return slide_and_score(video.length(), cfg, net_classifier(net, video));
}

std::vector<int> fuse_labels(const std::vector<ScoredWindow>& windows, std::size_t frames) {
  if (frames == 0) throw ContractError("fuse_labels: empty video");
  std::vector<std::vector<double>> acc(frames);
  std::vector<std::size_t> count(frames, 0);
  std::size_t k = 0;
  for (const auto& w : windows) {
    if (w.start >= w.end || w.end > frames) throw ContractError("fuse_labels: window outside the video");
    if (k == 0) k = w.probs.size();
    if (w.probs.size() != k || k == 0) throw ContractError("fuse_labels: inconsistent class count");
    for (std::size_t f = w.start; f < w.end; ++f) {
      if (acc[f].empty()) acc[f].assign(k, 0.0);
      for (std::size_t c = 0; c < k; ++c) acc[f][c] += w.probs[c];
      ++count[f];
    }
  }
  std::vector<int> labels(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    if (count[f] == 0) throw ContractError("fuse_labels: frame " + std::to_string(f) + " is not covered by any window");
    for (auto& v : acc[f]) v /= static_cast<double>(count[f]);
    labels[f] = argmax(acc[f]);
  }
  return labels;
}

Detection detect(std::size_t frames, const DetectorConfig& cfg, const WindowClassifier& classify, int background) {
  Detection d;
  d.labels = fuse_labels(slide_and_score(frames, cfg, classify), frames);
  d.segments = extract_segments(d.labels, background);
  return d;
}

std::vector<double> WindowCache::operator()(std::size_t start, std::size_t end) {
  const auto key = std::make_pair(start, end);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  ++evaluations_;
  return memo_[key] = inner_(start, end);
}

double evaluate_config(const std::vector<GridVideo>& videos, const DetectorConfig& cfg, double iou, int background) {
  std::vector<std::vector<Segment>> pred, truth;
  for (const auto& v : videos) {
    pred.push_back(detect(v.frames, cfg, v.classify, background).segments);
    truth.push_back(v.truth);
  }
  return f1_at_iou_pooled(pred, truth, iou, background).f1;
}

GridResult grid_search(const std::vector<GridVideo>& videos, const std::vector<std::size_t>& windows, double iou,
                       int background) {
  if (videos.empty()) throw ContractError("grid_search: no validation videos");
  if (windows.empty()) throw ContractError("grid_search: empty window set");
  std::vector<std::size_t> order = windows;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  GridResult r;
  for (std::size_t w : order) {
    for (std::size_t s = 1; s <= w; ++s) {
      const DetectorConfig cfg{w, s};
      cfg.validate();
      const double f1 = evaluate_config(videos, cfg, iou, background);
      r.surface.push_back({w, s, f1});
      if (f1 > r.best_f1) {
        r.best_f1 = f1;
        r.best = cfg;
      }
    }
  }
  return r;
}

std::string surface_csv(const std::vector<GridPoint>& surface) {
  std::ostringstream os;
  os.precision(17);
  os << "window,stride,f1\n";
  for (const auto& p : surface) os << p.window << ',' << p.stride << ',' << p.f1 << '\n';
  return os.str();
}

template WindowClassifier net_classifier(BiStreamNet<float>&, const VideoSample&);
template WindowClassifier net_classifier(BiStreamNet<double>&, const VideoSample&);
template std::vector<ScoredWindow> slide_and_score(BiStreamNet<float>&, const VideoSample&, const DetectorConfig&);
template std::vector<ScoredWindow> slide_and_score(BiStreamNet<double>&, const VideoSample&, const DetectorConfig&);

}  // namespace fgd
