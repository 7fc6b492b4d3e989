#include "fgd/eval.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include "fgd/tensor.hpp"

namespace fgd {

void validate(const Segment& s) {
  if (s.start >= s.end) {
    throw ContractError("segment [" + std::to_string(s.start) + "," + std::to_string(s.end) + ") is empty");
  }
}

double frame_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) {
    throw ContractError("frame_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " frames");
  }
  if (truth.empty()) return 1.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double segment_iou(const Segment& a, const Segment& b) {
  validate(a);
  validate(b);
  const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

std::vector<Segment> drop_label(std::vector<Segment> v, int background) {
  if (background >= 0) std::erase_if(v, [&](const Segment& s) { return s.label == background; });
  return v;
}

struct Counts {
  std::size_t tp = 0, np = 0, nt = 0;
  double iou_sum = 0;
};

Counts match(const std::vector<Segment>& pred, const std::vector<Segment>& truth, double threshold) {
  struct Cand {
    double iou;
    std::size_t p, t;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < pred.size(); ++p)
    for (std::size_t t = 0; t < truth.size(); ++t) {
      if (pred[p].label != truth[t].label) continue;
      const double iou = segment_iou(pred[p], truth[t]);
      if (iou >= threshold) cands.push_back({iou, p, t});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(b.iou, a.p, a.t) < std::tie(a.iou, b.p, b.t);
  });
  std::vector<bool> used_p(pred.size()), used_t(truth.size());
  Counts c{0, pred.size(), truth.size(), 0.0};
  for (const auto& cand : cands) {
    if (used_p[cand.p] || used_t[cand.t]) continue;
    used_p[cand.p] = used_t[cand.t] = true;
    ++c.tp;
    c.iou_sum += cand.iou;
  }
  return c;
}

F1Result finish(const Counts& c) {
  F1Result r;
  r.matches = c.tp;
  r.predictions = c.np;
  r.truths = c.nt;
  r.mean_matched_iou = c.tp ? c.iou_sum / static_cast<double>(c.tp) : 0.0;
  if (c.np == 0 && c.nt == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  r.precision = c.np ? static_cast<double>(c.tp) / static_cast<double>(c.np) : 0.0;
  r.recall = c.nt ? static_cast<double>(c.tp) / static_cast<double>(c.nt) : 0.0;
  r.f1 = c.tp ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ContractError("f1_at_iou: threshold must be in (0,1], got " + std::to_string(threshold));
  }
}

}  // namespace

F1Result f1_at_iou(std::vector<Segment> pred, std::vector<Segment> truth, double threshold, int background) {
  check_threshold(threshold);
  return finish(match(drop_label(std::move(pred), background), drop_label(std::move(truth), background), threshold));
}

F1Result f1_at_iou_pooled(const std::vector<std::vector<Segment>>& pred,
                          const std::vector<std::vector<Segment>>& truth, double threshold, int background) {
  check_threshold(threshold);
  if (pred.size() != truth.size()) throw ContractError("f1_at_iou_pooled: video count mismatch");
  Counts total;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    const Counts c = match(drop_label(pred[v], background), drop_label(truth[v], background), threshold);
    total.tp += c.tp;
    total.np += c.np;
    total.nt += c.nt;
    total.iou_sum += c.iou_sum;
  }
  return finish(total);
}

std::vector<double> transition_matrix(const std::vector<std::vector<Segment>>& videos, std::size_t classes) {
  std::vector<double> m(classes * classes, 0.0);
  for (const auto& segs : videos) {
    for (std::size_t i = 1; i < segs.size(); ++i) {
      const int a = segs[i - 1].label, b = segs[i].label;
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= classes || static_cast<std::size_t>(b) >= classes) {
        throw ContractError("transition_matrix: label out of range");
      }
      if (segs[i].start < segs[i - 1].start) throw ContractError("transition_matrix: segments not sorted by start");
      if (a != b) m[static_cast<std::size_t>(a) * classes + static_cast<std::size_t>(b)] += 1.0;
    }
  }
  for (std::size_t a = 0; a < classes; ++a) {
    double row = 0;
    for (std::size_t b = 0; b < classes; ++b) row += m[a * classes + b];
    if (row > 0)
      for (std::size_t b = 0; b < classes; ++b) m[a * classes + b] *= 100.0 / row;
  }
  return m;
}

std::string transition_matrix_csv(const std::vector<double>& m, const std::vector<std::string>& names) {
  const std::size_t k = names.size();
  if (m.size() != k * k) throw ContractError("transition_matrix_csv: matrix does not match class names");
  std::ostringstream os;
  os << "from";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  os.setf(std::ios::fixed);
  os.precision(2);
  for (std::size_t a = 0; a < k; ++a) {
    os << names[a];
    for (std::size_t b = 0; b < k; ++b) os << ',' << m[a * k + b];
    os << '\n';
  }
  return os.str();
}

std::vector<Segment> extract_segments(const std::vector<int>& labels, int background) {
  if (labels.empty()) throw ContractError("extract_segments: empty label sequence");
  std::vector<Segment> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    if (i == labels.size() || labels[i] != labels[start]) {
      if (background < 0 || labels[start] != background) out.push_back({start, i, labels[start]});
      start = i;
    }
  }
  return out;
}

}  // namespace fgd
