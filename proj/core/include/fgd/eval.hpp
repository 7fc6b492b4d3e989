#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fgd {

/// Frame span [start, end) carrying a class label.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  int label = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

void validate(const Segment& s);

double frame_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Span IoU, class ignored.
double segment_iou(const Segment& a, const Segment& b);

struct F1Result {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t matches = 0;
  std::size_t predictions = 0;
  std::size_t truths = 0;
  double mean_matched_iou = 0;  // 0 without matches
};

/// Greedy one-to-one matching: same-class pairs with IoU >= threshold taken
/// in descending IoU order (ties: earlier prediction, then earlier truth).
/// Segments whose label equals `background` (if >= 0) are dropped first.
F1Result f1_at_iou(std::vector<Segment> pred, std::vector<Segment> truth, double threshold, int background = -1);

/// Pooled counts over several videos, F1 computed from the totals.
F1Result f1_at_iou_pooled(const std::vector<std::vector<Segment>>& pred,
                          const std::vector<std::vector<Segment>>& truth, double threshold, int background = -1);

/// K x K row-major percentages of class a -> class b between consecutive
/// segments of each video. Rows without outgoing transitions stay zero.
std::vector<double> transition_matrix(const std::vector<std::vector<Segment>>& videos, std::size_t classes);

std::string transition_matrix_csv(const std::vector<double>& m, const std::vector<std::string>& class_names);

/// Maximal runs of equal labels; background runs omitted when background >= 0.
std::vector<Segment> extract_segments(const std::vector<int>& labels, int background = -1);

}  // namespace fgd
