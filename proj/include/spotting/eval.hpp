#pragma once

#include <map>
#include <optional>
#include <vector>

#include "spotting/types.hpp"

namespace spotting {

struct Detection {
  int frame = 1;      // in [1, T_video]
  int cls = 0;        // class index
  double score = 0.0;
};

// Ground truth flattened for evaluation: one entry per positive class.
struct EvalGt {
  int frame = 1;
  int cls = 0;
};

// Detections and ground truth for one video / clip.
struct EvalInstance {
  std::vector<Detection> detections;
  std::vector<EvalGt> ground_truth;
};

struct ClassApStats {
  double ap = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int ground_truth_count = 0;
  double sum_abs_offset = 0.0;  // over matched detections
};

struct EvalReport {
  // delta -> per-class AP (only classes with >= 1 ground-truth instance)
  std::map<int, std::map<int, double>> per_class_ap;
  std::map<int, double> map;  // delta -> mAP
  std::map<int, int> true_positives;
  std::map<int, int> false_positives;
  std::map<int, double> mean_abs_offset;  // frames, over matched detections
};

// round(t_hat * T) clamped to [1, T]; half-way values round up.
int frame_time(double t_hat, int total_frames);

// Per-frame elementwise max over predictions mapping to that frame (Eq. 10
// semantics); frames with no prediction stay zero. Returns T x N_c.
Matrix aggregate_scores(const std::vector<Prediction>& preds,
                        int total_frames);

// Mean of all windows covering each frame. Offsets are 0-based frame
// positions of each window's first row in the full video.
Matrix overlap_fuse(const std::vector<std::pair<int, Matrix>>& window_scores,
                    int total_frames);

// Per class, every frame that is not the maximum of its centered window is
// multiplied by decay. Window must be odd.
Matrix soft_nms(const Matrix& scores, int window, double decay);

// All (frame, class) cells with score > threshold, sorted by descending
// score with (frame, class) tie-break.
std::vector<Detection> extract_detections(const Matrix& scores,
                                          double threshold);

// All-point AP for one class at tolerance delta (frames). Detections are
// scanned in descending score; each matches the nearest unmatched ground
// truth of its class within delta, ties to the earlier frame. Matching is
// per instance. Returns nullopt when the class has no ground truth.
std::optional<ClassApStats> average_precision(
    const std::vector<EvalInstance>& instances, int cls, int delta);

EvalReport map_at(const std::vector<EvalInstance>& instances, int num_classes,
                  const std::vector<int>& deltas);

// Mean (highest - second highest) score of each ground truth's class within
// +-delta frames, per class; restricted to ground truths with no other label
// within the window. NaN marks classes without qualifying samples.
std::vector<double> score_gap(const Matrix& scores,
                              const std::vector<EvalGt>& gts, int num_classes,
                              int delta);

}  // namespace spotting
