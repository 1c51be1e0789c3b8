#include "spotting/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace spotting {

int frame_time(double t_hat, int total_frames) {
  const int frame = static_cast<int>(std::floor(t_hat * total_frames + 0.5));
  return std::clamp(frame, 1, total_frames);
}

Matrix aggregate_scores(const std::vector<Prediction>& preds,
                        int total_frames) {
  if (preds.empty()) {
    throw std::invalid_argument("aggregate_scores: no predictions");
  }
  const std::size_t nc = preds[0].scores.size();
  Matrix out(static_cast<std::size_t>(total_frames), nc, 0.0);
  for (const Prediction& p : preds) {
    const int frame = frame_time(p.time_norm, total_frames);
    for (std::size_t k = 0; k < nc; ++k) {
      double& cell = out.at(static_cast<std::size_t>(frame - 1), k);
      cell = std::max(cell, p.scores[k]);
    }
  }
  return out;
}

Matrix overlap_fuse(const std::vector<std::pair<int, Matrix>>& window_scores,
                    int total_frames) {
  if (window_scores.empty()) {
    throw std::invalid_argument("overlap_fuse: no windows");
  }
  const std::size_t nc = window_scores[0].second.cols;
  Matrix sum(static_cast<std::size_t>(total_frames), nc, 0.0);
  std::vector<int> coverage(static_cast<std::size_t>(total_frames), 0);
  for (const auto& [offset, scores] : window_scores) {
    if (scores.cols != nc) {
      throw std::invalid_argument("overlap_fuse: class count mismatch");
    }
    for (std::size_t r = 0; r < scores.rows; ++r) {
      const long frame = offset + static_cast<long>(r);
      if (frame < 0 || frame >= total_frames) {
        throw std::invalid_argument("overlap_fuse: window exceeds video");
      }
      coverage[frame] += 1;
      for (std::size_t k = 0; k < nc; ++k)
        sum.at(static_cast<std::size_t>(frame), k) += scores.at(r, k);
    }
  }
  for (int f = 0; f < total_frames; ++f) {
    if (coverage[f] == 0) {
      throw std::invalid_argument("overlap_fuse: frame " + std::to_string(f) +
                                  " not covered by any window");
    }
    for (std::size_t k = 0; k < nc; ++k)
      sum.at(static_cast<std::size_t>(f), k) /= coverage[f];
  }
  return sum;
}

Matrix soft_nms(const Matrix& scores, int window, double decay) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("soft_nms: window must be odd and >= 1, got " +
                                std::to_string(window));
  }
  if (decay <= 0.0 || decay > 1.0) {
    throw std::invalid_argument("soft_nms: decay must be in (0,1]");
  }
  const int half = window / 2;
  const int t = static_cast<int>(scores.rows);
  Matrix out = scores;
  for (std::size_t k = 0; k < scores.cols; ++k) {
    for (int f = 0; f < t; ++f) {
      double window_max = -std::numeric_limits<double>::infinity();
      for (int o = std::max(0, f - half); o <= std::min(t - 1, f + half); ++o)
        window_max = std::max(window_max, scores.at(o, k));
      if (scores.at(f, k) < window_max)
        out.at(static_cast<std::size_t>(f), k) *= decay;
    }
  }
  return out;
}

std::vector<Detection> extract_detections(const Matrix& scores,
                                          double threshold) {
  if (threshold < 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("extract_detections: threshold must be in "
                                "[0,1)");
  }
  std::vector<Detection> dets;
  for (std::size_t f = 0; f < scores.rows; ++f)
    for (std::size_t k = 0; k < scores.cols; ++k)
      if (scores.at(f, k) > threshold)
        dets.push_back({static_cast<int>(f) + 1, static_cast<int>(k),
                        scores.at(f, k)});
  std::sort(dets.begin(), dets.end(), [](const Detection& a,
                                         const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.cls < b.cls;
  });
  return dets;
}

std::optional<ClassApStats> average_precision(
    const std::vector<EvalInstance>& instances, int cls, int delta) {
  if (delta < 0) {
    throw std::invalid_argument("average_precision: delta must be >= 0");
  }
  struct Entry {
    double score;
    int frame;
    std::size_t instance;
  };
  std::vector<Entry> entries;
  int num_gt = 0;
  std::vector<std::vector<int>> gt_frames(instances.size());
  for (std::size_t v = 0; v < instances.size(); ++v) {
    for (const EvalGt& g : instances[v].ground_truth)
      if (g.cls == cls) {
        gt_frames[v].push_back(g.frame);
        ++num_gt;
      }
    for (const Detection& d : instances[v].detections)
      if (d.cls == cls) entries.push_back({d.score, d.frame, v});
  }
  if (num_gt == 0) return std::nullopt;

  std::sort(entries.begin(), entries.end(), [](const Entry& a,
                                               const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.instance != b.instance) return a.instance < b.instance;
    return a.frame < b.frame;
  });

  std::vector<std::vector<bool>> used(instances.size());
  for (std::size_t v = 0; v < instances.size(); ++v)
    used[v].assign(gt_frames[v].size(), false);

  ClassApStats stats;
  stats.ground_truth_count = num_gt;
  double ap = 0.0;
  int tp = 0, fp = 0;
  for (const Entry& e : entries) {
    // nearest unmatched ground truth within delta, earlier frame on ties
    int best = -1;
    int best_dist = delta + 1;
    const auto& frames = gt_frames[e.instance];
    for (std::size_t g = 0; g < frames.size(); ++g) {
      if (used[e.instance][g]) continue;
      const int dist = std::abs(frames[g] - e.frame);
      if (dist > delta) continue;
      if (dist < best_dist ||
          (dist == best_dist && best >= 0 &&
           frames[g] < frames[static_cast<std::size_t>(best)])) {
        best = static_cast<int>(g);
        best_dist = dist;
      }
    }
    if (best >= 0) {
      used[e.instance][static_cast<std::size_t>(best)] = true;
      ++tp;
      stats.sum_abs_offset +=
          std::abs(frames[static_cast<std::size_t>(best)] - e.frame);
      const double precision = static_cast<double>(tp) / (tp + fp);
      ap += precision / num_gt;  // recall step of 1/num_gt per true positive
    } else {
      ++fp;
    }
  }
  stats.ap = ap;
  stats.true_positives = tp;
  stats.false_positives = fp;
  return stats;
}

EvalReport map_at(const std::vector<EvalInstance>& instances, int num_classes,
                  const std::vector<int>& deltas) {
  EvalReport report;
  for (int delta : deltas) {
    double ap_sum = 0.0;
    int evaluable = 0;
    int tp = 0, fp = 0, matched = 0;
    double offset_sum = 0.0;
    for (int cls = 0; cls < num_classes; ++cls) {
      auto stats = average_precision(instances, cls, delta);
      if (!stats) continue;
      report.per_class_ap[delta][cls] = stats->ap;
      ap_sum += stats->ap;
      ++evaluable;
      tp += stats->true_positives;
      fp += stats->false_positives;
      matched += stats->true_positives;
      offset_sum += stats->sum_abs_offset;
    }
    if (evaluable == 0) {
      throw std::invalid_argument("map_at: no evaluable class");
    }
    report.map[delta] = ap_sum / evaluable;
    report.true_positives[delta] = tp;
    report.false_positives[delta] = fp;
    report.mean_abs_offset[delta] = matched > 0 ? offset_sum / matched : 0.0;
  }
  return report;
}

std::vector<double> score_gap(const Matrix& scores,
                              const std::vector<EvalGt>& gts, int num_classes,
                              int delta) {
  if (delta < 1) {
    throw std::invalid_argument("score_gap: delta must be >= 1");
  }
  const int t = static_cast<int>(scores.rows);
  std::vector<double> gap_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<int> gap_count(static_cast<std::size_t>(num_classes), 0);
  for (const EvalGt& g : gts) {
    bool isolated = true;
    for (const EvalGt& other : gts) {
      if (&other == &g) continue;
      if (std::abs(other.frame - g.frame) <= delta) {
        isolated = false;
        break;
      }
    }
    if (!isolated) continue;
    const int lo = std::max(1, g.frame - delta);
    const int hi = std::min(t, g.frame + delta);
    if (hi - lo + 1 < 2) continue;  // need two frames to form a gap
    double first = -1.0, second = -1.0;
    for (int f = lo; f <= hi; ++f) {
      const double s = scores.at(static_cast<std::size_t>(f - 1),
                                 static_cast<std::size_t>(g.cls));
      if (s > first) {
        second = first;
        first = s;
      } else if (s > second) {
        second = s;
      }
    }
    gap_sum[static_cast<std::size_t>(g.cls)] += first - second;
    gap_count[static_cast<std::size_t>(g.cls)] += 1;
  }
  std::vector<double> out(static_cast<std::size_t>(num_classes),
                          std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < num_classes; ++k)
    if (gap_count[k] > 0) out[k] = gap_sum[k] / gap_count[k];
  return out;
}

}  // namespace spotting
