#include "spotting/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace spotting {

namespace {

int round_half_up(double x) {
  return static_cast<int>(std::floor(x + 0.5));
}

}  // namespace

PaddedGroundTruthSet pad_ground_truth(const std::vector<GroundTruthLabel>& gts,
                                      std::size_t num_queries) {
  if (gts.size() > num_queries) {
    throw std::invalid_argument(
        "pad_ground_truth: " + std::to_string(gts.size()) +
        " labels exceed " + std::to_string(num_queries) + " queries");
  }
  PaddedGroundTruthSet padded;
  padded.slots.reserve(num_queries);
  for (const auto& g : gts) padded.slots.emplace_back(g);
  padded.slots.resize(num_queries, std::nullopt);
  padded.num_real = gts.size();
  return padded;
}

double class_cost(const std::vector<double>& target,
                  const std::vector<double>& scores) {
  if (target.size() != scores.size()) {
    throw std::invalid_argument("class_cost: length mismatch " +
                                std::to_string(target.size()) + " vs " +
                                std::to_string(scores.size()));
  }
  double agreement = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    agreement += target[k] * scores[k] + (1.0 - target[k]) * (1.0 - scores[k]);
  }
  return -agreement / static_cast<double>(target.size());
}

double time_cost(double t, double t_hat) {
  if (t < 0.0 || t > 1.0 || t_hat < 0.0 || t_hat > 1.0) {
    throw std::invalid_argument("time_cost: times must be in [0,1], got " +
                                std::to_string(t) + ", " +
                                std::to_string(t_hat));
  }
  return std::abs(t - t_hat);
}

CostMatrix build_cost_matrix(const PaddedGroundTruthSet& padded,
                             const std::vector<Prediction>& preds,
                             double lambda_time) {
  if (padded.size() != preds.size()) {
    throw std::invalid_argument("build_cost_matrix: " +
                                std::to_string(padded.size()) + " slots vs " +
                                std::to_string(preds.size()) + " predictions");
  }
  if (lambda_time < 0.0) {
    throw std::invalid_argument("build_cost_matrix: lambda_time must be >= 0");
  }
  CostMatrix m;
  m.n = padded.size();
  m.lambda_time = lambda_time;
  m.values.assign(m.n * m.n, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    if (padded.is_phi(i)) continue;  // phi rows stay identically zero
    const auto& gt = *padded.slots[i];
    for (std::size_t j = 0; j < m.n; ++j) {
      m.at(i, j) = class_cost(gt.class_vector, preds[j].scores) +
                   lambda_time * time_cost(gt.time_norm, preds[j].time_norm);
    }
  }
  return m;
}

Assignment hungarian_solve(const CostMatrix& matrix) {
  const std::size_t n = matrix.n;
  for (double v : matrix.values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("hungarian_solve: non-finite cost entry");
    }
  }
  // Jonker-Volgenant style potentials with 1-based sentinel column 0.
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);  // column -> row (1-based)
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<std::size_t> way(n + 1, 0);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = matrix.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment result;
  result.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) result.permutation[match[j] - 1] = j - 1;
  result.total_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    result.total_cost += matrix.at(i, result.permutation[i]);
  return result;
}

Assignment assign_labels(const std::vector<GroundTruthLabel>& gts,
                         const std::vector<Prediction>& preds,
                         double lambda_time, int total_frames) {
  PaddedGroundTruthSet padded = pad_ground_truth(gts, preds.size());
  CostMatrix matrix = build_cost_matrix(padded, preds, lambda_time);
  Assignment result = hungarian_solve(matrix);
  result.pairs.reserve(padded.size());
  for (std::size_t i = 0; i < padded.size(); ++i) {
    PairRecord rec;
    rec.gt_slot = i;
    rec.prediction = result.permutation[i];
    rec.is_phi = padded.is_phi(i);
    if (!rec.is_phi) {
      const auto& gt = *padded.slots[i];
      const auto& pred = preds[rec.prediction];
      rec.class_cost = class_cost(gt.class_vector, pred.scores);
      rec.time_cost = time_cost(gt.time_norm, pred.time_norm);
      rec.frame_offset =
          round_half_up(pred.time_norm * total_frames) - gt.frame_index;
    }
    result.pairs.push_back(rec);
  }
  return result;
}

}  // namespace spotting
