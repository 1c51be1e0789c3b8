#pragma once

#include <optional>
#include <vector>

#include "spotting/types.hpp"

namespace spotting {

// Ground truth padded with no-event slots up to the query count.
struct PaddedGroundTruthSet {
  std::vector<std::optional<GroundTruthLabel>> slots;  // nullopt = phi
  std::size_t num_real = 0;

  std::size_t size() const { return slots.size(); }
  bool is_phi(std::size_t i) const { return !slots[i].has_value(); }
};

struct CostMatrix {
  std::size_t n = 0;  // square, row = padded ground truth, col = prediction
  std::vector<double> values;
  double lambda_time = 10.0;

  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

struct PairRecord {
  std::size_t gt_slot = 0;
  std::size_t prediction = 0;
  bool is_phi = true;
  double class_cost = 0.0;
  double time_cost = 0.0;
  int frame_offset = 0;  // round(t_hat * T) - frame_index, non-phi pairs only
};

struct Assignment {
  std::vector<std::size_t> permutation;  // gt slot i -> prediction index
  double total_cost = 0.0;
  std::vector<PairRecord> pairs;
};

PaddedGroundTruthSet pad_ground_truth(const std::vector<GroundTruthLabel>& gts,
                                      std::size_t num_queries);

// -(1/N_c) [ c^T chat + (1-c)^T (1-chat) ]
double class_cost(const std::vector<double>& target,
                  const std::vector<double>& scores);

// |t - t_hat|, both normalized to [0,1]
double time_cost(double t, double t_hat);

CostMatrix build_cost_matrix(const PaddedGroundTruthSet& padded,
                             const std::vector<Prediction>& preds,
                             double lambda_time);

// Minimum-cost perfect matching on a square matrix via the O(n^3)
// shortest-augmenting-path method. Deterministic scan order makes the result
// unique on tied inputs.
Assignment hungarian_solve(const CostMatrix& matrix);

// pad -> build -> solve, with per-pair cost and frame-offset records.
// total_frames is needed to express predicted times in frames.
Assignment assign_labels(const std::vector<GroundTruthLabel>& gts,
                         const std::vector<Prediction>& preds,
                         double lambda_time, int total_frames);

}  // namespace spotting
