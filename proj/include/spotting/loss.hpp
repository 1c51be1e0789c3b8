#pragma once

#include <vector>

#include "spotting/matcher.hpp"
#include "spotting/tensor.hpp"
#include "spotting/types.hpp"

namespace spotting {

struct LayerLoss {
  double class_loss = 0.0;
  double time_loss = 0.0;
  double total = 0.0;
};

struct LossBreakdown {
  double class_loss = 0.0;
  double time_loss = 0.0;
  double total = 0.0;
  std::vector<LayerLoss> layers;
};

// (c - chat)^2 * [-c ln(chat) - (1-c) ln(1-chat)] per class.
std::vector<double> soft_focal_term(const std::vector<double>& target,
                                    const std::vector<double>& predicted);

// Focal classification loss over all matched slots (phi slots use the
// all-zeros target), normalized by the number of real labels.
double class_loss(const Assignment& assignment,
                  const PaddedGroundTruthSet& padded,
                  const std::vector<Prediction>& preds);

// Mean L1 time error over matched non-phi pairs.
double time_loss(const Assignment& assignment,
                 const PaddedGroundTruthSet& padded,
                 const std::vector<Prediction>& preds);

// Differentiable total loss over decoder layers. Each layer gets its own
// assignment from its detached predictions unless `fixed_assignments` is
// given (used to hold the matching constant under perturbation). Gradients
// do not flow through the matching itself.
Tensor total_loss_graph(Tape& tape, const std::vector<Tensor>& layer_scores,
                        const std::vector<Tensor>& layer_times,
                        const std::vector<GroundTruthLabel>& gts,
                        double lambda_time, int total_frames,
                        const std::vector<Assignment>* fixed_assignments =
                            nullptr,
                        std::vector<Assignment>* out_assignments = nullptr,
                        LossBreakdown* out_breakdown = nullptr);

// Non-differentiable evaluation of the same objective.
LossBreakdown total_loss(const std::vector<std::vector<Prediction>>&
                             per_layer_predictions,
                         const std::vector<GroundTruthLabel>& gts,
                         double lambda_time, int total_frames);

}  // namespace spotting
