#include "spotting/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spotting/model.hpp"

namespace spotting {

std::vector<double> soft_focal_term(const std::vector<double>& target,
                                    const std::vector<double>& predicted) {
  if (target.size() != predicted.size()) {
    throw std::invalid_argument("soft_focal_term: length mismatch " +
                                std::to_string(target.size()) + " vs " +
                                std::to_string(predicted.size()));
  }
  std::vector<double> out(target.size());
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double c = target[k], p = predicted[k];
    if (p <= 0.0 || p >= 1.0) {
      throw std::domain_error(
          "soft_focal_term: predicted score " + std::to_string(p) +
          " outside (0,1); scores must come from a sigmoid");
    }
    const double ce = -c * std::log(p) - (1.0 - c) * std::log(1.0 - p);
    out[k] = (c - p) * (c - p) * ce;
  }
  return out;
}

namespace {

const std::vector<double>& zeros_of(std::size_t n) {
  static thread_local std::vector<double> zeros;
  if (zeros.size() != n) zeros.assign(n, 0.0);
  return zeros;
}

void require_labels(const PaddedGroundTruthSet& padded) {
  if (padded.num_real == 0) {
    throw std::invalid_argument(
        "loss: clip has no ground-truth events; such clips must be skipped");
  }
}

}  // namespace

double class_loss(const Assignment& assignment,
                  const PaddedGroundTruthSet& padded,
                  const std::vector<Prediction>& preds) {
  require_labels(padded);
  double total = 0.0;
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const std::size_t j = assignment.permutation[i];
    const std::vector<double>& target =
        padded.is_phi(i) ? zeros_of(preds[j].scores.size())
                         : padded.slots[i]->class_vector;
    for (double term : soft_focal_term(target, preds[j].scores)) total += term;
  }
  return total / static_cast<double>(padded.num_real);
}

double time_loss(const Assignment& assignment,
                 const PaddedGroundTruthSet& padded,
                 const std::vector<Prediction>& preds) {
  require_labels(padded);
  double total = 0.0;
  for (std::size_t i = 0; i < padded.size(); ++i) {
    if (padded.is_phi(i)) continue;
    const std::size_t j = assignment.permutation[i];
    total += std::abs(padded.slots[i]->time_norm - preds[j].time_norm);
  }
  return total / static_cast<double>(padded.num_real);
}

Tensor total_loss_graph(Tape& tape, const std::vector<Tensor>& layer_scores,
                        const std::vector<Tensor>& layer_times,
                        const std::vector<GroundTruthLabel>& gts,
                        double lambda_time, int total_frames,
                        const std::vector<Assignment>* fixed_assignments,
                        std::vector<Assignment>* out_assignments,
                        LossBreakdown* out_breakdown) {
  if (layer_scores.empty() || layer_scores.size() != layer_times.size()) {
    throw std::invalid_argument("total_loss_graph: need matching per-layer "
                                "score and time tensors");
  }
  if (gts.empty()) {
    throw std::invalid_argument(
        "total_loss_graph: clip has no ground-truth events");
  }
  const std::size_t nq = layer_scores[0].shape()[0];
  const std::size_t nc = layer_scores[0].shape()[1];
  PaddedGroundTruthSet padded = pad_ground_truth(gts, nq);
  const double inv_ng = 1.0 / static_cast<double>(gts.size());

  if (out_breakdown) *out_breakdown = LossBreakdown{};
  Tensor total;
  for (std::size_t l = 0; l < layer_scores.size(); ++l) {
    std::vector<Prediction> detached =
        to_predictions(layer_scores[l], layer_times[l]);
    Assignment assignment =
        fixed_assignments ? (*fixed_assignments)[l]
                          : assign_labels(gts, detached, lambda_time,
                                          total_frames);
    if (out_assignments) out_assignments->push_back(assignment);

    // permute predictions into ground-truth slot order
    std::vector<std::size_t> matched_rows(nq);
    std::vector<double> targets(nq * nc, 0.0);
    std::vector<std::size_t> real_rows;
    std::vector<double> real_times;
    for (std::size_t i = 0; i < nq; ++i) {
      matched_rows[i] = assignment.permutation[i];
      if (!padded.is_phi(i)) {
        for (std::size_t k = 0; k < nc; ++k)
          targets[i * nc + k] = padded.slots[i]->class_vector[k];
        real_rows.push_back(assignment.permutation[i]);
        real_times.push_back(padded.slots[i]->time_norm);
      }
    }

    Tensor p = tape.select_rows(layer_scores[l], matched_rows);
    Tensor c = tape.leaf({nq, nc}, targets);
    Tensor ones = tape.leaf({nq, nc}, std::vector<double>(nq * nc, 1.0));
    Tensor diff = tape.sub(c, p);
    Tensor bce = tape.sub(
        tape.scale(tape.mul(c, tape.log(p)), -1.0),
        tape.mul(tape.sub(ones, c), tape.log(tape.sub(ones, p))));
    Tensor cls = tape.scale(tape.sum(tape.mul(tape.mul(diff, diff), bce)),
                            inv_ng);

    Tensor t_pred = tape.select_rows(layer_times[l], real_rows);
    Tensor t_gt = tape.leaf({real_rows.size(), 1}, real_times);
    Tensor tim =
        tape.scale(tape.sum(tape.abs(tape.sub(t_gt, t_pred))), inv_ng);

    Tensor layer_total = tape.add(cls, tape.scale(tim, lambda_time));
    if (out_breakdown) {
      LayerLoss ll{cls.scalar(), tim.scalar(), layer_total.scalar()};
      out_breakdown->layers.push_back(ll);
      out_breakdown->class_loss += ll.class_loss;
      out_breakdown->time_loss += ll.time_loss;
      out_breakdown->total += ll.total;
    }
    total = l == 0 ? layer_total : tape.add(total, layer_total);
  }
  return total;
}

LossBreakdown total_loss(
    const std::vector<std::vector<Prediction>>& per_layer_predictions,
    const std::vector<GroundTruthLabel>& gts, double lambda_time,
    int total_frames) {
  if (per_layer_predictions.empty()) {
    throw std::invalid_argument("total_loss: need at least one layer");
  }
  LossBreakdown out;
  for (const auto& preds : per_layer_predictions) {
    PaddedGroundTruthSet padded = pad_ground_truth(gts, preds.size());
    Assignment assignment =
        assign_labels(gts, preds, lambda_time, total_frames);
    LayerLoss ll;
    ll.class_loss = class_loss(assignment, padded, preds);
    ll.time_loss = time_loss(assignment, padded, preds);
    ll.total = ll.class_loss + lambda_time * ll.time_loss;
    out.layers.push_back(ll);
    out.class_loss += ll.class_loss;
    out.time_loss += ll.time_loss;
    out.total += ll.total;
  }
  return out;
}

}  // namespace spotting
