#include "spotting/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "spotting/loss.hpp"
#include "spotting/rng.hpp"

namespace spotting {

MatchingMode matching_mode_from_string(const std::string& s) {
  if (s == "static") return MatchingMode::kStatic;
  if (s == "time-only" || s == "time_only") return MatchingMode::kTimeOnly;
  if (s == "dynamic") return MatchingMode::kDynamic;
  throw std::invalid_argument("unknown matching mode: " + s);
}

std::string to_string(MatchingMode mode) {
  switch (mode) {
    case MatchingMode::kStatic: return "static";
    case MatchingMode::kTimeOnly: return "time-only";
    case MatchingMode::kDynamic: return "dynamic";
  }
  return "?";
}

double lr_at(int epoch, const TrainConfig& config, double base) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw std::invalid_argument("lr_at: epoch out of range");
  }
  if (epoch < config.warmup_epochs) {
    return base * static_cast<double>(epoch + 1) / config.warmup_epochs;
  }
  const double progress =
      static_cast<double>(epoch - config.warmup_epochs) /
      static_cast<double>(config.epochs - config.warmup_epochs);
  return base * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void AdamW::step(ModelParams& params,
                 const std::vector<std::vector<double>>& grads,
                 const std::vector<double>& lr_per_param,
                 double weight_decay) {
  if (m_.empty()) {
    m_.resize(params.params.size());
    v_.resize(params.params.size());
    for (std::size_t i = 0; i < params.params.size(); ++i) {
      m_[i].assign(params.params[i].value.size(), 0.0);
      v_[i].assign(params.params[i].value.size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    if (grads[i].size() != params.params[i].value.size()) {
      throw std::invalid_argument("AdamW: gradient shape mismatch for " +
                                  params.params[i].name);
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("AdamW: non-finite gradient for " +
                                 params.params[i].name);
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    const double lr = lr_per_param[i];
    auto& value = params.params[i].value;
    for (std::size_t k = 0; k < value.size(); ++k) {
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * grads[i][k];
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * grads[i][k] * grads[i][k];
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      value[k] -= lr * weight_decay * value[k];  // decoupled decay
      value[k] -= lr * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

namespace {

// kStatic treats each query as a fixed time slot on a uniform frame grid.
// Labels are snapped to the nearest slot so both the binding and the time
// supervision live on the grid; the predictions never move off their slots.
std::vector<GroundTruthLabel> snap_to_query_grid(
    std::vector<GroundTruthLabel> labels, int num_queries, int total_frames) {
  for (GroundTruthLabel& g : labels) {
    const double pos =
        total_frames > 1 && num_queries > 1
            ? static_cast<double>(g.frame_index - 1) * (num_queries - 1) /
                  (total_frames - 1)
            : 0.0;
    const long anchor = std::lround(pos);
    const int frame =
        1 + static_cast<int>(std::lround(
                static_cast<double>(anchor) * (total_frames - 1) /
                std::max(1, num_queries - 1)));
    g.frame_index = std::clamp(frame, 1, total_frames);
    g.time_norm = label_time_norm(g.frame_index, total_frames);
  }
  return labels;
}

}  // namespace

Assignment assign_for_mode(MatchingMode mode,
                           const std::vector<GroundTruthLabel>& gts,
                           const std::vector<Prediction>& preds,
                           double lambda_time, int total_frames) {
  if (mode == MatchingMode::kDynamic) {
    return assign_labels(gts, preds, lambda_time, total_frames);
  }
  PaddedGroundTruthSet padded = pad_ground_truth(gts, preds.size());
  Assignment result;
  const std::size_t n = preds.size();
  if (mode == MatchingMode::kTimeOnly) {
    CostMatrix m;
    m.n = n;
    m.lambda_time = lambda_time;
    m.values.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (padded.is_phi(i)) continue;
      for (std::size_t j = 0; j < n; ++j)
        m.at(i, j) = lambda_time *
                     time_cost(padded.slots[i]->time_norm, preds[j].time_norm);
    }
    result = hungarian_solve(m);
  } else {
    // kStatic: fixed time-grid anchoring, independent of the predictions.
    // A label at frame f binds to the query whose grid position is nearest
    // to f; on collision the closest free query index wins (deterministic).
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> perm(n, n);
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const double pos = total_frames > 1
          ? static_cast<double>(gts[i].frame_index - 1) * (n - 1) /
                (total_frames - 1)
          : 0.0;
      const long anchor = std::lround(pos);
      std::size_t best = n;
      for (long d = 0; d < static_cast<long>(n); ++d) {
        for (long cand : {anchor + d, anchor - d}) {
          if (cand < 0 || cand >= static_cast<long>(n)) continue;
          if (!taken[static_cast<std::size_t>(cand)]) {
            best = static_cast<std::size_t>(cand);
            break;
          }
        }
        if (best != n) break;
      }
      perm[i] = best;
      taken[best] = true;
    }
    std::size_t next = 0;
    for (std::size_t i = gts.size(); i < n; ++i) {
      while (taken[next]) ++next;
      perm[i] = next;
      taken[next] = true;
    }
    result.permutation = perm;
    result.total_cost = 0.0;
  }
  result.pairs.clear();
  for (std::size_t i = 0; i < n; ++i) {
    PairRecord rec;
    rec.gt_slot = i;
    rec.prediction = result.permutation[i];
    rec.is_phi = padded.is_phi(i);
    if (!rec.is_phi) {
      const auto& gt = *padded.slots[i];
      rec.class_cost = class_cost(gt.class_vector, preds[rec.prediction].scores);
      rec.time_cost = time_cost(gt.time_norm, preds[rec.prediction].time_norm);
      rec.frame_offset = static_cast<int>(std::floor(
                             preds[rec.prediction].time_norm * total_frames +
                             0.5)) -
                         gt.frame_index;
    }
    result.pairs.push_back(rec);
  }
  return result;
}

namespace {

// The static mode fixes each matched pair's time target to the tagged frame,
// which is already the label's own time; only the pairing differs.
std::vector<Assignment> assignments_for_clip(
    MatchingMode mode, const std::vector<GroundTruthLabel>& gts,
    const std::vector<Tensor>& layer_scores,
    const std::vector<Tensor>& layer_times, double lambda_time,
    int total_frames) {
  std::vector<Assignment> out;
  out.reserve(layer_scores.size());
  for (std::size_t l = 0; l < layer_scores.size(); ++l) {
    std::vector<Prediction> detached =
        to_predictions(layer_scores[l], layer_times[l]);
    out.push_back(
        assign_for_mode(mode, gts, detached, lambda_time, total_frames));
  }
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const Dataset& data,
                  const Dataset* precise, const Dataset* val,
                  const TrainConfig& config) {
  if (data.clips.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (config.warmup_epochs >= config.epochs && config.epochs > 0) {
    throw std::invalid_argument("train: warmup_epochs must be < epochs");
  }
  if (precise && precise->clips.size() != data.clips.size()) {
    throw std::invalid_argument("train: precise dataset not aligned");
  }

  TrainResult result;
  result.params = init_params(model_config, config.seed);
  AdamW optimizer;
  Rng rng(derive_seed(config.seed, 0x7121A1));
  const int total_frames = data.config.frames;

  std::vector<double> lr_scale(result.params.params.size(), 0.0);

  ModelParams last_good = result.params;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr_emb = lr_at(epoch, config, config.lr_embedder);
    const double lr_tr = lr_at(epoch, config, config.lr_transformer);
    for (std::size_t i = 0; i < result.params.params.size(); ++i) {
      const bool is_embedder =
          result.params.params[i].name.rfind("embed.", 0) == 0;
      lr_scale[i] = is_embedder ? lr_emb : lr_tr;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate_transformer = lr_tr;
    double offset_train_sum = 0.0, offset_precise_sum = 0.0;
    long offset_train_n = 0, offset_precise_n = 0;
    long loss_batches = 0;

    try {
      for (int step = 0; step < config.steps_per_epoch; ++step) {
        std::vector<std::vector<double>> grad_sum(result.params.params.size());
        for (std::size_t i = 0; i < grad_sum.size(); ++i)
          grad_sum[i].assign(result.params.params[i].value.size(), 0.0);
        int batch_used = 0;
        LossBreakdown step_loss;

        for (int b = 0; b < config.batch_size; ++b) {
          const std::size_t ci = static_cast<std::size_t>(rng.uniform_int(
              0, static_cast<int>(data.clips.size()) - 1));
          Clip clip = data.clips[ci];
          bool track_precise = precise != nullptr;
          std::size_t precise_idx = ci;
          if (config.use_mixup) {
            const std::size_t cj = static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<int>(data.clips.size()) - 1));
            clip = mixup(clip, data.clips[cj], config.mixup_alpha,
                         rng.next_u64());
            track_precise = false;
          }
          std::vector<GroundTruthLabel> labels = clip.labels;
          if (config.use_dilation) {
            labels = dilate_labels(labels, total_frames);
            track_precise = false;
          }
          if (config.matching == MatchingMode::kStatic) {
            labels = snap_to_query_grid(labels, model_config.num_queries,
                                        total_frames);
          }
          if (labels.empty()) continue;  // no events, no normalizer
          if (labels.size() >
              static_cast<std::size_t>(model_config.num_queries)) {
            throw std::invalid_argument(
                "train: more labels than queries in a clip");
          }

          Tape tape;
          ForwardResult fwd = forward(tape, clip.features, result.params);
          std::vector<Tensor> scores = fwd.layer_scores;
          std::vector<Tensor> times = fwd.layer_times;
          if (!config.aux_losses) {
            scores = {fwd.layer_scores.back()};
            times = {fwd.layer_times.back()};
          }
          std::vector<Assignment> assignments = assignments_for_clip(
              config.matching, labels, scores, times, config.lambda_time,
              total_frames);
          LossBreakdown breakdown;
          Tensor loss = total_loss_graph(tape, scores, times, labels,
                                         config.lambda_time, total_frames,
                                         &assignments, nullptr, &breakdown);
          Gradients grads = tape.backward(loss);
          for (std::size_t i = 0; i < fwd.param_leaves.size(); ++i) {
            const auto& g = grads.of(fwd.param_leaves[i]);
            for (std::size_t k = 0; k < g.size(); ++k) grad_sum[i][k] += g[k];
          }
          step_loss.total += breakdown.total;
          step_loss.class_loss += breakdown.class_loss;
          step_loss.time_loss += breakdown.time_loss;
          ++batch_used;

          const Assignment& final_assignment = assignments.back();
          const auto& pred_times = times.back().values();
          for (const PairRecord& pair : final_assignment.pairs) {
            if (pair.is_phi) continue;
            const double pred_frame =
                pred_times[pair.prediction] * total_frames;
            offset_train_sum +=
                std::abs(pred_frame - labels[pair.gt_slot].frame_index);
            ++offset_train_n;
            if (track_precise) {
              const auto& precise_labels =
                  precise->clips[precise_idx].labels;
              if (pair.gt_slot < precise_labels.size()) {
                offset_precise_sum += std::abs(
                    pred_frame - precise_labels[pair.gt_slot].frame_index);
                ++offset_precise_n;
              }
            }
          }
        }
        if (batch_used == 0) continue;
        for (auto& g : grad_sum)
          for (double& v : g) v /= batch_used;
        optimizer.step(result.params, grad_sum, lr_scale,
                       config.weight_decay);
        record.total_loss += step_loss.total / batch_used;
        record.class_loss += step_loss.class_loss / batch_used;
        record.time_loss += step_loss.time_loss / batch_used;
        ++loss_batches;
      }
    } catch (const std::runtime_error&) {
      // non-finite loss or gradient: keep the last completed epoch's params
      result.params = last_good;
      result.diverged = true;
      return result;
    }

    if (loss_batches > 0) {
      record.total_loss /= loss_batches;
      record.class_loss /= loss_batches;
      record.time_loss /= loss_batches;
    }
    record.offset_to_train_labels =
        offset_train_n > 0 ? offset_train_sum / offset_train_n : 0.0;
    record.offset_to_precise_labels =
        offset_precise_n > 0 ? offset_precise_sum / offset_precise_n : -1.0;
    if (val != nullptr) {
      EvalReport report =
          evaluate_dataset(result.params, *val, config.val_deltas, {});
      record.val_map = report.map;
    }
    result.log.push_back(std::move(record));
    last_good = result.params;
  }
  return result;
}

std::vector<EvalGt> to_eval_gt(const std::vector<GroundTruthLabel>& labels) {
  std::vector<EvalGt> out;
  for (const GroundTruthLabel& label : labels)
    for (std::size_t k = 0; k < label.class_vector.size(); ++k)
      if (label.class_vector[k] > 0.5)
        out.push_back({label.frame_index, static_cast<int>(k)});
  return out;
}

Matrix infer_scores(const ModelParams& params, const Matrix& features,
                    const InferOptions& options) {
  const int window = params.config.clip_frames;
  const int total = static_cast<int>(features.rows);
  if (total < window) {
    throw std::invalid_argument("infer_scores: sequence shorter than the "
                                "model clip length");
  }
  std::vector<int> offsets;
  for (int off = 0; off + window <= total; off += window / 2)
    offsets.push_back(off);
  if (offsets.back() + window < total) offsets.push_back(total - window);

  std::vector<std::pair<int, Matrix>> windows;
  for (int off : offsets) {
    Matrix sub(static_cast<std::size_t>(window), features.cols);
    std::copy(features.data.begin() + off * features.cols,
              features.data.begin() + (off + window) * features.cols,
              sub.data.begin());
    std::vector<Prediction> preds = predict(sub, params);
    windows.emplace_back(off, aggregate_scores(preds, window));
  }
  Matrix fused = overlap_fuse(windows, total);
  if (options.apply_nms) {
    fused = soft_nms(fused, options.nms_window, options.nms_decay);
  }
  return fused;
}

EvalReport evaluate_dataset(const ModelParams& params, const Dataset& data,
                            const std::vector<int>& deltas,
                            const InferOptions& options) {
  std::vector<EvalInstance> instances;
  instances.reserve(data.clips.size());
  for (const Clip& clip : data.clips) {
    EvalInstance inst;
    Matrix scores = infer_scores(params, clip.features, options);
    inst.detections = extract_detections(scores, options.detection_threshold);
    inst.ground_truth = to_eval_gt(clip.labels);
    instances.push_back(std::move(inst));
  }
  return map_at(instances, params.config.num_classes, deltas);
}

}  // namespace spotting
