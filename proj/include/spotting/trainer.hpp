#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spotting/eval.hpp"
#include "spotting/matcher.hpp"
#include "spotting/model.hpp"
#include "spotting/synth.hpp"
#include "spotting/types.hpp"

namespace spotting {

// Table-2 style matching configurations: static frame binding (c1),
// time-cost-only matching (c2), full dynamic matching (c3).
enum class MatchingMode { kStatic, kTimeOnly, kDynamic };

MatchingMode matching_mode_from_string(const std::string& s);
std::string to_string(MatchingMode mode);

struct TrainConfig {
  int epochs = 30;
  int steps_per_epoch = 100;
  int batch_size = 8;
  int warmup_epochs = 3;
  double lr_embedder = 1e-3;     // "backbone" rate, taken by the frame embedder
  double lr_transformer = 1e-4;  // everything else
  double weight_decay = 1e-4;
  double lambda_time = 10.0;
  MatchingMode matching = MatchingMode::kDynamic;
  bool use_mixup = false;
  double mixup_alpha = 0.2;
  bool use_dilation = false;
  bool aux_losses = true;
  std::uint64_t seed = 1;
  std::vector<int> val_deltas = {1, 2};
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate_transformer = 0.0;
  double total_loss = 0.0;
  double class_loss = 0.0;
  double time_loss = 0.0;
  // mean |predicted frame time - label frame| over matched pairs, in frames
  double offset_to_train_labels = 0.0;
  double offset_to_precise_labels = -1.0;  // -1 when precise labels absent
  std::map<int, double> val_map;           // delta -> mAP, empty without val
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> log;
  bool diverged = false;
};

// Linear warmup then cosine decay, at epoch granularity.
double lr_at(int epoch, const TrainConfig& config, double base);

// Decoupled-weight-decay adaptive moment optimizer.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // lr per parameter; weight decay is applied to parameters directly.
  void step(ModelParams& params,
            const std::vector<std::vector<double>>& grads,
            const std::vector<double>& lr_per_param, double weight_decay);

 private:
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Assignment under a matching configuration. kDynamic is the full cost of
// the matcher module; kTimeOnly drops the class term; kStatic binds each
// label to a fixed time-grid anchor query (query i anchored at frame
// 1 + i*(T-1)/(N_q-1)), ignoring the predictions entirely. During training
// kStatic additionally snaps label times onto the anchor grid, so the
// queries behave as fixed time slots rather than free regressors.
Assignment assign_for_mode(MatchingMode mode,
                           const std::vector<GroundTruthLabel>& gts,
                           const std::vector<Prediction>& preds,
                           double lambda_time, int total_frames);

// `data` carries the training labels (possibly noisy). `precise` optionally
// carries the unperturbed labels, clip- and label-aligned with `data`, for
// offset tracking. `val` enables per-epoch mAP logging.
TrainResult train(const ModelConfig& model_config, const Dataset& data,
                  const Dataset* precise, const Dataset* val,
                  const TrainConfig& config);

struct InferOptions {
  bool apply_nms = true;
  int nms_window = 3;
  double nms_decay = 0.5;
  double detection_threshold = 0.01;
};

// Frame scores for one feature sequence: 50%-overlap windows of the model's
// clip length, per-window aggregation, mean fusion, optional soft NMS.
Matrix infer_scores(const ModelParams& params, const Matrix& features,
                    const InferOptions& options);

std::vector<EvalGt> to_eval_gt(const std::vector<GroundTruthLabel>& labels);

EvalReport evaluate_dataset(const ModelParams& params, const Dataset& data,
                            const std::vector<int>& deltas,
                            const InferOptions& options);

}  // namespace spotting
