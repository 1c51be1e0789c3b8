#pragma once

#include <string>
#include <vector>

#include "spotting/eval.hpp"
#include "spotting/model.hpp"
#include "spotting/synth.hpp"
#include "spotting/trainer.hpp"

namespace spotting::io {

// Binary parameter blob (shapes + row-major doubles) with a JSON sidecar of
// hyperparameters at <path>.json.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// One directory per split: features.bin (row-major doubles, clip-major) and
// labels.json (config echo, seed, per-clip labels; noisy labels alongside
// precise ones when present).
void save_dataset(const Dataset& data, const std::string& dir,
                  const Dataset* noisy = nullptr, double sigma = 0.0);
Dataset load_dataset(const std::string& dir, bool noisy_labels = false);
bool dataset_has_noisy_labels(const std::string& dir);

// Labels-only JSON (accepted by eval for external detections).
std::vector<std::vector<GroundTruthLabel>> load_labels(
    const std::string& path);

void save_train_log(const std::vector<EpochRecord>& log,
                    const std::string& path);  // JSON lines, one per epoch
std::vector<EpochRecord> load_train_log(const std::string& path);

void save_detections_csv(
    const std::vector<std::pair<std::string, std::vector<Detection>>>& dets,
    const std::string& path);
std::vector<std::pair<std::string, std::vector<Detection>>>
load_detections_csv(const std::string& path);

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

// Every CLI command writes one manifest beside its outputs.
void write_manifest(const std::string& command, const std::string& config_json,
                    double duration_seconds, const std::string& path);

}  // namespace spotting::io
