#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "spotting/tensor.hpp"
#include "spotting/types.hpp"

namespace spotting {

struct ModelConfig {
  int feat_dim = 8;        // input per-frame feature width
  int model_dim = 32;      // transformer width, must be even
  int ff_dim = 64;         // feed-forward inner width
  int num_heads = 2;
  int num_encoder_layers = 2;
  int num_decoder_layers = 2;
  int num_queries = 16;
  int num_classes = 3;
  int clip_frames = 64;
};

struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
};

// Flat, ordered parameter store. Order is fixed by construction so that
// checkpoints and optimizer state line up across runs.
struct ModelParams {
  ModelConfig config;
  std::vector<Param> params;
  std::unordered_map<std::string, std::size_t> index;

  Param& at(const std::string& name) { return params[index.at(name)]; }
  const Param& at(const std::string& name) const {
    return params[index.at(name)];
  }
  std::size_t total_values() const;
};

// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Standard 1D sinusoidal table: row t = [sin(t*w_k) ... | cos(t*w_k) ...],
// w_k = 10000^{-2k/D}. D must be even.
Matrix sinusoidal_encoding(int frames, int dim);

struct ForwardResult {
  std::vector<Tensor> param_leaves;   // aligned with ModelParams::params
  Tensor encoded;                     // T x D
  Tensor reference_logits;            // N_q x 1
  std::vector<Tensor> layer_scores;   // per decoder layer, N_q x N_c in (0,1)
  std::vector<Tensor> layer_times;    // per decoder layer, N_q x 1 in (0,1)
};

// Full pipeline on a tape: embed -> encoder -> decoder -> heads.
ForwardResult forward(Tape& tape, const Matrix& features,
                      const ModelParams& params);

// Encoder output only (used by tests and the static-assignment ablation).
Tensor encode(Tape& tape, const Matrix& features, const ModelParams& params);

std::vector<Prediction> to_predictions(const Tensor& scores,
                                       const Tensor& times);

// Convenience: forward without gradient bookkeeping, final layer only.
std::vector<Prediction> predict(const Matrix& features,
                                const ModelParams& params);

}  // namespace spotting
