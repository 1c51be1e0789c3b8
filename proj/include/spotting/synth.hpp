#pragma once

#include <cstdint>
#include <vector>

#include "spotting/types.hpp"

namespace spotting {

struct SynthConfig {
  int frames = 64;               // T
  int num_classes = 3;           // N_c
  int feat_dim = 8;              // D_f
  int events_min = 1;
  int events_max = 3;
  int signature_width = 3;       // odd; temporal support of an event pulse
  double signature_gain = 4.0;
  double background_noise_std = 1.0;
  int min_event_separation = 6;  // frames
  std::uint64_t seed = 1;
  // Source of the per-class signature vectors; 0 falls back to `seed`.
  // Splits of one experiment must share this so events look alike across
  // train, val, and test.
  std::uint64_t signature_seed = 0;
};

struct Clip {
  Matrix features;  // T x D_f
  std::vector<GroundTruthLabel> labels;
};

struct Dataset {
  SynthConfig config;
  std::vector<Clip> clips;
};

// Gaussian background plus one class-specific signature vector per event,
// added with a triangular temporal profile peaking at the event frame.
// Deterministic per (seed, clip index).
Dataset generate(const SynthConfig& config, std::size_t count);

// Per-class signature vectors used by generate (exposed for tests).
std::vector<std::vector<double>> class_signatures(const SynthConfig& config);

// frame -> clamp(round(frame + N(0, sigma^2)), 1, T); classes unchanged.
std::vector<GroundTruthLabel> perturb_labels(
    const std::vector<GroundTruthLabel>& labels, double sigma,
    int total_frames, std::uint64_t seed);

// Copies each label onto frame-1 and frame+1 (clamped); same-frame
// duplicates merge by elementwise max of class vectors.
std::vector<GroundTruthLabel> dilate_labels(
    const std::vector<GroundTruthLabel>& labels, int total_frames);

// Convex clip combination with lambda ~ Beta(alpha, alpha); labels unioned
// with class vectors scaled by lambda / (1 - lambda), same-frame collisions
// merged by clamped elementwise addition.
Clip mixup(const Clip& a, const Clip& b, double alpha, std::uint64_t seed);
Clip mixup_with_lambda(const Clip& a, const Clip& b, double lambda);

}  // namespace spotting
