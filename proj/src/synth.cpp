#include "spotting/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "spotting/rng.hpp"

namespace spotting {

namespace {

void validate(const SynthConfig& c) {
  if (c.frames < 2 || c.num_classes < 1 || c.feat_dim < 1) {
    throw std::invalid_argument("synth: invalid extents");
  }
  if (c.signature_width < 1 || c.signature_width % 2 == 0) {
    throw std::invalid_argument("synth: signature_width must be odd and >= 1");
  }
  if (c.min_event_separation < 1) {
    throw std::invalid_argument("synth: min_event_separation must be >= 1");
  }
  if (c.events_min < 0 || c.events_max < c.events_min) {
    throw std::invalid_argument("synth: bad events_per_clip range");
  }
}

int clamp_frame(double f, int total_frames) {
  const int r = static_cast<int>(std::floor(f + 0.5));
  return std::clamp(r, 1, total_frames);
}

}  // namespace

std::vector<std::vector<double>> class_signatures(const SynthConfig& config) {
  validate(config);
  const std::uint64_t base =
      config.signature_seed != 0 ? config.signature_seed : config.seed;
  Rng rng(derive_seed(base, 0x516));
  std::vector<std::vector<double>> sigs(config.num_classes);
  for (auto& sig : sigs) {
    sig.resize(config.feat_dim);
    double norm = 0.0;
    for (double& v : sig) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : sig) v = v / norm * config.signature_gain;
  }
  return sigs;
}

Dataset generate(const SynthConfig& config, std::size_t count) {
  validate(config);
  const auto sigs = class_signatures(config);
  Dataset ds;
  ds.config = config;
  ds.clips.reserve(count);
  const int half = (config.signature_width - 1) / 2;

  for (std::size_t ci = 0; ci < count; ++ci) {
    Rng rng(derive_seed(config.seed, ci + 1));
    Clip clip;
    clip.features = Matrix(static_cast<std::size_t>(config.frames),
                           static_cast<std::size_t>(config.feat_dim));
    for (double& v : clip.features.data)
      v = rng.normal(0.0, config.background_noise_std);

    const int num_events = rng.uniform_int(config.events_min,
                                           config.events_max);
    std::vector<int> frames;
    int attempts = 0;
    while (static_cast<int>(frames.size()) < num_events) {
      if (++attempts > 1000) {
        throw std::invalid_argument(
            "generate: cannot place " + std::to_string(num_events) +
            " events with separation " +
            std::to_string(config.min_event_separation) + " in " +
            std::to_string(config.frames) + " frames");
      }
      const int f = rng.uniform_int(1, config.frames);
      bool ok = true;
      for (int existing : frames)
        if (std::abs(existing - f) < config.min_event_separation) {
          ok = false;
          break;
        }
      if (ok) frames.push_back(f);
    }
    std::sort(frames.begin(), frames.end());

    for (int f : frames) {
      const int cls = rng.uniform_int(0, config.num_classes - 1);
      for (int o = -half; o <= half; ++o) {
        const int frame = f + o;
        if (frame < 1 || frame > config.frames) continue;
        const double weight =
            1.0 - static_cast<double>(std::abs(o)) / (half + 1.0);
        for (int d = 0; d < config.feat_dim; ++d)
          clip.features.at(static_cast<std::size_t>(frame - 1),
                           static_cast<std::size_t>(d)) +=
              weight * sigs[static_cast<std::size_t>(cls)]
                           [static_cast<std::size_t>(d)];
      }
      GroundTruthLabel label;
      label.class_vector.assign(static_cast<std::size_t>(config.num_classes),
                                0.0);
      label.class_vector[static_cast<std::size_t>(cls)] = 1.0;
      label.frame_index = f;
      label.time_norm = label_time_norm(f, config.frames);
      clip.labels.push_back(label);
    }
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

std::vector<GroundTruthLabel> perturb_labels(
    const std::vector<GroundTruthLabel>& labels, double sigma,
    int total_frames, std::uint64_t seed) {
  if (sigma < 0.0) {
    throw std::invalid_argument("perturb_labels: sigma must be >= 0");
  }
  if (sigma == 0.0) return labels;
  Rng rng(seed);
  std::vector<GroundTruthLabel> out = labels;
  for (GroundTruthLabel& label : out) {
    const double noise = rng.normal(0.0, sigma);
    label.frame_index = clamp_frame(label.frame_index + noise, total_frames);
    label.time_norm = label_time_norm(label.frame_index, total_frames);
  }
  return out;
}

std::vector<GroundTruthLabel> dilate_labels(
    const std::vector<GroundTruthLabel>& labels, int total_frames) {
  std::map<int, GroundTruthLabel> by_frame;
  auto merge = [&](const GroundTruthLabel& label, int frame) {
    frame = std::clamp(frame, 1, total_frames);
    auto it = by_frame.find(frame);
    if (it == by_frame.end()) {
      GroundTruthLabel copy = label;
      copy.frame_index = frame;
      copy.time_norm = label_time_norm(frame, total_frames);
      by_frame.emplace(frame, std::move(copy));
    } else {
      for (std::size_t k = 0; k < label.class_vector.size(); ++k)
        it->second.class_vector[k] =
            std::max(it->second.class_vector[k], label.class_vector[k]);
    }
  };
  for (const GroundTruthLabel& label : labels) {
    merge(label, label.frame_index - 1);
    merge(label, label.frame_index);
    merge(label, label.frame_index + 1);
  }
  std::vector<GroundTruthLabel> out;
  out.reserve(by_frame.size());
  for (auto& [frame, label] : by_frame) out.push_back(std::move(label));
  return out;
}

Clip mixup_with_lambda(const Clip& a, const Clip& b, double lambda) {
  if (a.features.rows != b.features.rows ||
      a.features.cols != b.features.cols) {
    throw std::invalid_argument("mixup: clip shapes differ");
  }
  Clip out;
  out.features = Matrix(a.features.rows, a.features.cols);
  for (std::size_t i = 0; i < out.features.data.size(); ++i)
    out.features.data[i] =
        lambda * a.features.data[i] + (1.0 - lambda) * b.features.data[i];

  std::map<int, GroundTruthLabel> by_frame;
  auto accumulate = [&](const GroundTruthLabel& label, double weight) {
    auto it = by_frame.find(label.frame_index);
    if (it == by_frame.end()) {
      GroundTruthLabel scaled = label;
      for (double& v : scaled.class_vector) v *= weight;
      by_frame.emplace(label.frame_index, std::move(scaled));
    } else {
      for (std::size_t k = 0; k < label.class_vector.size(); ++k)
        it->second.class_vector[k] = std::min(
            1.0, it->second.class_vector[k] + weight * label.class_vector[k]);
    }
  };
  for (const GroundTruthLabel& label : a.labels) accumulate(label, lambda);
  for (const GroundTruthLabel& label : b.labels)
    accumulate(label, 1.0 - lambda);
  for (auto& [frame, label] : by_frame) out.labels.push_back(std::move(label));
  return out;
}

Clip mixup(const Clip& a, const Clip& b, double alpha, std::uint64_t seed) {
  if (alpha <= 0.0) {
    throw std::invalid_argument("mixup: alpha must be > 0");
  }
  Rng rng(seed);
  return mixup_with_lambda(a, b, rng.beta(alpha, alpha));
}

}  // namespace spotting
