#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spotting {

// Plain row-major matrix for non-differentiable paths (frame scores,
// synthetic features, fused windows).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// One query's output: sigmoid class scores plus a normalized event time.
struct Prediction {
  std::vector<double> scores;  // in (0,1)^{N_c}
  double time_norm = 0.5;      // in (0,1)
};

// Ground-truth event: (soft) class vector, normalized time, source frame.
struct GroundTruthLabel {
  std::vector<double> class_vector;  // entries in [0,1], at least one > 0
  double time_norm = 0.0;            // frame_index / T
  int frame_index = 1;               // in [1, T]
};

inline double label_time_norm(int frame_index, int total_frames) {
  return static_cast<double>(frame_index) / static_cast<double>(total_frames);
}

}  // namespace spotting
