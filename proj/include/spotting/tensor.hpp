#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace spotting {

using Shape = std::vector<std::size_t>;

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; the Tape owns storage.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  const std::vector<double>& values() const;
  std::size_t size() const;
  double scalar() const;  // requires a single-element tensor

  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of one backward pass, keyed by tensor id.
class Gradients {
 public:
  const std::vector<double>& of(const Tensor& t) const;

 private:
  friend class Tape;
  std::vector<std::vector<double>> by_id_;
};

// Records primitive operations for reverse-mode differentiation. All values
// are immutable once recorded; a tape is confined to one thread.
class Tape {
 public:
  Tensor leaf(Shape shape, std::vector<double> values);
  Tensor scalar(double value) { return leaf({1}, {value}); }

  // elementwise, equal shapes
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  // m: r x c, row: 1 x c (or flat c); adds row to every row of m
  Tensor broadcast_add_row(const Tensor& m, const Tensor& row);
  Tensor scale(const Tensor& a, double factor);

  Tensor sigmoid(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor sin(const Tensor& a);
  Tensor cos(const Tensor& a);
  Tensor abs(const Tensor& a);

  Tensor row_softmax(const Tensor& a);
  Tensor layer_norm(const Tensor& a, double epsilon = 1e-5);

  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);

  Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& rows);
  Tensor concat_rows(const std::vector<Tensor>& parts);

  // Reverse pass from a scalar loss. Deterministic: the same tape yields
  // bit-identical gradients on repeated calls.
  Gradients backward(const Tensor& loss) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class Tensor;

  struct Node {
    Shape shape;
    std::vector<double> values;
    // Accumulates into grads given the output gradient; null for leaves.
    std::function<void(const Tape&, const std::vector<double>&,
                       std::vector<std::vector<double>>&)>
        backprop;
  };

  Tensor make(const char* op, Shape shape, std::vector<double> values,
              std::function<void(const Tape&, const std::vector<double>&,
                                 std::vector<std::vector<double>>&)>
                  backprop);
  const Node& node(std::size_t id) const { return nodes_[id]; }

  std::vector<Node> nodes_;
};

// Max relative finite-difference error of a scalar-valued tensor program over
// sampled coordinates of `point`. `max_coords` == 0 checks every coordinate.
double grad_check(
    const std::function<Tensor(Tape&, const Tensor&)>& program,
    const Shape& shape, const std::vector<double>& point, double step,
    std::size_t max_coords = 0, std::uint64_t seed = 0);

std::string shape_str(const Shape& s);

}  // namespace spotting
