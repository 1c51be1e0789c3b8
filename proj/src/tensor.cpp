#include "spotting/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "spotting/rng.hpp"

namespace spotting {

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string op_shape_error(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << shape_str(a) << " and "
     << shape_str(b);
  return os.str();
}

void require_matrix(const char* op, const Shape& s) {
  if (s.size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_str(s));
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Tensor::values() const {
  return tape_->node(id_).values;
}
std::size_t Tensor::size() const { return tape_->node(id_).values.size(); }

double Tensor::scalar() const {
  const auto& v = values();
  if (v.size() != 1) {
    throw std::invalid_argument("scalar(): tensor has " +
                                std::to_string(v.size()) + " elements");
  }
  return v[0];
}

const std::vector<double>& Gradients::of(const Tensor& t) const {
  return by_id_.at(t.id());
}

Tensor Tape::make(
    const char* op, Shape shape, std::vector<double> values,
    std::function<void(const Tape&, const std::vector<double>&,
                       std::vector<std::vector<double>>&)>
        backprop) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument(std::string(op) + ": shape " +
                                shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op) +
                               ": non-finite value in result");
    }
  }
  nodes_.push_back(Node{std::move(shape), std::move(values),
                        std::move(backprop)});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  return make("leaf", std::move(shape), std::move(values), nullptr);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), op_shape_error("add", a.shape(), b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return make("add", a.shape(), std::move(out),
              [ia, ib](const Tape&, const std::vector<double>& g,
                       std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                  grads[ia][i] += g[i];
                  grads[ib][i] += g[i];
                }
              });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), op_shape_error("sub", a.shape(), b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return make("sub", a.shape(), std::move(out),
              [ia, ib](const Tape&, const std::vector<double>& g,
                       std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                  grads[ia][i] += g[i];
                  grads[ib][i] -= g[i];
                }
              });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), op_shape_error("mul", a.shape(), b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return make("mul", a.shape(), std::move(out),
              [ia, ib](const Tape& t, const std::vector<double>& g,
                       std::vector<std::vector<double>>& grads) {
                const auto& va = t.node(ia).values;
                const auto& vb = t.node(ib).values;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  grads[ia][i] += g[i] * vb[i];
                  grads[ib][i] += g[i] * va[i];
                }
              });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a.shape());
  require_matrix("matmul", b.shape());
  const std::size_t r = a.shape()[0], k = a.shape()[1];
  require(b.shape()[0] == k, op_shape_error("matmul", a.shape(), b.shape()));
  const std::size_t c = b.shape()[1];
  std::vector<double> out(r * c, 0.0);
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = va[i * k + kk];
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += av * vb[kk * c + j];
    }
  const std::size_t ia = a.id(), ib = b.id();
  return make("matmul", {r, c}, std::move(out),
              [ia, ib, r, k, c](const Tape& t, const std::vector<double>& g,
                                std::vector<std::vector<double>>& grads) {
                const auto& va = t.node(ia).values;
                const auto& vb = t.node(ib).values;
                // dA += G B^T ; dB += A^T G
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) {
                    const double gv = g[i * c + j];
                    if (gv == 0.0) continue;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                      grads[ia][i * k + kk] += gv * vb[kk * c + j];
                      grads[ib][kk * c + j] += gv * va[i * k + kk];
                    }
                  }
              });
}

Tensor Tape::transpose(const Tensor& a) {
  require_matrix("transpose", a.shape());
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  const std::size_t ia = a.id();
  return make("transpose", {c, r}, std::move(out),
              [ia, r, c](const Tape&, const std::vector<double>& g,
                         std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j)
                    grads[ia][i * c + j] += g[j * r + i];
              });
}

Tensor Tape::broadcast_add_row(const Tensor& m, const Tensor& row) {
  require_matrix("broadcast_add_row", m.shape());
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  require(row.size() == c,
          op_shape_error("broadcast_add_row", m.shape(), row.shape()));
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = m.values()[i * c + j] + row.values()[j];
  const std::size_t im = m.id(), ir = row.id();
  return make("broadcast_add_row", {r, c}, std::move(out),
              [im, ir, r, c](const Tape&, const std::vector<double>& g,
                             std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) {
                    grads[im][i * c + j] += g[i * c + j];
                    grads[ir][j] += g[i * c + j];
                  }
              });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  const std::size_t ia = a.id();
  return make("scale", a.shape(), std::move(out),
              [ia, factor](const Tape&, const std::vector<double>& g,
                           std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < g.size(); ++i)
                  grads[ia][i] += g[i] * factor;
              });
}

Tensor Tape::sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
  const std::size_t ia = a.id();
  return make("sigmoid", a.shape(), std::move(out),
              [ia](const Tape& t, const std::vector<double>& g,
                   std::vector<std::vector<double>>& grads) {
                // recompute from input; node values are not captured
                const auto& x = t.node(ia).values;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const double s = 1.0 / (1.0 + std::exp(-x[i]));
                  grads[ia][i] += g[i] * s * (1.0 - s);
                }
              });
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  const std::size_t ia = a.id();
  return make("relu", a.shape(), std::move(out),
              [ia](const Tape& t, const std::vector<double>& g,
                   std::vector<std::vector<double>>& grads) {
                const auto& x = t.node(ia).values;
                for (std::size_t i = 0; i < g.size(); ++i)
                  if (x[i] > 0.0) grads[ia][i] += g[i];
              });
}

Tensor Tape::log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.values()[i] <= 0.0) {
      throw std::domain_error("log: non-positive input " +
                              std::to_string(a.values()[i]));
    }
    out[i] = std::log(a.values()[i]);
  }
  const std::size_t ia = a.id();
  return make("log", a.shape(), std::move(out),
              [ia](const Tape& t, const std::vector<double>& g,
                   std::vector<std::vector<double>>& grads) {
                const auto& x = t.node(ia).values;
                for (std::size_t i = 0; i < g.size(); ++i)
                  grads[ia][i] += g[i] / x[i];
              });
}

Tensor Tape::sin(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(a.values()[i]);
  const std::size_t ia = a.id();
  return make("sin", a.shape(), std::move(out),
              [ia](const Tape& t, const std::vector<double>& g,
                   std::vector<std::vector<double>>& grads) {
                const auto& x = t.node(ia).values;
                for (std::size_t i = 0; i < g.size(); ++i)
                  grads[ia][i] += g[i] * std::cos(x[i]);
              });
}

Tensor Tape::cos(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(a.values()[i]);
  const std::size_t ia = a.id();
  return make("cos", a.shape(), std::move(out),
              [ia](const Tape& t, const std::vector<double>& g,
                   std::vector<std::vector<double>>& grads) {
                const auto& x = t.node(ia).values;
                for (std::size_t i = 0; i < g.size(); ++i)
                  grads[ia][i] -= g[i] * std::sin(x[i]);
              });
}

Tensor Tape::abs(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.values()[i]);
  const std::size_t ia = a.id();
  return make("abs", a.shape(), std::move(out),
              [ia](const Tape& t, const std::vector<double>& g,
                   std::vector<std::vector<double>>& grads) {
                const auto& x = t.node(ia).values;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  if (x[i] > 0.0)
                    grads[ia][i] += g[i];
                  else if (x[i] < 0.0)
                    grads[ia][i] -= g[i];
                }
              });
}

Tensor Tape::row_softmax(const Tensor& a) {
  require_matrix("row_softmax", a.shape());
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = a.values()[i * c];
    for (std::size_t j = 1; j < c; ++j)
      mx = std::max(mx, a.values()[i * c + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(a.values()[i * c + j] - mx);
      denom += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= denom;
  }
  const std::size_t ia = a.id();
  const std::size_t self = nodes_.size();  // id this node will get
  return make("row_softmax", {r, c}, std::move(out),
              [ia, self, r, c](const Tape& t, const std::vector<double>& g,
                               std::vector<std::vector<double>>& grads) {
                const auto& s = t.node(self).values;
                for (std::size_t i = 0; i < r; ++i) {
                  double dot = 0.0;
                  for (std::size_t j = 0; j < c; ++j)
                    dot += g[i * c + j] * s[i * c + j];
                  for (std::size_t j = 0; j < c; ++j)
                    grads[ia][i * c + j] +=
                        s[i * c + j] * (g[i * c + j] - dot);
                }
              });
}

Tensor Tape::layer_norm(const Tensor& a, double epsilon) {
  require_matrix("layer_norm", a.shape());
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  require(c >= 2, "layer_norm: need at least 2 features per row");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += a.values()[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = a.values()[i * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = (a.values()[i * c + j] - mean) * inv;
  }
  const std::size_t ia = a.id();
  const std::size_t self = nodes_.size();
  return make(
      "layer_norm", {r, c}, std::move(out),
      [ia, self, r, c, epsilon](const Tape& t, const std::vector<double>& g,
                                std::vector<std::vector<double>>& grads) {
        const auto& x = t.node(ia).values;
        const auto& y = t.node(self).values;
        for (std::size_t i = 0; i < r; ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < c; ++j) mean += x[i * c + j];
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double d = x[i * c + j] - mean;
            var += d * d;
          }
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + epsilon);
          double gmean = 0.0, gydot = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gmean += g[i * c + j];
            gydot += g[i * c + j] * y[i * c + j];
          }
          gmean /= static_cast<double>(c);
          gydot /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j)
            grads[ia][i * c + j] +=
                inv * (g[i * c + j] - gmean - y[i * c + j] * gydot);
        }
      });
}

Tensor Tape::sum(const Tensor& a) {
  double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  const std::size_t ia = a.id();
  const std::size_t n = a.size();
  return make("sum", {1}, {total},
              [ia, n](const Tape&, const std::vector<double>& g,
                      std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < n; ++i) grads[ia][i] += g[0];
              });
}

Tensor Tape::mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  const std::size_t ia = a.id();
  const std::size_t cnt = a.size();
  return make("mean", {1}, {total / n},
              [ia, cnt, n](const Tape&, const std::vector<double>& g,
                           std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < cnt; ++i)
                  grads[ia][i] += g[0] / n;
              });
}

Tensor Tape::select_rows(const Tensor& a,
                         const std::vector<std::size_t>& rows) {
  require_matrix("select_rows", a.shape());
  const std::size_t c = a.shape()[1];
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (std::size_t r : rows) {
    if (r >= a.shape()[0]) {
      throw std::out_of_range("select_rows: row " + std::to_string(r) +
                              " out of " + shape_str(a.shape()));
    }
    out.insert(out.end(), a.values().begin() + r * c,
               a.values().begin() + (r + 1) * c);
  }
  const std::size_t ia = a.id();
  return make("select_rows", {rows.size(), c}, std::move(out),
              [ia, rows, c](const Tape&, const std::vector<double>& g,
                            std::vector<std::vector<double>>& grads) {
                for (std::size_t i = 0; i < rows.size(); ++i)
                  for (std::size_t j = 0; j < c; ++j)
                    grads[ia][rows[i] * c + j] += g[i * c + j];
              });
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = parts[0].shape().size() == 2 ? parts[0].shape()[1]
                                                     : parts[0].size();
  std::size_t rows = 0;
  std::vector<double> out;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // id, row count
  for (const Tensor& p : parts) {
    require_matrix("concat_rows", p.shape());
    require(p.shape()[1] == c,
            op_shape_error("concat_rows", parts[0].shape(), p.shape()));
    rows += p.shape()[0];
    out.insert(out.end(), p.values().begin(), p.values().end());
    spans.emplace_back(p.id(), p.shape()[0]);
  }
  return make("concat_rows", {rows, c}, std::move(out),
              [spans, c](const Tape&, const std::vector<double>& g,
                         std::vector<std::vector<double>>& grads) {
                std::size_t offset = 0;
                for (const auto& [id, r] : spans) {
                  for (std::size_t i = 0; i < r * c; ++i)
                    grads[id][i] += g[offset + i];
                  offset += r * c;
                }
              });
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.shape()));
  }
  Gradients result;
  auto& grads = result.by_id_;
  grads.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    grads[i].assign(nodes_[i].values.size(), 0.0);
  grads[loss.id()][0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this, grads[i], grads);
  }
  return result;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& program,
                  const Shape& shape, const std::vector<double>& point,
                  double step, std::size_t max_coords, std::uint64_t seed) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");
  Tape tape;
  Tensor x = tape.leaf(shape, point);
  Tensor loss = program(tape, x);
  Gradients grads = tape.backward(loss);
  const std::vector<double>& analytic = grads.of(x);

  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coords; ++i) {
      std::size_t j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(i),
                          static_cast<int>(coords.size() - 1)));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(max_coords);
  }

  double max_err = 0.0;
  for (std::size_t c : coords) {
    std::vector<double> p = point;
    p[c] += step;
    Tape tp;
    const double fp = program(tp, tp.leaf(shape, p)).scalar();
    p[c] -= 2.0 * step;
    Tape tm;
    const double fm = program(tm, tm.leaf(shape, p)).scalar();
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::abs(analytic[c] - numeric) /
                       std::max(1.0, std::abs(analytic[c]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace spotting
