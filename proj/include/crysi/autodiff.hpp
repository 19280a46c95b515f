#pragma once

// Minimal define-by-run reverse-mode automatic differentiation over dense
// row-major double arrays. A Tape records every operation of one forward pass;
// Tape::backward walks the records in reverse once.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace crysi::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;
  std::size_t node = static_cast<std::size_t>(-1);

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(Shape s);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape.front(); }
  std::size_t cols() const {
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  const std::vector<double>& value() const;
  // Populated after Tape::backward; zeros for nodes the loss does not reach.
  const std::vector<double>& grad() const;
  std::size_t size() const { return value().size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable input.
  Var leaf(Tensor value);
  // A value gradients are not propagated into.
  Var constant(Tensor value);

  // Populates gradients of a scalar loss with respect to every recorded node.
  // A tape can be differentiated once; a second call throws.
  void backward(const Var& loss);

  Tensor snapshot(const Var& v) const;
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Records a node; `backprop` receives the output gradient and must
  // accumulate into the inputs through grad_of().
  Var record(Tensor value, std::function<void(const std::vector<double>&)> backprop);
  std::vector<double>& grad_of(const Var& v);

 private:
  friend class Var;
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(const std::vector<double>&)> backprop;
  };
  const Node& node(const Var& v) const;
  void check_owner(const Var& v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Elementwise; shapes must agree exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
// a: n x m, row: 1 x m (or m); row is added to every row of a.
Var add_row(const Var& a, const Var& row);
// a: n x m, col: n x 1; each row of a multiplied by the matching entry of col.
Var mul_col(const Var& a, const Var& col);

Var matmul(const Var& a, const Var& b);

Var sum(const Var& a);
Var mean(const Var& a);
// n x m -> n x 1
Var row_sum(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(const Var& a, Shape shape);

Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);

// Row-wise over the last dimension of a 2-D array.
Var softmax(const Var& a);
Var log_softmax(const Var& a);

// out[k] = a[idx[k]] (rows).
Var gather_rows(const Var& a, const std::vector<std::size_t>& idx);
// out[seg[k]] += a[k] (rows); out has n_segments rows.
Var segment_sum(const Var& a, const std::vector<std::size_t>& seg, std::size_t n_segments);
Var segment_mean(const Var& a, const std::vector<std::size_t>& seg, std::size_t n_segments);
// out[k] = a[k, col[k]] as an n x 1 column.
Var pick(const Var& a, const std::vector<std::size_t>& col);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

}  // namespace crysi::ad
