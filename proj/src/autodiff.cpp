#include "crysi/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace crysi::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_same(const std::string& op, const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument(op + ": operands live on different tapes");
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

void require_2d(const std::string& op, const Var& a) {
  if (a.shape().size() != 2) throw std::invalid_argument(op + ": expected 2-D operand, got " + to_string(a.shape()));
}

template <typename F, typename D>
Var unary(const Var& a, F f, D df) {
  const auto& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Tape* tape = a.tape();
  auto result = std::make_shared<std::vector<double>>(out);
  return tape->record(Tensor(a.shape(), std::move(out)), [a, df, result](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    const auto& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], (*result)[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + to_string(shape) + " does not hold " +
                                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape s) {
  const auto n = numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

// ---------------------------------------------------------------------------
// Var / Tape

const Shape& Var::shape() const { return tape_->node(*this).value.shape; }
const std::vector<double>& Var::value() const { return tape_->node(*this).value.data; }
const std::vector<double>& Var::grad() const {
  const auto& n = tape_->node(*this);
  if (n.grad.empty()) throw std::logic_error("Var::grad: backward has not run on this tape");
  return n.grad;
}
std::size_t Var::rows() const { return tape_->node(*this).value.rows(); }
std::size_t Var::cols() const { return tape_->node(*this).value.cols(); }
double Var::item() const {
  if (size() != 1) throw std::invalid_argument("Var::item: not a scalar " + to_string(shape()));
  return value()[0];
}

Var Tape::leaf(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::constant(Tensor value) { return record(std::move(value), nullptr); }

Var Tape::record(Tensor value, std::function<void(const std::vector<double>&)> backprop) {
  if (consumed_) throw std::logic_error("Tape: cannot record after backward; start a new tape");
  value.node = nodes_.size();
  nodes_.push_back(Node{std::move(value), {}, std::move(backprop)});
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(const Var& v) const {
  check_owner(v);
  return nodes_[v.id()];
}

void Tape::check_owner(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw std::invalid_argument("Tape: variable from another tape");
}

std::vector<double>& Tape::grad_of(const Var& v) {
  check_owner(v);
  return nodes_[v.id()].grad;
}

void Tape::backward(const Var& loss) {
  check_owner(loss);
  if (consumed_) throw std::logic_error("Tape::backward: tape already differentiated; re-run the forward pass");
  if (loss.size() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar, got " + to_string(loss.shape()));
  consumed_ = true;
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backprop) continue;
    // Inputs always precede their outputs, so this node's gradient is final.
    n.backprop(n.grad);
  }
}

Tensor Tape::snapshot(const Var& v) const {
  const auto& n = node(v);
  Tensor t = n.value;
  if (!n.grad.empty()) t.grad = n.grad;
  return t;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  std::vector<double> out(a.value());
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, b](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = b.tape()->grad_of(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.value());
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, b](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = b.tape()->grad_of(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.value());
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, b](const std::vector<double>& g) {
    const auto& x = a.value();
    const auto& y = b.value();
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    auto& gb = b.tape()->grad_of(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
  });
}

Var scale(const Var& a, double c) {
  std::vector<double> out(a.value());
  for (auto& v : out) v *= c;
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, c](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_scalar(const Var& a, double c) {
  std::vector<double> out(a.value());
  for (auto& v : out) v += c;
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var add_row(const Var& a, const Var& row) {
  require_2d("add_row", a);
  if (a.tape() != row.tape()) throw std::invalid_argument("add_row: operands live on different tapes");
  const std::size_t n = a.rows(), m = a.cols();
  if (row.size() != m) shape_error("add_row", a.shape(), row.shape());
  std::vector<double> out(a.value());
  const auto& r = row.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += r[j];
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, row, n, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gr = row.tape()->grad_of(row);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gr[j] += g[i * m + j];
  });
}

Var mul_col(const Var& a, const Var& col) {
  require_2d("mul_col", a);
  if (a.tape() != col.tape()) throw std::invalid_argument("mul_col: operands live on different tapes");
  const std::size_t n = a.rows(), m = a.cols();
  if (col.size() != n) shape_error("mul_col", a.shape(), col.shape());
  std::vector<double> out(a.value());
  const auto& c = col.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] *= c[i];
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, col, n, m](const std::vector<double>& g) {
    const auto& x = a.value();
    const auto& c = col.value();
    auto& ga = a.tape()->grad_of(a);
    auto& gc = col.tape()->grad_of(col);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        ga[i * m + j] += g[i * m + j] * c[i];
        gc[i] += g[i * m + j] * x[i * m + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions

Var matmul(const Var& a, const Var& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  if (a.tape() != b.tape()) throw std::invalid_argument("matmul: operands live on different tapes");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) shape_error("matmul", a.shape(), b.shape());
  std::vector<double> out(n * m);
  MapMat(out.data(), n, m).noalias() = ConstMapMat(a.value().data(), n, k) * ConstMapMat(b.value().data(), k, m);
  return a.tape()->record(Tensor({n, m}, std::move(out)), [a, b, n, k, m](const std::vector<double>& g) {
    ConstMapMat G(g.data(), n, m);
    MapMat(a.tape()->grad_of(a).data(), n, k).noalias() += G * ConstMapMat(b.value().data(), k, m).transpose();
    MapMat(b.tape()->grad_of(b).data(), k, m).noalias() += ConstMapMat(a.value().data(), n, k).transpose() * G;
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  return a.tape()->record(Tensor({1}, {s}), [a](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (auto& v : ga) v += g[0];
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw std::invalid_argument("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var row_sum(const Var& a) {
  require_2d("row_sum", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n, 0.0);
  const auto& x = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += x[i * m + j];
  return a.tape()->record(Tensor({n, 1}, std::move(out)), [a, n, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape* tape = parts.front().tape();
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d("concat_cols", p);
    if (p.tape() != tape) throw std::invalid_argument("concat_cols: operands live on different tapes");
    if (p.rows() != n) shape_error("concat_cols", parts.front().shape(), p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& x = parts[q].value();
    const std::size_t w = widths[q];
    for (std::size_t i = 0; i < n; ++i) std::copy_n(x.begin() + i * w, w, out.begin() + i * total + offset);
    offset += w;
  }
  return tape->record(Tensor({n, total}, std::move(out)), [parts, widths, n, total](const std::vector<double>& g) {
    std::size_t offset = 0;
    for (std::size_t q = 0; q < parts.size(); ++q) {
      auto& gp = parts[q].tape()->grad_of(parts[q]);
      const std::size_t w = widths[q];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + offset + j];
      offset += w;
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  return a.tape()->record(Tensor(std::move(shape), a.value()), [a](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

Var sin(const Var& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}
Var cos(const Var& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}
Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
Var log(const Var& a) {
  for (double v : a.value())
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}
Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}
Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}
Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax(const Var& a) {
  require_2d("softmax", a);
  const std::size_t n = a.rows(), m = a.cols();
  const auto& x = a.value();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = *std::max_element(x.begin() + i * m, x.begin() + (i + 1) * m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (out[i * m + j] = std::exp(x[i * m + j] - mx));
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  auto probs = std::make_shared<std::vector<double>>(out);
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, probs, n, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    const auto& p = *probs;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * p[i * m + j];
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += p[i * m + j] * (g[i * m + j] - dot);
    }
  });
}

Var log_softmax(const Var& a) {
  require_2d("log_softmax", a);
  const std::size_t n = a.rows(), m = a.cols();
  const auto& x = a.value();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = *std::max_element(x.begin() + i * m, x.begin() + (i + 1) * m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(x[i * m + j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i * m + j] - lz;
  }
  auto logp = std::make_shared<std::vector<double>>(out);
  return a.tape()->record(Tensor(a.shape(), std::move(out)), [a, logp, n, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    const auto& lp = *logp;
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < m; ++j) gs += g[i * m + j];
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i * m + j] - std::exp(lp[i * m + j]) * gs;
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing

Var gather_rows(const Var& a, const std::vector<std::size_t>& idx) {
  require_2d("gather_rows", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(idx.size() * m);
  const auto& x = a.value();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= n) throw std::out_of_range("gather_rows: index " + std::to_string(idx[k]) + " >= " + std::to_string(n));
    std::copy_n(x.begin() + idx[k] * m, m, out.begin() + k * m);
  }
  return a.tape()->record(Tensor({idx.size(), m}, std::move(out)), [a, idx, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < m; ++j) ga[idx[k] * m + j] += g[k * m + j];
  });
}

Var segment_sum(const Var& a, const std::vector<std::size_t>& seg, std::size_t n_segments) {
  require_2d("segment_sum", a);
  const std::size_t m = a.cols();
  if (seg.size() != a.rows()) {
    throw std::invalid_argument("segment_sum: " + std::to_string(seg.size()) + " segment ids for " +
                                std::to_string(a.rows()) + " rows");
  }
  std::vector<double> out(n_segments * m, 0.0);
  const auto& x = a.value();
  for (std::size_t k = 0; k < seg.size(); ++k) {
    if (seg[k] >= n_segments) throw std::out_of_range("segment_sum: segment id out of range");
    for (std::size_t j = 0; j < m; ++j) out[seg[k] * m + j] += x[k * m + j];
  }
  return a.tape()->record(Tensor({n_segments, m}, std::move(out)), [a, seg, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < m; ++j) ga[k * m + j] += g[seg[k] * m + j];
  });
}

Var segment_mean(const Var& a, const std::vector<std::size_t>& seg, std::size_t n_segments) {
  std::vector<double> counts(n_segments, 0.0);
  for (auto s : seg) {
    if (s >= n_segments) throw std::out_of_range("segment_mean: segment id out of range");
    counts[s] += 1.0;
  }
  std::vector<double> inv(n_segments);
  for (std::size_t s = 0; s < n_segments; ++s) inv[s] = counts[s] > 0.0 ? 1.0 / counts[s] : 0.0;
  Var summed = segment_sum(a, seg, n_segments);
  return mul_col(summed, a.tape()->constant(Tensor({n_segments, 1}, std::move(inv))));
}

Var pick(const Var& a, const std::vector<std::size_t>& col) {
  require_2d("pick", a);
  const std::size_t n = a.rows(), m = a.cols();
  if (col.size() != n) throw std::invalid_argument("pick: need one column index per row");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (col[i] >= m) throw std::out_of_range("pick: column index out of range");
    out[i] = a.value()[i * m + col[i]];
  }
  return a.tape()->record(Tensor({n, 1}, std::move(out)), [a, col, m](const std::vector<double>& g) {
    auto& ga = a.tape()->grad_of(a);
    for (std::size_t i = 0; i < col.size(); ++i) ga[i * m + col[i]] += g[i];
  });
}

}  // namespace crysi::ad
