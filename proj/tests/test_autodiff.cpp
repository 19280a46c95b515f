#include <doctest.h>

#include <cmath>
#include <functional>

#include "crysi/autodiff.hpp"
#include "crysi/rng.hpp"

using namespace crysi;
using namespace crysi::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Contracts the op's output with fixed random weights so every output entry
// contributes to the scalar, then compares tape gradients with central
// differences of a plain re-evaluation.
double max_grad_error(const std::vector<Tensor>& inputs, const std::function<Var(Tape&, std::vector<Var>&)>& op,
                      std::uint64_t seed = 7) {
  auto scalar = [&](const std::vector<Tensor>& in, Tape& tape, std::vector<Var>& vars) {
    vars.clear();
    for (const auto& t : in) vars.push_back(tape.leaf(t));
    Var out = op(tape, vars);
    Rng wr(seed);
    Tensor w = Tensor::zeros(out.shape());
    for (auto& v : w.data) v = wr.uniform(-1.0, 1.0);
    return sum(mul(out, tape.constant(w)));
  };
  Tape tape;
  std::vector<Var> vars;
  Var loss = scalar(inputs, tape, vars);
  tape.backward(loss);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto up = inputs, dn = inputs;
      up[k].data[i] += h;
      dn[k].data[i] -= h;
      Tape t1, t2;
      std::vector<Var> v1, v2;
      const double fd = (scalar(up, t1, v1).item() - scalar(dn, t2, v2).item()) / (2 * h);
      const double g = vars[k].grad()[i];
      worst = std::max(worst, std::abs(fd - g) / std::max(1.0, std::abs(fd)));
    }
  return worst;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("elementwise and unary ops match finite differences") {
    Rng rng(1);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    const Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    using Op = std::function<Var(Tape&, std::vector<Var>&)>;
    const std::vector<std::pair<const char*, Op>> binary{
        {"add", [](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); }},
        {"sub", [](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); }},
        {"mul", [](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); }},
    };
    for (const auto& [name, op] : binary) {
      CAPTURE(name);
      CHECK(max_grad_error({a, b}, op) < 1e-8);
    }
    const std::vector<std::pair<const char*, Op>> unary{
        {"scale", [](Tape&, std::vector<Var>& v) { return scale(v[0], -2.5); }},
        {"add_scalar", [](Tape&, std::vector<Var>& v) { return add_scalar(v[0], 3.0); }},
        {"sin", [](Tape&, std::vector<Var>& v) { return sin(v[0]); }},
        {"cos", [](Tape&, std::vector<Var>& v) { return cos(v[0]); }},
        {"exp", [](Tape&, std::vector<Var>& v) { return exp(v[0]); }},
        {"tanh", [](Tape&, std::vector<Var>& v) { return tanh(v[0]); }},
        {"square", [](Tape&, std::vector<Var>& v) { return square(v[0]); }},
        {"softmax", [](Tape&, std::vector<Var>& v) { return softmax(v[0]); }},
        {"log_softmax", [](Tape&, std::vector<Var>& v) { return log_softmax(v[0]); }},
        {"row_sum", [](Tape&, std::vector<Var>& v) { return row_sum(v[0]); }},
        {"mean", [](Tape&, std::vector<Var>& v) { return mean(v[0]); }},
        {"reshape", [](Tape&, std::vector<Var>& v) { return reshape(v[0], {4, 3}); }},
    };
    for (const auto& [name, op] : unary) {
      CAPTURE(name);
      CHECK(max_grad_error({a}, op) < 1e-8);
    }
    CHECK(max_grad_error({pos}, [](Tape&, std::vector<Var>& v) { return log(v[0]); }) < 1e-8);
  }

  TEST_CASE("relu gradient away from the kink") {
    Tensor a({1, 4}, {-1.0, -0.2, 0.3, 2.0});
    CHECK(max_grad_error({a}, [](Tape&, std::vector<Var>& v) { return relu(v[0]); }) < 1e-8);
  }

  TEST_CASE("matrix and indexing ops match finite differences") {
    Rng rng(2);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const Tensor row = random_tensor({1, 4}, rng), col = random_tensor({3, 1}, rng);
    CHECK(max_grad_error({a, b}, [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }) < 1e-8);
    CHECK(max_grad_error({a, row}, [](Tape&, std::vector<Var>& v) { return add_row(v[0], v[1]); }) < 1e-8);
    CHECK(max_grad_error({a, col}, [](Tape&, std::vector<Var>& v) { return mul_col(v[0], v[1]); }) < 1e-8);
    CHECK(max_grad_error({a, col}, [](Tape&, std::vector<Var>& v) { return concat_cols({v[0], v[1], v[0]}); }) <
          1e-8);
    CHECK(max_grad_error({a}, [](Tape&, std::vector<Var>& v) { return gather_rows(v[0], {2, 0, 2, 1}); }) < 1e-8);
    CHECK(max_grad_error({a}, [](Tape&, std::vector<Var>& v) { return segment_sum(v[0], {1, 0, 1}, 3); }) < 1e-8);
    CHECK(max_grad_error({a}, [](Tape&, std::vector<Var>& v) { return segment_mean(v[0], {1, 0, 1}, 2); }) < 1e-8);
    CHECK(max_grad_error({a}, [](Tape&, std::vector<Var>& v) { return pick(v[0], {3, 0, 1}); }) < 1e-8);
  }

  TEST_CASE("forward values") {
    Tape tape;
    Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var b = tape.leaf(Tensor({2, 2}, {5, 6, 7, 8}));
    CHECK(matmul(a, b).value() == std::vector<double>{19, 22, 43, 50});
    CHECK(sum(a).item() == 10.0);
    CHECK(segment_sum(a, {1, 1}, 2).value() == std::vector<double>{0, 0, 4, 6});
    const auto sm = softmax(a).value();
    CHECK(sm[0] + sm[1] == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("log_softmax is stable for large logits") {
    Tape tape;
    Var a = tape.leaf(Tensor({1, 3}, {1000.0, 0.0, -1000.0}));
    const auto v = log_softmax(a).value();
    CHECK(v[0] == doctest::Approx(0.0));
    CHECK(std::isfinite(v[2]));
  }

  TEST_CASE("shared subexpressions accumulate gradients") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(3.0));
    Var y = mul(x, x) + x;  // dy/dx = 2x + 1
    tape.backward(sum(y));
    CHECK(x.grad()[0] == 7.0);
  }

  TEST_CASE("constants receive no gradient and unreached leaves get zeros") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(2.0));
    Var c = tape.constant(Tensor::scalar(5.0));
    Var unused = tape.leaf(Tensor({2}, {1.0, 1.0}));
    tape.backward(sum(mul(x, c)));
    CHECK(x.grad()[0] == 5.0);
    CHECK(unused.grad() == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("misuse is rejected") {
    Tape tape;
    Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var b = tape.leaf(Tensor({3, 1}, {1, 2, 3}));
    CHECK_THROWS(add(a, b));
    CHECK_THROWS(matmul(a, b));
    CHECK_THROWS(tape.backward(a));  // not a scalar
    Var s = sum(a);
    tape.backward(s);
    CHECK_THROWS(tape.backward(s));
    Tape other;
    Var o = other.leaf(Tensor::scalar(1.0));
    CHECK_THROWS(add(s, o));
  }
}
