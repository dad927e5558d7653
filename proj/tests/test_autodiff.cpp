#include "bml/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using bml::ad::Array;
using bml::ad::Tape;
using bml::ad::Var;
namespace ad = bml::ad;

namespace {

Array random_array(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  Array a(r, c);
  for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = u(gen);
  return a;
}

// Central differences of a scalar function of several arrays.
using Fn = std::function<Var(const std::vector<Var>&)>;

std::vector<Array> numeric_grad(const Fn& f, std::vector<Array> inputs, double h = 1e-6) {
  std::vector<Array> out;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    Array g(inputs[a].rows(), inputs[a].cols());
    for (Eigen::Index k = 0; k < inputs[a].size(); ++k) {
      const double keep = inputs[a](k);
      auto eval = [&](double v) {
        inputs[a](k) = v;
        std::vector<Var> vs;
        for (const auto& in : inputs) vs.emplace_back(in);
        return f(vs).value()(0, 0);
      };
      g(k) = (eval(keep + h) - eval(keep - h)) / (2.0 * h);
      inputs[a](k) = keep;
    }
    out.push_back(g);
  }
  return out;
}

void check_gradient(const Fn& f, const std::vector<Array>& inputs) {
  Tape tape;
  std::vector<Var> vs;
  for (const auto& in : inputs) vs.push_back(tape.variable(in));
  tape.backward(f(vs));
  const auto expected = numeric_grad(f, inputs);
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Array got = tape.gradient(vs[a]);
    REQUIRE(got.rows() == inputs[a].rows());
    REQUIRE(got.cols() == inputs[a].cols());
    const double err = (got - expected[a]).abs().maxCoeff() / std::max(1.0, expected[a].abs().maxCoeff());
    CHECK(err < 1e-7);
  }
}

}  // namespace

TEST_CASE("elementwise ops and broadcasting") {
  const Array a = random_array(4, 3, 1), col = random_array(4, 1, 2), row = random_array(1, 3, 3),
              s = random_array(1, 1, 4);
  check_gradient([](const auto& v) { return ad::sum(v[0] * v[1] + v[2] - v[3]); }, {a, col, row, s});
  check_gradient([](const auto& v) { return ad::sum(ad::sin(v[0]) * ad::exp(v[1]) + ad::cos(v[0]) * 2.0); }, {a, row});
  check_gradient([](const auto& v) { return ad::sum(ad::log(v[0]) + ad::pow(v[0], 3) - ad::square(v[1])); }, {a, col});
  check_gradient([](const auto& v) { return ad::mean(ad::relu(v[0] - 0.9)) + ad::sum(-v[1] * 3.0 + 1.0); }, {a, s});
}

TEST_CASE("reductions and matrix ops") {
  const Array a = random_array(5, 3, 5), b = random_array(5, 3, 6), w = random_array(3, 2, 7);
  check_gradient([](const auto& v) { return ad::sum(ad::square_norm(v[0]) * ad::dot(v[0], v[1])); }, {a, b});
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::matmul(v[0], v[1]))); }, {a, w});
  check_gradient([](const auto& v) { return ad::sum(ad::sum_cols(v[0]) * ad::sum_cols(v[1])); }, {a, b});

  // 2x3 matrices per row applied to 3-vectors
  const Array mats = random_array(5, 6, 8);
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::batched_matvec(v[0], v[1], 2, 3))); }, {mats, a});
}

TEST_CASE("structural ops") {
  const Array a = random_array(6, 2, 9), b = random_array(6, 1, 10);
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::concat_cols(v[0], v[1]))); }, {a, b});
  check_gradient(
      [](const auto& v) {
        const Var parts[] = {v[0], v[1] * 2.0};
        return ad::sum(ad::square(ad::concat_rows(parts)));
      },
      {a, random_array(3, 2, 11)});
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::slice_rows(v[0], 1, 3))) + ad::sum(ad::exp(ad::slice_cols(v[0], 1, 1))); },
                 {a});
  const std::vector<Eigen::Index> rows{5, 0, 0, 3};
  check_gradient([&](const auto& v) { return ad::sum(ad::square(ad::gather_rows(v[0], rows))); }, {a});
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::tile_rows(v[0], 3))); }, {b});
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::reverse_cumsum_blocks(v[0], 2))); }, {a});
  check_gradient([](const auto& v) { return ad::sum(ad::square(ad::sum_blocks(v[0], 3))); }, {a});
}

TEST_CASE("reverse cumulative block sum by hand") {
  Array a(6, 1);
  a << 1, 2, 3, 4, 5, 6;
  const Array r = ad::reverse_cumsum_blocks(Var(a), 2).value();
  Array expect(6, 1);
  expect << 9, 12, 8, 10, 5, 6;
  CHECK((r - expect).abs().maxCoeff() == 0.0);
  const Array s = ad::sum_blocks(Var(a), 2).value();
  CHECK(s(0, 0) == 9.0);
  CHECK(s(1, 0) == 12.0);
}

TEST_CASE("constants never touch a tape") {
  const Var c(random_array(3, 3, 12));
  const Var d = ad::sin(c) * 2.0 + c;
  CHECK_FALSE(d.tracked());
  Tape tape;
  const Var x = tape.variable(random_array(3, 3, 13));
  const Var y = ad::sum(x * c);
  CHECK(y.tracked());
  tape.backward(y);
  CHECK((tape.gradient(x) - c.value()).abs().maxCoeff() == 0.0);
  // a second sweep does not double the gradient
  tape.backward(y);
  CHECK((tape.gradient(x) - c.value()).abs().maxCoeff() == 0.0);
}

TEST_CASE("shape mismatch is rejected") {
  CHECK_THROWS(Var(Array::Zero(3, 2)) + Var(Array::Zero(4, 2)));
}
