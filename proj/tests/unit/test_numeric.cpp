#include <atomic>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pathohr/error.hpp"
#include "pathohr/numeric/grad_check.hpp"
#include "pathohr/numeric/kernels.hpp"
#include "pathohr/numeric/matrix.hpp"
#include "pathohr/numeric/ops.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/numeric/tape.hpp"
#include "pathohr/parallel.hpp"

using pathohr::Matrix;
namespace ad = pathohr::ad;

TEST_CASE("softmax_rows examples") {
  const Matrix half = pathohr::softmax_rows(Matrix::from_rows({{0.0, 0.0}}));
  CHECK(half(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  const Matrix thirds = pathohr::softmax_rows(Matrix::from_rows({{std::log(2.0), 0.0}}));
  CHECK(std::abs(thirds(0, 0) - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(thirds(0, 1) - 1.0 / 3.0) < 1e-15);

  CHECK_THROWS_AS(pathohr::softmax_rows(Matrix()), pathohr::DimensionError);
}

TEST_CASE("softmax_rows sums, oracle agreement and shift invariance") {
  const auto raw = oracle::random_mat(5, 7, 11, -4.0, 4.0);
  const Matrix out = pathohr::softmax_rows(oracle::to_matrix(raw));
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double total = 0.0;
    for (double v : out.row(r)) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  CHECK(oracle::max_diff(oracle::softmax_rows(raw), out) < 1e-14);

  auto shifted = raw;
  for (std::size_t r = 0; r < shifted.size(); ++r)
    for (double& v : shifted[r]) v += 3.5 * static_cast<double>(r) - 100.0;
  CHECK(pathohr::max_abs_diff(pathohr::softmax_rows(oracle::to_matrix(shifted)), out) < 1e-10);

  // Large logits stay finite thanks to the max subtraction.
  const Matrix big = pathohr::softmax_rows(Matrix::from_rows({{1000.0, 999.0, -1000.0}}));
  CHECK(big.all_finite());
}

TEST_CASE("gelu examples") {
  CHECK(pathohr::gelu(0.0) == 0.0);
  CHECK(std::abs(pathohr::gelu(10.0) - 10.0) < 1e-9);
  CHECK(std::abs(pathohr::gelu(1.0) - 0.8413447460685429) < 1e-15);
  for (double x = -6.0; x <= 6.0; x += 0.37) CHECK(std::abs(pathohr::gelu(x) - oracle::gelu(x)) < 1e-14);
}

TEST_CASE("gelu derivative matches central differences") {
  for (double x = -5.0; x <= 5.0; x += 0.29) {
    const double h = 1e-5;
    const double numeric = (oracle::gelu(x + h) - oracle::gelu(x - h)) / (2 * h);
    CHECK(std::abs(pathohr::gelu_derivative(x) - numeric) < 1e-8);
  }
}

TEST_CASE("layer_norm examples") {
  const std::vector<double> ones(6, 1.0), zeros(6, 0.0);
  for (double v : pathohr::layer_norm(std::vector<double>(6, 4.2), ones, zeros)) CHECK(v == 0.0);

  const std::vector<double> g2{1.0, 1.0}, b2{0.0, 0.0};
  const auto pm = pathohr::layer_norm(std::vector<double>{1.0, -1.0}, g2, b2, 1e-12);
  CHECK(std::abs(pm[0] - 1.0) < 1e-9);
  CHECK(std::abs(pm[1] + 1.0) < 1e-9);

  const auto v = oracle::random_mat(1, 16, 3, -5.0, 9.0)[0];
  const std::vector<double> g(16, 1.0), b(16, 0.0);
  const auto out = pathohr::layer_norm(v, g, b, 1e-5);
  double mean = 0.0, var = 0.0;
  for (double x : out) mean += x;
  mean /= 16.0;
  for (double x : out) var += (x - mean) * (x - mean);
  var /= 16.0;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-6);

  const auto gain = oracle::random_mat(1, 16, 4)[0];
  const auto bias = oracle::random_mat(1, 16, 5)[0];
  const auto affine = pathohr::layer_norm(v, gain, bias, 1e-5);
  const auto expect = oracle::layer_norm(v, gain, bias, 1e-5);
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(affine[i] - expect[i]) < 1e-12);

  CHECK_THROWS_AS(pathohr::layer_norm(v, std::vector<double>(15, 1.0), b), pathohr::DimensionError);
}

TEST_CASE("linear_apply examples and naive oracle") {
  const auto x = oracle::random_mat(3, 4, 21);
  const Matrix xm = oracle::to_matrix(x);
  CHECK(pathohr::linear_apply(xm, Matrix::identity(4), std::vector<double>(4, 0.0)) == xm);

  const std::vector<double> b{0.5, -2.0};
  const Matrix rows = pathohr::linear_apply(xm, Matrix(4, 2, 0.0), b);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(rows(r, 0) == 0.5);
    CHECK(rows(r, 1) == -2.0);
  }

  const auto w = oracle::random_mat(4, 2, 22);
  CHECK(oracle::max_diff(oracle::matmul(x, w), pathohr::linear_apply(xm, oracle::to_matrix(w), {})) < 1e-12);
  CHECK(oracle::max_diff(oracle::affine(x, w, b), pathohr::linear_apply(xm, oracle::to_matrix(w), b)) < 1e-12);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 1 + seed % 5, k = 1 + (seed * 7) % 6, m = 1 + (seed * 3) % 4;
    const auto a = oracle::random_mat(n, k, 100 + seed);
    const auto ww = oracle::random_mat(k, m, 200 + seed);
    const auto bb = oracle::random_mat(1, m, 300 + seed)[0];
    CHECK(oracle::max_diff(oracle::affine(a, ww, bb),
                           pathohr::linear_apply(oracle::to_matrix(a), oracle::to_matrix(ww), bb)) < 1e-12);
  }

  CHECK_THROWS_AS(pathohr::linear_apply(xm, Matrix(3, 2), {}), pathohr::DimensionError);
}

TEST_CASE("matmul variants agree with the naive product") {
  const auto a = oracle::random_mat(4, 6, 31);
  const auto b = oracle::random_mat(6, 3, 32);
  const auto c = oracle::random_mat(5, 6, 33);
  const auto d = oracle::random_mat(4, 2, 34);
  CHECK(oracle::max_diff(oracle::matmul(a, b), pathohr::matmul(oracle::to_matrix(a), oracle::to_matrix(b))) < 1e-12);
  CHECK(oracle::max_diff(oracle::matmul(a, oracle::transpose(c)),
                         pathohr::matmul_nt(oracle::to_matrix(a), oracle::to_matrix(c))) < 1e-12);
  CHECK(oracle::max_diff(oracle::matmul(oracle::transpose(a), d),
                         pathohr::matmul_tn(oracle::to_matrix(a), oracle::to_matrix(d))) < 1e-12);
}

TEST_CASE("grad_check examples") {
  const pathohr::DifferentiableFn square = [](std::span<const double> p, std::vector<double>* g) {
    if (g) *g = {2.0 * p[0]};
    return p[0] * p[0];
  };
  const std::vector<double> three{3.0};
  const auto report = pathohr::grad_check_report(square, three, 1e-4);
  CHECK(report.worst_analytic == 6.0);
  CHECK(std::abs(report.worst_numeric - 6.0) < 1e-8);
  CHECK(report.max_relative_error < 1e-8);

  // Linear f, so the central difference is exact up to round-off; the
  // analytic side is offset by a known amount.
  const auto offset_linear = [](double slope, double offset) {
    return pathohr::DifferentiableFn([=](std::span<const double> p, std::vector<double>* g) {
      if (g) *g = {slope + offset};
      return slope * p[0];
    });
  };
  const std::vector<double> one{1.0};
  // Above the floor the error is relative to the larger side: 2e-3 / 2.002.
  CHECK(std::abs(pathohr::grad_check(offset_linear(2.0, 2e-3), one) - 2e-3 / 2.002) < 1e-9);
  // Below it the difference is divided by the floor: 1e-12 / 1e-6.
  CHECK(std::abs(pathohr::grad_check(offset_linear(1e-7, 1e-12), one) - 1e-6) < 1e-8);
  CHECK(pathohr::kGradCheckFloor == 1e-6);

  // A constant built on the tape receives an exactly-zero gradient.
  ad::Tape tape;
  const ad::Var w = tape.leaf(Matrix(1, 3, 0.7));
  const ad::Var c = tape.constant(Matrix(1, 1, 5.0));
  const ad::Var out = ad::add(ad::scale(ad::sum(w), 0.0), c);
  tape.backward(out);
  const Matrix gw = tape.grad(w), gc = tape.grad(c);
  for (double v : gw.data()) CHECK(v == 0.0);
  for (double v : gc.data()) CHECK(v == 0.0);

  const pathohr::DifferentiableFn bad = [](std::span<const double> p, std::vector<double>* g) {
    if (g) *g = {0.0};
    return p[0] > 0.0 ? std::nan("") : 0.0;
  };
  CHECK_THROWS_AS(pathohr::grad_check(bad, three), pathohr::NumericError);
}

namespace {

using Inputs = std::vector<oracle::Mat>;
using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Reduces an op's output to a scalar through a fixed random projection, then
// compares the tape gradient with central differences of that scalar.
double op_gradient_error(const Inputs& inputs, const Builder& build, std::uint64_t seed = 77) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (const auto& m : inputs) shapes.emplace_back(m.size(), m[0].size());

  auto evaluate = [&](const oracle::Vec& flat, oracle::Vec* grad) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    std::size_t offset = 0;
    for (auto [r, c] : shapes) {
      Matrix m(r, c);
      for (std::size_t i = 0; i < r * c; ++i) m.data()[i] = flat[offset + i];
      offset += r * c;
      vars.push_back(tape.leaf(std::move(m)));
    }
    const ad::Var out = build(tape, vars);
    const Matrix proj = oracle::to_matrix(oracle::random_mat(out.rows(), out.cols(), seed));
    const ad::Var scalar = ad::sum(ad::hadamard(out, tape.constant(proj)));
    if (grad) {
      tape.backward(scalar);
      grad->clear();
      for (const auto& v : vars) {
        const Matrix g = tape.grad(v);
        grad->insert(grad->end(), g.data().begin(), g.data().end());
      }
    }
    return scalar.value()(0, 0);
  };

  oracle::Vec flat;
  for (const auto& m : inputs) {
    const auto f = oracle::flat(m);
    flat.insert(flat.end(), f.begin(), f.end());
  }
  oracle::Vec analytic;
  evaluate(flat, &analytic);
  const auto numeric = oracle::numeric_gradient([&](const oracle::Vec& p) { return evaluate(p, nullptr); }, flat);
  return oracle::max_relative_error(analytic, numeric);
}

oracle::Mat rm(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return oracle::random_mat(r, c, seed, lo, hi);
}

}  // namespace

TEST_CASE("every differentiable op matches central differences") {
  const double tol = 1e-4;
  using V = std::vector<ad::Var>;

  CHECK(op_gradient_error({rm(3, 4, 1), rm(4, 2, 2)}, [](ad::Tape&, const V& v) { return ad::matmul(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 3), rm(5, 4, 4)}, [](ad::Tape&, const V& v) { return ad::matmul_nt(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 5)}, [](ad::Tape&, const V& v) { return ad::transpose(v[0]); }) < tol);
  CHECK(op_gradient_error({rm(2, 3, 6), rm(2, 3, 7)}, [](ad::Tape&, const V& v) { return ad::add(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(2, 3, 8), rm(2, 3, 9)}, [](ad::Tape&, const V& v) { return ad::sub(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(2, 3, 10), rm(2, 3, 11)}, [](ad::Tape&, const V& v) { return ad::hadamard(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(4, 3, 12), rm(1, 3, 13)}, [](ad::Tape&, const V& v) { return ad::add_row(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(3, 3, 14)}, [](ad::Tape&, const V& v) { return ad::scale(v[0], -1.7); }) < tol);
  CHECK(op_gradient_error({rm(3, 2, 15), rm(1, 1, 16)}, [](ad::Tape&, const V& v) { return ad::scale_by(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 17), rm(4, 5, 18), rm(1, 5, 19)},
                          [](ad::Tape&, const V& v) { return ad::linear(v[0], v[1], v[2]); }) < tol);
  CHECK(op_gradient_error({rm(3, 5, 20, -2, 2)}, [](ad::Tape&, const V& v) { return ad::softmax_rows(v[0]); }) < tol);

  const Matrix mask = Matrix::from_rows({{1, 0, 1, 1}, {0, 1, 1, 0}, {1, 1, 1, 1}});
  CHECK(op_gradient_error({rm(3, 4, 21, -2, 2)},
                          [&](ad::Tape&, const V& v) { return ad::masked_softmax_rows(v[0], mask); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 22, 0.2, 2.0)}, [](ad::Tape&, const V& v) { return ad::normalize_row_sums(v[0]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 23)}, [&](ad::Tape&, const V& v) { return ad::apply_mask(v[0], mask); }) < tol);
  CHECK(op_gradient_error({rm(4, 6, 24, -3, 3), rm(1, 6, 25), rm(1, 6, 26)},
                          [](ad::Tape&, const V& v) { return ad::layer_norm_rows(v[0], v[1], v[2], 1e-5); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 27, -3, 3)}, [](ad::Tape&, const V& v) { return ad::gelu(v[0]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 28, -2, 2)}, [](ad::Tape&, const V& v) { return ad::tanh(v[0]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 29, -3, 3)}, [](ad::Tape&, const V& v) { return ad::sigmoid(v[0]); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 30)}, [](ad::Tape&, const V& v) { return ad::exp(v[0]); }) < tol);
  CHECK(op_gradient_error({rm(3, 5, 31)}, [](ad::Tape&, const V& v) { return ad::normalize_rows(v[0], 1e-12); }) < tol);
  CHECK(op_gradient_error({rm(3, 4, 32), rm(5, 4, 33)}, [](ad::Tape&, const V& v) { return ad::pairwise_distance(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(2, 3, 34), rm(4, 3, 35)}, [](ad::Tape&, const V& v) { return ad::concat_rows(v[0], v[1]); }) < tol);
  CHECK(op_gradient_error({rm(3, 2, 36), rm(3, 1, 37), rm(3, 4, 38)},
                          [](ad::Tape&, const V& v) { return ad::concat_cols({v[0], v[1], v[2]}); }) < tol);
  CHECK(op_gradient_error({rm(5, 3, 39)}, [](ad::Tape&, const V& v) { return ad::slice_rows(v[0], 1, 3); }) < tol);
  CHECK(op_gradient_error({rm(3, 6, 40)}, [](ad::Tape&, const V& v) { return ad::slice_cols(v[0], 2, 3); }) < tol);

  const std::vector<std::vector<ad::WeightedIndex>> taps{{{0, 0.25}, {2, 0.75}}, {{1, 1.0}}, {{3, 0.5}, {0, 0.5}, {3, 0.1}}};
  CHECK(op_gradient_error({rm(4, 3, 41)}, [&](ad::Tape&, const V& v) { return ad::gather_weighted(v[0], taps); }) < tol);
  CHECK(op_gradient_error({rm(3, 3, 42)}, [](ad::Tape&, const V& v) { return ad::sum(v[0]); }) < tol);
  const Matrix target = oracle::to_matrix(rm(2, 3, 43));
  CHECK(op_gradient_error({rm(2, 3, 44)}, [&](ad::Tape&, const V& v) { return ad::mse(v[0], target); }) < tol);

  // A composite chain exercising accumulation through shared inputs.
  CHECK(op_gradient_error({rm(4, 5, 45), rm(5, 5, 46)}, [](ad::Tape&, const V& v) {
          const ad::Var h = ad::gelu(ad::matmul(v[0], v[1]));
          return ad::add(ad::softmax_rows(ad::matmul_nt(h, v[0])), ad::matmul_nt(v[0], h));
        }) < tol);
}

TEST_CASE("op forward values match oracles") {
  ad::Tape tape;
  const auto a = rm(3, 4, 50), b = rm(5, 4, 51);
  const ad::Var va = tape.constant(oracle::to_matrix(a));
  const ad::Var vb = tape.constant(oracle::to_matrix(b));

  const Matrix dist = ad::pairwise_distance(va, vb).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
      CHECK(std::abs(dist(i, j) - std::sqrt(s)) < 1e-12);
    }

  const Matrix unit = ad::normalize_rows(va, 1e-12).value();
  for (std::size_t i = 0; i < 3; ++i) {
    const double n = oracle::norm(a[i]);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(unit(i, k) - a[i][k] / n) < 1e-12);
  }
  const Matrix zero_row = ad::normalize_rows(tape.constant(Matrix(1, 3, 0.0)), 1e-12).value();
  for (double v : zero_row.data()) CHECK(v == 0.0);

  const Matrix mask = Matrix::from_rows({{1, 0, 0, 1}, {0, 0, 0, 0}, {1, 1, 1, 1}});
  const Matrix ms = ad::masked_softmax_rows(va, mask).value();
  const auto s0 = oracle::softmax({a[0][0], a[0][3]});
  CHECK(std::abs(ms(0, 0) - s0[0]) < 1e-12);
  CHECK(ms(0, 1) == 0.0);
  CHECK(std::abs(ms(0, 3) - s0[1]) < 1e-12);
  for (std::size_t k = 0; k < 4; ++k) CHECK(ms(1, k) == 0.25);
}

TEST_CASE("tape counts multiply-accumulates of matrix products") {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Matrix(3, 4, 1.0));
  const ad::Var b = tape.leaf(Matrix(4, 5, 1.0));
  const ad::Var c = tape.leaf(Matrix(6, 4, 1.0));
  ad::matmul(a, b);
  CHECK(tape.macs() == 3u * 4u * 5u);
  ad::matmul_nt(a, c);
  CHECK(tape.macs() == 3u * 4u * 5u + 3u * 6u * 4u);
}

TEST_CASE("rng streams are deterministic, splittable and in range") {
  pathohr::RngStream a(42, 7), b(42, 7), other(42, 8), reseeded(43, 7);
  std::vector<std::uint64_t> seq_a, seq_b, seq_o, seq_r;
  for (int i = 0; i < 1000; ++i) {
    seq_a.push_back(a.next_u64());
    seq_b.push_back(b.next_u64());
    seq_o.push_back(other.next_u64());
    seq_r.push_back(reseeded.next_u64());
  }
  CHECK(seq_a == seq_b);
  CHECK(seq_a != seq_o);
  CHECK(seq_a != seq_r);

  pathohr::RngStream parent(9);
  const auto child1 = parent.split(3);
  parent.next_u64();
  auto child2 = parent.split(3);
  auto child1_copy = child1;
  CHECK(child1_copy.next_u64() == child2.next_u64());
  CHECK(parent.split(3).next_u64() != parent.split(4).next_u64());

  pathohr::RngStream u(5);
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    total += x;
  }
  CHECK(std::abs(total / n - 0.5) < 0.005);

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[u.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);

  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform(-0.5, 0.5);
    CHECK(x >= -0.5);
    CHECK(x < 0.5);
  }
}

TEST_CASE("parallel_for visits each index once and propagates errors") {
  std::vector<std::atomic<int>> hits(257);
  pathohr::parallel_for(hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); }, 4);
  for (const auto& h : hits) CHECK(h.load() == 1);

  CHECK_THROWS_AS(pathohr::parallel_for(
                      10, [](std::size_t i) { if (i == 6) throw pathohr::NumericError("boom"); }, 3),
                  pathohr::NumericError);
  CHECK(pathohr::thread_budget() >= 1);
}
