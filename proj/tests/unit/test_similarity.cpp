#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pathohr/error.hpp"
#include "pathohr/numeric/grad_check.hpp"
#include "pathohr/numeric/ops.hpp"
#include "pathohr/similarity/similarity.hpp"

using namespace pathohr;
using oracle::Mat;
using oracle::Vec;

namespace {

SimilarityConfig cfg_with(double tau, std::size_t head_dim = 0) {
  SimilarityConfig c;
  c.temperature = tau;
  c.head_dim = head_dim;
  return c;
}

Mat euclid_oracle(const Mat& q, const Mat& k, double tau) {
  Mat out(q.size(), Vec(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) {
      double s = 0;
      for (std::size_t t = 0; t < q[i].size(); ++t) s += (q[i][t] - k[j][t]) * (q[i][t] - k[j][t]);
      out[i][j] = std::exp(-std::sqrt(s) * tau);
    }
  return out;
}

Mat cosine_oracle(const Mat& q, const Mat& k, double tau) {
  Mat out(q.size(), Vec(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double nq = oracle::norm(q[i]), nk = oracle::norm(k[j]);
      out[i][j] = (nq < 1e-12 || nk < 1e-12) ? 0.0 : tau * oracle::dot(q[i], k[j]) / (nq * nk);
    }
  return out;
}

Mat scaled_softmax_oracle(const Mat& q, const Mat& k, double factor) {
  Mat logits(q.size(), Vec(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) logits[i][j] = factor * oracle::dot(q[i], k[j]);
  return oracle::softmax_rows(logits);
}

Mat mlp_oracle(const Mat& x, const ParameterSet& p, const std::string& side) {
  auto h = oracle::affine(x, oracle::from_matrix(p.at(side + "w1")), oracle::row_of(p.at(side + "b1"), 0));
  for (auto& r : h)
    for (double& v : r) v = oracle::gelu(v);
  return oracle::matmul(h, oracle::from_matrix(p.at(side + "w2")));
}

void check_row_sums(const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0;
    for (double v : m.row(r)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& p) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(p[i], j);
  return out;
}

}  // namespace

TEST_CASE("method names round trip") {
  for (auto m : kAllSimilarityMethods) CHECK(parse_similarity_method(to_string(m)) == m);
  CHECK(to_string(SimilarityMethod::attention_score) == "attention_score");
  CHECK(to_string(SimilarityMethod::pooled_attention) == "pooled_attention");
  CHECK_THROWS_AS(parse_similarity_method("cosine_sim"), ConfigError);
}

TEST_CASE("pool_queries") {
  const Matrix a = Matrix::from_rows({{1.0, -2.0, 3.0}, {1.0, -2.0, 3.0}});
  const TokenSet one = pool_queries(TokenSet::from_features(a));
  REQUIRE(one.count() == 1);
  CHECK(oracle::row_of(one.features, 0) == Vec{1.0, -2.0, 3.0});

  const TokenSet five = pool_queries(TokenSet::from_features(oracle::to_matrix(oracle::random_mat(5, 4, 1))));
  CHECK(five.count() == 3);
  CHECK(five.sizes == std::vector<int>{2, 2, 1});

  const Mat x = oracle::random_mat(8, 6, 2);
  TokenSet eight = TokenSet::from_features(oracle::to_matrix(x));
  for (int i = 0; i < 8; ++i) eight.positions.push_back({i / 4, i % 4});
  const TokenSet pooled = pool_queries(eight);
  REQUIRE(pooled.count() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(pooled.features(i, j) - (x[2 * i][j] + x[2 * i + 1][j]) / 2) < 1e-15);
    CHECK(pooled.positions[i] == eight.positions[2 * i]);
  }
  // The differentiable pooling matrix gives the same rows.
  CHECK(oracle::max_diff(oracle::matmul(oracle::from_matrix(pooling_matrix(8)), x), pooled.features) < 1e-15);
  CHECK(pooling_matrix(5).rows() == 3);

  CHECK_THROWS(pool_queries(TokenSet::from_features(Matrix(0, 3))));
}

TEST_CASE("euclidean examples and oracle") {
  const Matrix v = Matrix::from_rows({{0.3, -1.2}});
  for (double tau : {0.1, 1.0, 7.0}) CHECK(euclidean_sim(v, v, cfg_with(tau)).scores(0, 0) == 1.0);
  const auto s = euclidean_sim(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{3, 4}}), cfg_with(1.0));
  CHECK(std::abs(s.scores(0, 0) - std::exp(-5.0)) < 1e-15);
  CHECK_FALSE(s.row_normalized);

  const Mat q = oracle::random_mat(4, 6, 3), k = oracle::random_mat(4, 6, 4);
  const auto got = euclidean_sim(oracle::to_matrix(q), oracle::to_matrix(k), cfg_with(0.7));
  CHECK(oracle::max_diff(euclid_oracle(q, k, 0.7), got.scores) < 1e-12);
  for (double x : got.scores.data()) {
    CHECK(x > 0.0);
    CHECK(x <= 1.0);
  }

  // Strictly decreasing in distance for tau > 0.
  double prev = 2.0;
  for (double d = 0.0; d < 5.0; d += 0.5) {
    const double val = euclidean_sim(Matrix::from_rows({{0.0}}), Matrix::from_rows({{d}}), cfg_with(0.9)).scores(0, 0);
    CHECK(val < prev);
    prev = val;
  }
  CHECK_THROWS_AS(euclidean_sim(Matrix(2, 3), Matrix(2, 4), cfg_with(1.0)), DimensionError);
}

TEST_CASE("cosine examples and oracle") {
  const Matrix a = Matrix::from_rows({{1.0, 2.0}});
  CHECK(std::abs(cosine_sim(a, Matrix::from_rows({{2.0, 4.0}}), cfg_with(2.0)).scores(0, 0) - 2.0) < 1e-15);
  CHECK(std::abs(cosine_sim(a, Matrix::from_rows({{-2.0, 1.0}}), cfg_with(1.0)).scores(0, 0)) < 1e-15);
  CHECK(std::abs(cosine_sim(a, Matrix::from_rows({{-0.5, -1.0}}), cfg_with(1.0)).scores(0, 0) + 1.0) < 1e-15);
  CHECK(cosine_sim(a, Matrix::from_rows({{0.0, 0.0}}), cfg_with(1.0)).scores(0, 0) == 0.0);

  const Mat q = oracle::random_mat(5, 7, 5), k = oracle::random_mat(6, 7, 6);
  const auto got = cosine_sim(oracle::to_matrix(q), oracle::to_matrix(k), cfg_with(1.3));
  CHECK(oracle::max_diff(cosine_oracle(q, k, 1.3), got.scores) < 1e-12);

  Mat scaled = q;
  for (std::size_t i = 0; i < scaled.size(); ++i)
    for (double& v : scaled[i]) v *= 0.01 + 10.0 * static_cast<double>(i);
  const auto again = cosine_sim(oracle::to_matrix(scaled), oracle::to_matrix(k), cfg_with(1.3));
  CHECK(max_abs_diff(again.scores, got.scores) < 1e-9);
}

TEST_CASE("attention_score examples and oracle") {
  const Matrix q = oracle::to_matrix(oracle::random_mat(3, 4, 7));
  const auto single = attention_score_sim(q, Matrix::from_rows({{0.5, 0.1, 0.2, 0.3}}), cfg_with(1.0));
  for (std::size_t i = 0; i < 3; ++i) CHECK(single.scores(i, 0) == 1.0);
  CHECK(single.row_normalized);
  const Matrix twin = Matrix::from_rows({{1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}});
  const auto even = attention_score_sim(q, twin, cfg_with(1.0));
  for (std::size_t i = 0; i < 3; ++i) CHECK(even.scores(i, 0) == 0.5);

  const Mat qq = oracle::random_mat(3, 8, 8, -2, 2), kk = oracle::random_mat(5, 8, 9, -2, 2);
  for (double tau : {0.5, 1.0, 2.5}) {
    const auto got = attention_score_sim(oracle::to_matrix(qq), oracle::to_matrix(kk), cfg_with(tau));
    CHECK(oracle::max_diff(scaled_softmax_oracle(qq, kk, tau / std::sqrt(8.0)), got.scores) < 1e-12);
    check_row_sums(got.scores);
  }
  const auto hd = attention_score_sim(oracle::to_matrix(qq), oracle::to_matrix(kk), cfg_with(1.0, 2));
  CHECK(oracle::max_diff(scaled_softmax_oracle(qq, kk, 1.0 / std::sqrt(2.0)), hd.scores) < 1e-12);
}

TEST_CASE("pooled attention ignores temperature and matches its oracle") {
  const Mat x = oracle::random_mat(7, 8, 10, -2, 2);
  const TokenSet pooled = pool_queries(TokenSet::from_features(oracle::to_matrix(x)));
  const Mat k = oracle::random_mat(7, 8, 11, -2, 2);
  const auto got = pooled_attention_sim(pooled.features, oracle::to_matrix(k), cfg_with(3.0));
  CHECK(got.rows() == 4);
  CHECK(got.row_normalized);
  CHECK(oracle::max_diff(scaled_softmax_oracle(oracle::from_matrix(pooled.features), k, 1.0 / std::sqrt(8.0)),
                         got.scores) < 1e-12);
  check_row_sums(got.scores);
}

TEST_CASE("semantic similarity") {
  const auto proj = make_semantic_projector(16, 5);
  CHECK(proj.sem_dim == 4);
  CHECK(default_semantic_dim(2) == 1);

  const Mat q = oracle::random_mat(6, 16, 12), k = oracle::random_mat(8, 16, 13);
  const auto got = semantic_sim(oracle::to_matrix(q), oracle::to_matrix(k), proj);
  const Mat fq = mlp_oracle(q, proj.params, "q."), fk = mlp_oracle(k, proj.params, "k.");
  CHECK(oracle::max_diff(scaled_softmax_oracle(fq, fk, 0.5), got.scores) < 1e-12);
  CHECK(got.row_normalized);
  check_row_sums(got.scores);

  // f_q = f_k and identical tokens: equal logits, uniform rows.
  SemanticProjector shared = proj;
  for (const char* name : {"w1", "b1", "w2"})
    shared.params.at(std::string("k.") + name) = shared.params.at(std::string("q.") + name);
  const Matrix same(5, 16, 0.37);
  const auto uniform = semantic_sim(same, same, shared);
  for (double v : uniform.scores.data()) CHECK(std::abs(v - 0.2) < 1e-15);

  const auto single = semantic_sim(oracle::to_matrix(q), Matrix(1, 16, 0.1), proj);
  for (std::size_t i = 0; i < 6; ++i) CHECK(single.scores(i, 0) == 1.0);

  CHECK_THROWS_AS(semantic_sim(Matrix(2, 8), Matrix(2, 8), proj), DimensionError);
  SimilarityConfig sc;
  sc.method = SimilarityMethod::semantic;
  CHECK_THROWS_AS(compute_similarity(Matrix(2, 16), Matrix(2, 16), sc), ConfigError);
}

TEST_CASE("tome bipartite scores") {
  const TokenSet four = TokenSet::from_features(Matrix(4, 3, 0.8));
  const auto s = tome_sim(four);
  CHECK(s.a == std::vector<std::size_t>{0, 2});
  CHECK(s.b == std::vector<std::size_t>{1, 3});
  for (double v : s.similarity.scores.data()) CHECK(v == 0.5);
  CHECK(s.similarity.row_normalized);

  const Mat x = oracle::random_mat(6, 8, 14);
  const auto six = tome_sim(TokenSet::from_features(oracle::to_matrix(x)));
  const Mat a{x[0], x[2], x[4]}, b{x[1], x[3], x[5]};
  const Mat cos = cosine_oracle(a, b, 1.0);
  CHECK(oracle::max_diff(cos, six.cosine) < 1e-12);
  CHECK(oracle::max_diff(oracle::softmax_rows(cos), six.similarity.scores) < 1e-12);
  check_row_sums(six.similarity.scores);

  const auto seven = tome_sim(TokenSet::from_features(oracle::to_matrix(oracle::random_mat(7, 8, 15))));
  CHECK(seven.a.size() == 4);
  CHECK(seven.b.size() == 3);

  CHECK_THROWS_AS(tome_sim(TokenSet::from_features(Matrix(1, 3, 1.0))), MergeNotApplicable);
  SimilarityConfig sc;
  sc.method = SimilarityMethod::tome;
  CHECK_THROWS_AS(compute_similarity(Matrix(2, 3), Matrix(2, 3), sc), ConfigError);
}

TEST_CASE("every method is permutation equivariant") {
  std::mt19937_64 gen(16);
  const Matrix q = oracle::to_matrix(oracle::random_mat(6, 8, 17));
  const Matrix k = oracle::to_matrix(oracle::random_mat(7, 8, 18));
  std::vector<std::size_t> pq(6), pk(7);
  std::iota(pq.begin(), pq.end(), 0);
  std::iota(pk.begin(), pk.end(), 0);
  std::shuffle(pq.begin(), pq.end(), gen);
  std::shuffle(pk.begin(), pk.end(), gen);
  const auto proj = make_semantic_projector(8, 3);

  for (auto m : {SimilarityMethod::euclidean, SimilarityMethod::cosine, SimilarityMethod::attention_score,
                 SimilarityMethod::pooled_attention, SimilarityMethod::semantic}) {
    SimilarityConfig c = cfg_with(1.4);
    c.method = m;
    const Matrix base = compute_similarity(q, k, c, &proj).scores;
    const Matrix perm = compute_similarity(permute_rows(q, pq), permute_rows(k, pk), c, &proj).scores;
    double worst = 0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 7; ++j) worst = std::max(worst, std::abs(perm(i, j) - base(pq[i], pk[j])));
    CHECK_MESSAGE(worst < 1e-12, to_string(m));
  }

  // ToMe: permute within A and within B, keeping the alternating layout.
  const Matrix x = oracle::to_matrix(oracle::random_mat(8, 5, 19));
  const std::vector<std::size_t> pa{2, 0, 3, 1}, pb{1, 3, 0, 2};
  std::vector<std::size_t> full(8);
  for (std::size_t i = 0; i < 4; ++i) {
    full[2 * i] = 2 * pa[i];
    full[2 * i + 1] = 2 * pb[i] + 1;
  }
  const auto base = tome_sim(TokenSet::from_features(x));
  const auto perm = tome_sim(TokenSet::from_features(permute_rows(x, full)));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(std::abs(perm.similarity.scores(i, j) - base.similarity.scores(pa[i], pb[j])) < 1e-12);
}

TEST_CASE("tape similarity gradients match central differences") {
  const Mat q0 = oracle::random_mat(3, 6, 20), k0 = oracle::random_mat(4, 6, 21);
  const Matrix proj_w = oracle::to_matrix(oracle::random_mat(3, 4, 22));
  const auto sem = make_semantic_projector(6, 9);
  for (auto m : {SimilarityMethod::euclidean, SimilarityMethod::cosine, SimilarityMethod::attention_score,
                 SimilarityMethod::pooled_attention, SimilarityMethod::semantic}) {
    // Parameters: q, k and the temperature.
    Vec flat = oracle::flat(q0);
    const Vec kf = oracle::flat(k0);
    flat.insert(flat.end(), kf.begin(), kf.end());
    flat.push_back(0.8);
    const DifferentiableFn f = [&](std::span<const double> p, std::vector<double>* grad) {
      ad::Tape tape;
      ad::Var q = tape.leaf(Matrix(3, 6, std::vector<double>(p.begin(), p.begin() + 18)));
      ad::Var k = tape.leaf(Matrix(4, 6, std::vector<double>(p.begin() + 18, p.begin() + 42)));
      ad::Var t = tape.leaf(Matrix(1, 1, p[42]));
      BoundParameters bound(tape, sem.params);
      const SemanticVars sv = bind_semantic_projector(bound, "", sem.sem_dim);
      SimilarityConfig c;
      const auto out = similarity_var(m, q, k, t, c, &sv);
      ad::Var s = ad::sum(ad::hadamard(out.scores, tape.constant(proj_w)));
      if (grad) {
        tape.backward(s);
        grad->clear();
        for (ad::Var v : {q, k, t}) {
          const Matrix g = tape.grad(v);
          grad->insert(grad->end(), g.data().begin(), g.data().end());
        }
      }
      return s.value()(0, 0);
    };
    CHECK_MESSAGE(grad_check(f, flat) < 1e-4, to_string(m));
  }
}
