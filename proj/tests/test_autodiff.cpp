#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "fixtures.hpp"
#include "huign/autodiff.hpp"

using huign::Matrix;
namespace ad = huign::ad;

namespace {

struct Primitive {
  const char* name;
  ad::ScalarFn fn;
  // Shifts inputs into the op's smooth domain.
  double offset = 0.0;
};

Matrix random_shape(std::mt19937_64& rng, double offset) {
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  Matrix m = fixtures::random_matrix(dim(rng), dim(rng), rng);
  if (offset != 0.0)
    for (double& x : m.data()) x = std::abs(x) + offset;
  return m;
}

// Fixed random weights so every coordinate of a reduction matters.
ad::Tensor weighted_sum(ad::Tape& t, const ad::Tensor& y) {
  std::mt19937_64 rng(y.rows() * 31 + y.cols());
  return ad::sum(ad::hadamard(y, t.constant(fixtures::random_matrix(y.rows(), y.cols(), rng))));
}

std::vector<Primitive> primitives() {
  return {
      {"matmul", [](ad::Tape& t, const ad::Tensor& x) {
         std::mt19937_64 rng(x.cols());
         return weighted_sum(t, ad::matmul(x, t.constant(fixtures::random_matrix(x.cols(), 3, rng))));
       }},
      {"matmul_self", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::matmul(x, ad::transpose(x))); }},
      {"spmm_const", [](ad::Tape& t, const ad::Tensor& x) {
         static std::map<std::size_t, huign::SparseMatrix> cache;
         auto it = cache.find(x.rows());
         if (it == cache.end()) {
           std::vector<std::size_t> r, c;
           std::vector<double> v;
           for (std::size_t i = 0; i < x.rows(); ++i)
             for (std::size_t j = 0; j < x.rows(); ++j)
               if ((i + 2 * j) % 3 == 0) {
                 r.push_back(i);
                 c.push_back(j);
                 v.push_back(0.5 + static_cast<double>(i + j));
               }
           it = cache.emplace(x.rows(), huign::SparseMatrix::from_triplets(x.rows(), x.rows(), r, c, v)).first;
         }
         return weighted_sum(t, ad::spmm_const(it->second, x));
       }},
      {"transpose", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::transpose(x)); }},
      {"add", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::add(x, ad::hadamard(x, x))); }},
      {"sub", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::sub(ad::hadamard(x, x), x)); }},
      {"scale", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::scale(x, -2.5)); }},
      {"hadamard", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::hadamard(x, x)); }},
      {"row_softmax", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::row_softmax(x)); }},
      {"log", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::log(x)); }, 0.5},
      {"sigmoid", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::sigmoid(x)); }},
      {"log_sigmoid", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::log_sigmoid(x)); }},
      {"rsqrt", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::rsqrt(x)); }, 0.5},
      {"sum", [](ad::Tape&, const ad::Tensor& x) { return ad::sum(ad::hadamard(x, x)); }},
      {"mean", [](ad::Tape&, const ad::Tensor& x) { return ad::mean(ad::hadamard(x, x)); }},
      {"row_sum", [](ad::Tape& t, const ad::Tensor& x) { return weighted_sum(t, ad::row_sum(ad::hadamard(x, x))); }},
      {"mul_rows", [](ad::Tape& t, const ad::Tensor& x) {
         return weighted_sum(t, ad::mul_rows(x, ad::row_sum(x)));
       }},
      {"concat_cols", [](ad::Tape& t, const ad::Tensor& x) {
         const ad::Tensor parts[] = {x, ad::hadamard(x, x), ad::transpose(ad::transpose(x))};
         return weighted_sum(t, ad::concat_cols(parts));
       }},
      {"gather_rows", [](ad::Tape& t, const ad::Tensor& x) {
         std::vector<std::size_t> idx;
         for (std::size_t i = 0; i < 2 * x.rows() + 1; ++i) idx.push_back((i * 7) % x.rows());
         return weighted_sum(t, ad::gather_rows(x, idx));
       }},
      {"frobenius_sq", [](ad::Tape&, const ad::Tensor& x) { return ad::frobenius_sq(x); }},
      {"frobenius_norm", [](ad::Tape&, const ad::Tensor& x) { return ad::frobenius_norm(x); }},
  };
}

}  // namespace

TEST_CASE("every primitive passes the finite-difference check") {
  for (const auto& p : primitives()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed * 97 + 1);
      const Matrix at = random_shape(rng, p.offset);
      INFO(p.name, " seed ", seed, " shape ", at.shape_string());
      CHECK(ad::grad_check(p.fn, at, 1e-5) < 1e-5);
    }
  }
}

TEST_CASE("backward hand cases") {
  {
    ad::Tape t;
    auto x = t.leaf(Matrix(2, 3, 0.7));
    auto g = ad::backward(t, ad::sum(x));
    CHECK(g[x] == Matrix(2, 3, 1.0));
  }
  {
    ad::Tape t;
    auto x = t.leaf(Matrix::from_rows({{1, 2}}));
    auto g = ad::backward(t, ad::frobenius_sq(x));
    CHECK(g[x] == Matrix::from_rows({{2, 4}}));
  }
  {
    ad::Tape t;
    std::mt19937_64 rng(3);
    auto x = t.leaf(fixtures::random_matrix(3, 4, rng));
    auto g = ad::backward(t, ad::sum(ad::row_softmax(x)));
    CHECK(g[x].max_abs() < 1e-15);
  }
}

TEST_CASE("non-participating leaves receive zero gradients") {
  ad::Tape t;
  auto x = t.leaf(Matrix(2, 2, 1.0));
  auto unused = t.leaf(Matrix(3, 1, 5.0));
  auto g = ad::backward(t, ad::sum(x));
  CHECK(g[unused] == Matrix(3, 1));
}

TEST_CASE("constant function has zero error") {
  auto f = [](ad::Tape& t, const ad::Tensor&) { return t.constant(Matrix(1, 1, 3.0)); };
  CHECK(ad::grad_check(f, Matrix(2, 2, 1.0)) == 0.0);
  CHECK_THROWS(ad::grad_check(f, Matrix(2, 2), 1e-2));
  CHECK_THROWS(ad::grad_check(f, Matrix(2, 2), 1e-9));
}

TEST_CASE("grad_check reference cases") {
  std::mt19937_64 rng(8);
  auto mm = [](ad::Tape& t, const ad::Tensor& x) {
    std::mt19937_64 r(1);
    return ad::sum(ad::matmul(x, t.constant(fixtures::random_matrix(4, 4, r))));
  };
  CHECK(ad::grad_check(mm, fixtures::random_matrix(4, 4, rng)) < 1e-6);
  auto sm = [](ad::Tape&, const ad::Tensor& x) { return ad::frobenius_sq(ad::row_softmax(x)); };
  CHECK(ad::grad_check(sm, fixtures::random_matrix(3, 5, rng)) < 1e-5);
}

TEST_CASE("gradients are linear in the loss") {
  std::mt19937_64 rng(9);
  const Matrix at = fixtures::random_matrix(3, 4, rng);
  auto f = [](const ad::Tensor& x) { return ad::frobenius_norm(ad::row_softmax(x)); };
  auto g = [](const ad::Tensor& x) { return ad::sum(ad::log_sigmoid(x)); };
  const double a = 1.7, b = -0.4;
  auto grad_of = [&](auto&& loss) {
    ad::Tape t;
    auto x = t.leaf(at);
    auto gr = ad::backward(t, loss(x));
    return gr[x];
  };
  const Matrix combined = grad_of([&](const ad::Tensor& x) { return ad::add(ad::scale(f(x), a), ad::scale(g(x), b)); });
  const Matrix separate = grad_of(f) * a + grad_of(g) * b;
  CHECK(huign::max_abs_diff(combined, separate) <= 1e-12);
}

TEST_CASE("softmax rows sum to one and the log clamp") {
  std::mt19937_64 rng(10);
  ad::Tape t;
  auto x = t.leaf(fixtures::random_matrix(6, 5, rng, 20.0));
  const Matrix s = ad::row_softmax(x).value();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0.0;
    for (double v : s.row(r)) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }

  ad::Tape t2;
  auto y = t2.leaf(Matrix::from_rows({{0.0, 1e-13, ad::kLogEps, 2e-12}}));
  auto l = ad::log(y);
  CHECK(l.value()(0, 0) == std::log(ad::kLogEps));
  CHECK(l.value()(0, 1) == std::log(ad::kLogEps));
  CHECK(l.value()(0, 2) == std::log(ad::kLogEps));
  CHECK(l.value()(0, 3) == std::log(2e-12));
  auto g = ad::backward(t2, ad::sum(l));
  CHECK(g[y](0, 0) == 0.0);
  CHECK(g[y](0, 1) == 0.0);
  CHECK(g[y](0, 3) == doctest::Approx(1.0 / 2e-12));
}

TEST_CASE("log_sigmoid stays finite for large inputs") {
  ad::Tape t;
  auto x = t.leaf(Matrix::from_rows({{-800.0, 800.0, 0.0}}));
  const Matrix v = ad::log_sigmoid(x).value();
  CHECK(v(0, 0) == doctest::Approx(-800.0));
  CHECK(v(0, 1) == 0.0);
  CHECK(v(0, 2) == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("tape errors") {
  ad::Tape t;
  auto x = t.leaf(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(ad::backward(t, x), ad::TapeError);
  auto loss = ad::sum(x);
  ad::backward(t, loss);
  CHECK(t.consumed());
  CHECK_THROWS_AS(ad::backward(t, loss), ad::TapeError);
  CHECK_THROWS_AS(t.leaf(Matrix(1, 1)), ad::TapeError);

  ad::Tape a, b;
  auto xa = a.leaf(Matrix(1, 1)), xb = b.leaf(Matrix(1, 1));
  CHECK_THROWS(ad::add(xa, xb));
  CHECK_THROWS_AS(ad::matmul(a.leaf(Matrix(2, 3)), a.leaf(Matrix(2, 3))), huign::ShapeError);
}

TEST_CASE("tape records in topological order") {
  ad::Tape t;
  auto x = t.leaf(Matrix(2, 2, 1.0));
  auto y = ad::matmul(x, x);
  auto z = ad::sum(y);
  CHECK(x.id() < y.id());
  CHECK(y.id() < z.id());
  CHECK(t.size() == 3);
}
