#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "huign/matrix.hpp"

using huign::Matrix;
using huign::SparseMatrix;

TEST_CASE("matmul against the loop oracle") {
  std::mt19937_64 rng(1);
  const Matrix a = fixtures::random_matrix(4, 5, rng);
  const Matrix b = fixtures::random_matrix(5, 3, rng);
  CHECK(fixtures::max_diff(huign::matmul(a, b), oracle::mul(fixtures::to_oracle(a), fixtures::to_oracle(b))) < 1e-12);
  CHECK(huign::max_abs_diff(huign::matmul_nt(a, a), huign::matmul(a, a.transposed())) < 1e-12);
  CHECK_THROWS_AS(huign::matmul(a, a), huign::ShapeError);
}

TEST_CASE("hstack places blocks side by side") {
  const Matrix parts[] = {Matrix::from_rows({{1}, {2}}), Matrix::from_rows({{3, 4}, {5, 6}})};
  CHECK(huign::hstack(parts) == Matrix::from_rows({{1, 3, 4}, {2, 5, 6}}));
}

TEST_CASE("from_triplets sums duplicates and sorts columns") {
  auto s = SparseMatrix::from_triplets(3, 3, {2, 0, 0, 2, 1}, {1, 2, 0, 1, 1}, {1.0, 2.0, 3.0, 4.0, 5.0});
  CHECK(s.nnz() == 4);
  CHECK(s.at(2, 1) == 5.0);
  CHECK(s.at(0, 0) == 3.0);
  CHECK(s.at(0, 2) == 2.0);
  CHECK(s.at(1, 0) == 0.0);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t k = s.row_ptr[r] + 1; k < s.row_ptr[r + 1]; ++k) CHECK(s.col_idx[k - 1] < s.col_idx[k]);
}

TEST_CASE("spmm matches dense product on random 20x20 instances") {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> r, c;
    std::vector<double> v;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 20; ++j)
        if (coin(rng)) {
          r.push_back(i);
          c.push_back(j);
          v.push_back(std::normal_distribution<double>()(rng));
        }
    const auto s = SparseMatrix::from_triplets(20, 20, r, c, v);
    const Matrix x = fixtures::random_matrix(20, 4, rng);
    CHECK(huign::max_abs_diff(huign::spmm(s, x), huign::matmul(s.to_dense(), x)) < 1e-12);
    CHECK(huign::max_abs_diff(huign::spmm_transposed(s, x), huign::matmul(s.to_dense().transposed(), x)) < 1e-12);
  }
  const auto s = SparseMatrix::from_triplets(2, 3, {0}, {0}, {1.0});
  CHECK_THROWS_AS(huign::spmm(s, Matrix(2, 2)), huign::ShapeError);
}
