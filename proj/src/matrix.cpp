#include "huign/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace huign {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ShapeError("ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::sum() const {
  double s = 0.0;
  for (double x : data_) s += x;
  return s;
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other))
    throw ShapeError("add: " + shape_string() + " vs " + other.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (!same_shape(other))
    throw ShapeError("sub: " + shape_string() + " vs " + other.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + a.shape_string() + " * " +
                     b.shape_string() + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto b_row = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a_row[k] * b_row[k];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix hstack(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw ShapeError("hstack: row count mismatch");
    cols += b.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (const auto& b : blocks) {
      auto src = b.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + offset);
      offset += b.cols();
    }
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " +
                     b.shape_string());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values[static_cast<std::size_t>(it - col_idx.begin())];
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
      d(r, col_idx[p]) = values[p];
  return d;
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<std::size_t> r,
                                         std::vector<std::size_t> c,
                                         std::vector<double> v) {
  if (r.size() != c.size() || r.size() != v.size())
    throw ShapeError("from_triplets: length mismatch");
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r[a] != r[b] ? r[a] < r[b] : c[a] < c[b];
  });

  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  std::size_t prev_r = rows, prev_c = cols;
  for (std::size_t k : order) {
    if (r[k] >= rows || c[k] >= cols)
      throw ShapeError("from_triplets: index out of range");
    if (r[k] == prev_r && c[k] == prev_c) {
      m.values.back() += v[k];
      continue;
    }
    m.col_idx.push_back(c[k]);
    m.values.push_back(v[k]);
    ++m.row_ptr[r[k] + 1];
    prev_r = r[k];
    prev_c = c[k];
  }
  for (std::size_t i = 1; i <= rows; ++i) m.row_ptr[i] += m.row_ptr[i - 1];
  return m;
}

Matrix spmm(const SparseMatrix& sparse, const Matrix& dense) {
  if (sparse.cols != dense.rows())
    throw ShapeError("spmm: sparse " + std::to_string(sparse.rows) + "x" +
                     std::to_string(sparse.cols) + " * dense " +
                     dense.shape_string());
  Matrix out(sparse.rows, dense.cols());
  for (std::size_t r = 0; r < sparse.rows; ++r) {
    auto out_row = out.row(r);
    for (std::size_t p = sparse.row_ptr[r]; p < sparse.row_ptr[r + 1]; ++p) {
      const double w = sparse.values[p];
      auto src = dense.row(sparse.col_idx[p]);
      for (std::size_t j = 0; j < dense.cols(); ++j) out_row[j] += w * src[j];
    }
  }
  return out;
}

Matrix spmm_transposed(const SparseMatrix& sparse, const Matrix& dense) {
  if (sparse.rows != dense.rows())
    throw ShapeError("spmm_transposed: sparse " + std::to_string(sparse.rows) +
                     "x" + std::to_string(sparse.cols) + " ^T * dense " +
                     dense.shape_string());
  Matrix out(sparse.cols, dense.cols());
  for (std::size_t r = 0; r < sparse.rows; ++r) {
    auto src = dense.row(r);
    for (std::size_t p = sparse.row_ptr[r]; p < sparse.row_ptr[r + 1]; ++p) {
      const double w = sparse.values[p];
      auto out_row = out.row(sparse.col_idx[p]);
      for (std::size_t j = 0; j < dense.cols(); ++j) out_row[j] += w * src[j];
    }
  }
  return out;
}

}  // namespace huign
