#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

#include "huign/matrix.hpp"

// Reverse-mode differentiation over dense matrices. A Tape records every
// operation in creation order, so the node sequence is already topologically
// sorted; backward() walks it once in reverse and then marks it consumed.
namespace huign::ad {

// log() clamps its input to at least this value; rsqrt() likewise.
inline constexpr double kLogEps = 1e-12;
inline constexpr double kRsqrtEps = 1e-12;

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Gradients;

class Tape {
 public:
  // Accumulates into grad_in[k] (nullptr when input k needs no gradient).
  using Backward = std::function<void(const Matrix& grad_out, std::span<Matrix* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value, bool requires_grad = true);
  Tensor constant(Matrix value) { return leaf(std::move(value), false); }
  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, Backward backward);
  Tensor record(Matrix value, const std::vector<Tensor>& inputs, Backward backward);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  friend Gradients backward(Tape& tape, const Tensor& loss);

  struct Node {
    Matrix value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Backward backward;
  };

  void check_usable() const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

class Gradients {
 public:
  const Matrix& operator[](const Tensor& t) const { return grads_.at(t.id()); }
  const Matrix& at(std::size_t id) const { return grads_.at(id); }

 private:
  friend Gradients backward(Tape& tape, const Tensor& loss);
  std::vector<Matrix> grads_;
};

// Gradient of a 1x1 loss with respect to every node. Leaves that do not
// contribute get zero matrices. Consumes the tape.
Gradients backward(Tape& tape, const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
// sparse * x where the sparse factor is a constant. `sparse` must outlive
// the tape.
Tensor spmm_const(const SparseMatrix& sparse, const Tensor& x);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
// Row-wise softmax with max subtraction.
Tensor row_softmax(const Tensor& x);
// Natural log of max(x, kLogEps); zero gradient where clamped.
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// ln sigmoid(x), evaluated without overflow.
Tensor log_sigmoid(const Tensor& x);
// max(x, kRsqrtEps)^(-1/2) elementwise.
Tensor rsqrt(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// n x 1 column of row sums.
Tensor row_sum(const Tensor& x);
// y(i,j) = x(i,j) * s(i,0) for an n x 1 column s.
Tensor mul_rows(const Tensor& x, const Tensor& s);
Tensor concat_cols(std::span<const Tensor> blocks);
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index);
Tensor frobenius_sq(const Tensor& x);
Tensor frobenius_norm(const Tensor& x);

// Builds a scalar expression of one leaf.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Max over coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|), with g_fd
// the central difference at step h in [1e-7, 1e-3].
double grad_check(const ScalarFn& f, const Matrix& at, double h = 1e-5);

}  // namespace huign::ad
