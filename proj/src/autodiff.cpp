#include "huign/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace huign::ad {
namespace {

Tape& tape_of(const Tensor& a) {
  if (!a.valid()) throw TapeError("tensor is not bound to a tape");
  return *a.tape();
}

Tape& common_tape(const Tensor& a, const Tensor& b) {
  Tape& t = tape_of(a);
  if (&t != b.tape()) throw TapeError("tensors belong to different tapes");
  return t;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

Matrix scalar(double v) { return Matrix(1, 1, v); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Tensor::value() const {
  if (!tape_) throw TapeError("tensor is not bound to a tape");
  return tape_->value(id_);
}

bool Tensor::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

void Tape::check_usable() const {
  if (consumed_) throw TapeError("tape already consumed by backward()");
}

Tensor Tape::leaf(Matrix value, bool requires_grad) {
  check_usable();
  nodes_.push_back(Node{std::move(value), requires_grad, {}, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> inputs, Backward backward) {
  return record(std::move(value), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor Tape::record(Matrix value, const std::vector<Tensor>& inputs, Backward backward) {
  check_usable();
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw TapeError("input tensor belongs to another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Gradients backward(Tape& tape, const Tensor& loss) {
  tape.check_usable();
  if (loss.tape() != &tape) throw TapeError("loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw TapeError("backward() needs a scalar loss, got " + loss.value().shape_string());

  Gradients out;
  out.grads_.resize(tape.nodes_.size());
  for (std::size_t i = 0; i < tape.nodes_.size(); ++i) {
    const auto& v = tape.nodes_[i].value;
    out.grads_[i] = Matrix(v.rows(), v.cols());
  }
  tape.consumed_ = true;
  if (!tape.nodes_[loss.id()].requires_grad) return out;

  out.grads_[loss.id()](0, 0) = 1.0;
  std::vector<Matrix*> targets;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = tape.nodes_[id];
    if (!node.requires_grad || !node.backward) continue;
    targets.clear();
    for (std::size_t in : node.inputs)
      targets.push_back(tape.nodes_[in].requires_grad ? &out.grads_[in] : nullptr);
    node.backward(out.grads_[id], targets);
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& t = common_tape(a, b);
  Matrix y = huign::matmul(a.value(), b.value());
  return t.record(std::move(y), {a, b}, [a, b](const Matrix& g, std::span<Matrix* const> gi) {
    if (gi[0]) *gi[0] += matmul_nt(g, b.value());
    if (gi[1]) *gi[1] += huign::matmul(a.value().transposed(), g);
  });
}

Tensor spmm_const(const SparseMatrix& sparse, const Tensor& x) {
  Tape& t = tape_of(x);
  Matrix y = huign::spmm(sparse, x.value());
  const SparseMatrix* s = &sparse;
  return t.record(std::move(y), {x}, [s](const Matrix& g, std::span<Matrix* const> gi) {
    if (gi[0]) *gi[0] += spmm_transposed(*s, g);
  });
}

Tensor transpose(const Tensor& x) {
  Tape& t = tape_of(x);
  return t.record(x.value().transposed(), {x}, [](const Matrix& g, std::span<Matrix* const> gi) {
    if (gi[0]) *gi[0] += g.transposed();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& t = common_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  return t.record(a.value() + b.value(), {a, b}, [](const Matrix& g, std::span<Matrix* const> gi) {
    if (gi[0]) *gi[0] += g;
    if (gi[1]) *gi[1] += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& t = common_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  return t.record(a.value() - b.value(), {a, b}, [](const Matrix& g, std::span<Matrix* const> gi) {
    if (gi[0]) *gi[0] += g;
    if (gi[1]) *gi[1] -= g;
  });
}

Tensor scale(const Tensor& x, double s) {
  Tape& t = tape_of(x);
  return t.record(x.value() * s, {x}, [s](const Matrix& g, std::span<Matrix* const> gi) {
    if (gi[0]) *gi[0] += g * s;
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tape& t = common_tape(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= b.value().data()[i];
  return t.record(std::move(y), {a, b}, [a, b](const Matrix& g, std::span<Matrix* const> gi) {
    const auto& av = a.value().data();
    const auto& bv = b.value().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (gi[0]) gi[0]->data()[i] += g.data()[i] * bv[i];
      if (gi[1]) gi[1]->data()[i] += g.data()[i] * av[i];
    }
  });
}

Tensor row_softmax(const Tensor& x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto out = y.row(r);
    if (in.empty()) continue;
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (out[c] = std::exp(in[c] - m));
    for (double& v : out) v /= z;
  }
  const Matrix saved = y;
  return t.record(std::move(y), {x}, [saved](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    for (std::size_t r = 0; r < saved.rows(); ++r) {
      auto yr = saved.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      auto dst = gi[0]->row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dst[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Tensor log(const Tensor& x) {
  Tape& t = tape_of(x);
  Matrix y = x.value();
  for (double& v : y.data()) v = std::log(std::max(v, kLogEps));
  return t.record(std::move(y), {x}, [x](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] >= kLogEps) gi[0]->data()[i] += g.data()[i] / xv[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  Tape& t = tape_of(x);
  Matrix y = x.value();
  for (double& v : y.data()) v = stable_sigmoid(v);
  const Matrix saved = y;
  return t.record(std::move(y), {x}, [saved](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = saved.data()[i];
      gi[0]->data()[i] += g.data()[i] * s * (1.0 - s);
    }
  });
}

Tensor log_sigmoid(const Tensor& x) {
  Tape& t = tape_of(x);
  Matrix y = x.value();
  for (double& v : y.data()) v = -(std::max(-v, 0.0) + std::log1p(std::exp(-std::abs(v))));
  return t.record(std::move(y), {x}, [x](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[0]->data()[i] += g.data()[i] * stable_sigmoid(-xv[i]);
  });
}

Tensor rsqrt(const Tensor& x) {
  Tape& t = tape_of(x);
  Matrix y = x.value();
  for (double& v : y.data()) v = 1.0 / std::sqrt(std::max(v, kRsqrtEps));
  return t.record(std::move(y), {x}, [x](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] >= kRsqrtEps) gi[0]->data()[i] += g.data()[i] * -0.5 * std::pow(xv[i], -1.5);
  });
}

Tensor sum(const Tensor& x) {
  Tape& t = tape_of(x);
  return t.record(scalar(x.value().sum()), {x}, [](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    for (double& v : gi[0]->data()) v += g(0, 0);
  });
}

Tensor mean(const Tensor& x) {
  Tape& t = tape_of(x);
  const auto n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean of an empty matrix");
  return t.record(scalar(x.value().sum() / n), {x}, [n](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    for (double& v : gi[0]->data()) v += g(0, 0) / n;
  });
}

Tensor row_sum(const Tensor& x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (double v : xv.row(r)) y(r, 0) += v;
  return t.record(std::move(y), {x}, [](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    for (std::size_t r = 0; r < gi[0]->rows(); ++r)
      for (double& v : gi[0]->row(r)) v += g(r, 0);
  });
}

Tensor mul_rows(const Tensor& x, const Tensor& s) {
  Tape& t = common_tape(x, s);
  const Matrix& xv = x.value();
  const Matrix& sv = s.value();
  if (sv.cols() != 1 || sv.rows() != xv.rows())
    throw ShapeError("mul_rows: " + xv.shape_string() + " by " + sv.shape_string());
  Matrix y = xv;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (double& v : y.row(r)) v *= sv(r, 0);
  return t.record(std::move(y), {x, s}, [x, s](const Matrix& g, std::span<Matrix* const> gi) {
    const Matrix& xv = x.value();
    const Matrix& sv = s.value();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      if (gi[0]) {
        auto dst = gi[0]->row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c] * sv(r, 0);
      }
      if (gi[1]) {
        double acc = 0.0;
        auto xr = xv.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) acc += gr[c] * xr[c];
        (*gi[1])(r, 0) += acc;
      }
    }
  });
}

Tensor concat_cols(std::span<const Tensor> blocks) {
  if (blocks.empty()) throw ShapeError("concat_cols of nothing");
  Tape& t = tape_of(blocks.front());
  std::vector<Matrix> values;
  std::vector<std::size_t> widths;
  for (const auto& b : blocks) {
    if (b.tape() != &t) throw TapeError("tensors belong to different tapes");
    values.push_back(b.value());
    widths.push_back(b.cols());
  }
  Matrix y = hstack(values);
  std::vector<Tensor> inputs(blocks.begin(), blocks.end());
  return t.record(std::move(y), inputs, [widths](const Matrix& g, std::span<Matrix* const> gi) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (gi[k]) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row(r).subspan(offset, widths[k]);
          auto dst = gi[k]->row(r);
          for (std::size_t c = 0; c < widths[k]; ++c) dst[c] += src[c];
        }
      }
      offset += widths[k];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix y(index.size(), xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= xv.rows())
      throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " out of " + std::to_string(xv.rows()));
    auto src = xv.row(index[r]);
    std::copy(src.begin(), src.end(), y.row(r).begin());
  }
  return t.record(std::move(y), {x}, [index = std::move(index)](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    for (std::size_t r = 0; r < index.size(); ++r) {
      auto dst = gi[0]->row(index[r]);
      auto src = g.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Tensor frobenius_sq(const Tensor& x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return t.record(scalar(s), {x}, [x](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0]) return;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < xv.size(); ++i) gi[0]->data()[i] += 2.0 * g(0, 0) * xv[i];
  });
}

Tensor frobenius_norm(const Tensor& x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  const double norm = std::sqrt(s);
  return t.record(scalar(norm), {x}, [x, norm](const Matrix& g, std::span<Matrix* const> gi) {
    if (!gi[0] || norm == 0.0) return;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < xv.size(); ++i) gi[0]->data()[i] += g(0, 0) * xv[i] / norm;
  });
}

double grad_check(const ScalarFn& f, const Matrix& at, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-3]");

  Matrix analytic;
  {
    Tape tape;
    Tensor leaf = tape.leaf(at);
    Tensor out = f(tape, leaf);
    analytic = backward(tape, out)[leaf];
  }
  auto eval = [&](const Matrix& point) {
    Tape tape;
    Tensor leaf = tape.leaf(point);
    Tensor out = f(tape, leaf);
    if (out.rows() != 1 || out.cols() != 1) throw TapeError("grad_check: function is not scalar");
    return out.value()(0, 0);
  };

  double worst = 0.0;
  Matrix point = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = point.data()[i];
    point.data()[i] = orig + h;
    const double up = eval(point);
    point.data()[i] = orig - h;
    const double down = eval(point);
    point.data()[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double ad = analytic.data()[i];
    const double denom = std::max({1.0, std::abs(ad), std::abs(fd)});
    worst = std::max(worst, std::abs(ad - fd) / denom);
  }
  return worst;
}

}  // namespace huign::ad
