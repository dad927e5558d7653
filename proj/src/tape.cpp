#include "bml/tape.hpp"

#include <stdexcept>
#include <string>

namespace bml::ad {

using Eigen::Index;

Var::Var(Array value) : value_(std::make_shared<const Array>(std::move(value))) {}

Var Var::scalar(double v) { return Var(Array::Constant(1, 1, v)); }

Var Var::zeros(Index rows, Index cols) { return Var(Array::Zero(rows, cols)); }

Var Var::filled(Index rows, Index cols, double v) { return Var(Array::Constant(rows, cols, v)); }

Var Tape::variable(Array value) { return record(std::move(value), nullptr); }

Var Tape::record(Array value, Backward backward) {
  Var out;
  out.value_ = std::make_shared<const Array>(std::move(value));
  out.tape_ = this;
  out.id_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{out.value_, Array(), false, std::move(backward)});
  return out;
}

void Tape::backward(const Var& root) {
  if (root.tape_ != this) throw std::invalid_argument("backward: root is not recorded on this tape");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  Node& r = nodes_[root.id_];
  r.grad = Array::Ones(r.value->rows(), r.value->cols());
  r.has_grad = true;
  for (int id = root.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
    // interior gradients are not needed once propagated
    n.grad.resize(0, 0);
    n.has_grad = false;
  }
}

Array Tape::gradient(const Var& v) const {
  if (v.tape_ != this) throw std::invalid_argument("gradient: variable is not recorded on this tape");
  const Node& n = nodes_[v.id_];
  if (!n.has_grad) return Array::Zero(n.value->rows(), n.value->cols());
  return n.grad;
}

void Tape::accumulate(const Var& v, Array&& g) {
  if (!v.tracked()) return;
  Node& n = v.tape_->nodes_[v.id_];
  if (!n.has_grad && g.rows() == n.value->rows() && g.cols() == n.value->cols()) {
    n.grad = std::move(g);
    n.has_grad = true;
    return;
  }
  accumulate(v, static_cast<const Array&>(g));
}

void Tape::accumulate(const Var& v, const Array& g) {
  if (!v.tracked()) return;
  Node& n = v.tape_->nodes_[v.id_];
  const Index r = n.value->rows();
  const Index c = n.value->cols();
  if (!n.has_grad && g.rows() == r && g.cols() == c) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  if (!n.has_grad) {
    n.grad = Array::Zero(r, c);
    n.has_grad = true;
  }
  if (g.rows() == r && g.cols() == c) {
    n.grad += g;
  } else if (r == 1 && c == 1) {
    n.grad(0, 0) += g.sum();
  } else if (r == 1 && g.cols() == c) {
    n.grad += g.colwise().sum();
  } else if (c == 1 && g.rows() == r) {
    n.grad += g.rowwise().sum();
  } else {
    throw std::logic_error("accumulate: gradient shape does not reduce to variable shape");
  }
}

namespace {

Tape* tape_of(const Var& a, const Var& b) {
  if (a.tracked() && b.tracked() && a.tape() != b.tape())
    throw std::invalid_argument("operands recorded on different tapes");
  return a.tracked() ? a.tape() : b.tape();
}

Tape* tape_of(std::span<const Var> parts) {
  Tape* t = nullptr;
  for (const auto& p : parts) {
    if (!p.tracked()) continue;
    if (t && t != p.tape()) throw std::invalid_argument("operands recorded on different tapes");
    t = p.tape();
  }
  return t;
}

template <class F>
Var make(Tape* tape, Array value, F&& backward) {
  if (!tape) return Var(std::move(value));
  return tape->record(std::move(value), Tape::Backward(std::forward<F>(backward)));
}

Index broadcast_dim(Index a, Index b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::invalid_argument("shapes do not broadcast: " + std::to_string(a) + " vs " + std::to_string(b));
}

template <class F>
Array broadcast_binary(const Array& a, const Array& b, F f) {
  const Index r = broadcast_dim(a.rows(), b.rows());
  const Index c = broadcast_dim(a.cols(), b.cols());
  const bool a_full = a.rows() == r && a.cols() == c;
  const bool b_full = b.rows() == r && b.cols() == c;
  if (a_full && b_full) return f(a, b);
  if (a_full && b.size() == 1) return f(a, Array::Constant(r, c, b(0, 0)));
  if (b_full && a.size() == 1) return f(Array::Constant(r, c, a(0, 0)), b);
  // row or column vectors against full arrays, one column at a time
  Array out(r, c);
  for (Index j = 0; j < c; ++j) {
    const Index ja = a.cols() == 1 ? 0 : j, jb = b.cols() == 1 ? 0 : j;
    if (a.rows() == r && b.rows() == r)
      out.col(j) = f(a.col(ja), b.col(jb));
    else if (a.rows() == r)
      out.col(j) = f(a.col(ja), Array::Constant(r, 1, b(0, jb)));
    else if (b.rows() == r)
      out.col(j) = f(Array::Constant(r, 1, a(0, ja)), b.col(jb));
    else
      out.col(j).setConstant(f(Array::Constant(1, 1, a(0, ja)), Array::Constant(1, 1, b(0, jb)))(0, 0));
  }
  return out;
}

constexpr auto kAdd = [](const auto& x, const auto& y) -> Array { return x + y; };
constexpr auto kSub = [](const auto& x, const auto& y) -> Array { return x - y; };
constexpr auto kMul = [](const auto& x, const auto& y) -> Array { return x * y; };

}  // namespace

Var operator+(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  return make(t, broadcast_binary(a.value(), b.value(), kAdd), [a, b](Tape& tp, const Array& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  return make(t, broadcast_binary(a.value(), b.value(), kSub), [a, b](Tape& tp, const Array& g) {
    tp.accumulate(a, g);
    if (b.tracked()) tp.accumulate(b, -g);
  });
}

Var operator*(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  return make(t, broadcast_binary(a.value(), b.value(), kMul), [a, b](Tape& tp, const Array& g) {
    if (a.tracked()) tp.accumulate(a, broadcast_binary(g, b.value(), kMul));
    if (b.tracked()) tp.accumulate(b, broadcast_binary(g, a.value(), kMul));
  });
}

Var operator-(const Var& a) { return scale(a, -1.0); }

Var operator+(const Var& a, double c) {
  return make(a.tape(), a.value() + c, [a](Tape& tp, const Array& g) { tp.accumulate(a, g); });
}
Var operator+(double c, const Var& a) { return a + c; }
Var operator-(const Var& a, double c) { return a + (-c); }
Var operator-(double c, const Var& a) { return scale(a, -1.0) + c; }
Var operator*(const Var& a, double c) { return scale(a, c); }
Var operator*(double c, const Var& a) { return scale(a, c); }

Var scale(const Var& a, double c) {
  return make(a.tape(), a.value() * c, [a, c](Tape& tp, const Array& g) { tp.accumulate(a, g * c); });
}

Var square(const Var& a) {
  return make(a.tape(), a.value().square(),
              [a](Tape& tp, const Array& g) { tp.accumulate(a, 2.0 * g * a.value()); });
}

namespace {
Array int_power(const Array& a, int k) {
  if (k == 0) return Array::Ones(a.rows(), a.cols());
  Array out = a;
  for (int i = 1; i < k; ++i) out *= a;
  return out;
}
}  // namespace

Var pow(const Var& a, int k) {
  if (k < 0) throw std::invalid_argument("pow: exponent must be nonnegative");
  return make(a.tape(), int_power(a.value(), k), [a, k](Tape& tp, const Array& g) {
    if (k == 0) return;
    tp.accumulate(a, static_cast<double>(k) * g * int_power(a.value(), k - 1));
  });
}

Var relu(const Var& a) {
  return make(a.tape(), a.value().max(0.0), [a](Tape& tp, const Array& g) {
    tp.accumulate(a, (a.value() > 0.0).select(g, 0.0));
  });
}

Var sin(const Var& a) {
  return make(a.tape(), a.value().sin(),
              [a](Tape& tp, const Array& g) { tp.accumulate(a, g * a.value().cos()); });
}

Var cos(const Var& a) {
  return make(a.tape(), a.value().cos(),
              [a](Tape& tp, const Array& g) { tp.accumulate(a, -g * a.value().sin()); });
}

Var exp(const Var& a) {
  if (!a.tracked()) return Var(a.value().exp());
  Array v = a.value().exp();
  auto cached = std::make_shared<const Array>(v);
  return make(a.tape(), std::move(v),
              [a, cached](Tape& tp, const Array& g) { tp.accumulate(a, g * *cached); });
}

Var log(const Var& a) {
  return make(a.tape(), a.value().log(),
              [a](Tape& tp, const Array& g) { tp.accumulate(a, g / a.value()); });
}

Var square_norm(const Var& a) {
  return make(a.tape(), a.value().square().rowwise().sum(), [a](Tape& tp, const Array& g) {
    tp.accumulate(a, 2.0 * (a.value().colwise() * g.col(0)));
  });
}

Var dot(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("dot: shape mismatch");
  Tape* t = tape_of(a, b);
  return make(t, (a.value() * b.value()).rowwise().sum(), [a, b](Tape& tp, const Array& g) {
    if (a.tracked()) tp.accumulate(a, b.value().colwise() * g.col(0));
    if (b.tracked()) tp.accumulate(b, a.value().colwise() * g.col(0));
  });
}

Var sum_cols(const Var& a) {
  return make(a.tape(), a.value().rowwise().sum(), [a](Tape& tp, const Array& g) {
    tp.accumulate(a, g.col(0).replicate(1, a.cols()));
  });
}

Var sum(const Var& a) {
  return make(a.tape(), Array::Constant(1, 1, a.value().sum()), [a](Tape& tp, const Array& g) {
    tp.accumulate(a, Array::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var matmul(const Var& a, const Var& w) {
  if (a.cols() != w.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tape* t = tape_of(a, w);
  Array out = (a.value().matrix() * w.value().matrix()).array();
  return make(t, std::move(out), [a, w](Tape& tp, const Array& g) {
    if (a.tracked()) tp.accumulate(a, (g.matrix() * w.value().matrix().transpose()).array());
    if (w.tracked()) tp.accumulate(w, (a.value().matrix().transpose() * g.matrix()).array());
  });
}

Var batched_matvec(const Var& mats, const Var& vecs, Index r, Index c) {
  if (mats.cols() != r * c || vecs.cols() != c || mats.rows() != vecs.rows())
    throw std::invalid_argument("batched_matvec: shape mismatch");
  Tape* t = tape_of(mats, vecs);
  const Array& m = mats.value();
  const Array& v = vecs.value();
  Array out = Array::Zero(m.rows(), r);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) out.col(i) += m.col(i * c + j) * v.col(j);
  return make(t, std::move(out), [mats, vecs, r, c](Tape& tp, const Array& g) {
    const Array& m = mats.value();
    const Array& v = vecs.value();
    if (mats.tracked()) {
      Array gm(m.rows(), m.cols());
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) gm.col(i * c + j) = g.col(i) * v.col(j);
      tp.accumulate(mats, gm);
    }
    if (vecs.tracked()) {
      Array gv = Array::Zero(v.rows(), v.cols());
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) gv.col(j) += g.col(i) * m.col(i * c + j);
      tp.accumulate(vecs, gv);
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
  Tape* t = tape_of(a, b);
  Array out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return make(t, std::move(out), [a, b](Tape& tp, const Array& g) {
    if (a.tracked()) tp.accumulate(a, g.leftCols(a.cols()));
    if (b.tracked()) tp.accumulate(b, g.rightCols(b.cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Array out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  Tape* t = tape_of(parts);
  std::vector<Var> kept(parts.begin(), parts.end());
  return make(t, std::move(out), [kept = std::move(kept)](Tape& tp, const Array& g) {
    Index at = 0;
    for (const auto& p : kept) {
      if (p.tracked()) tp.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  return make(a.tape(), a.value().middleRows(start, count), [a, start, count](Tape& tp, const Array& g) {
    Array full = Array::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    tp.accumulate(a, full);
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  return make(a.tape(), a.value().middleCols(start, count), [a, start, count](Tape& tp, const Array& g) {
    Array full = Array::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    tp.accumulate(a, full);
  });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Array out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) throw std::out_of_range("gather_rows");
    out.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return make(a.tape(), std::move(out), [a, idx = std::move(idx)](Tape& tp, const Array& g) {
    Array full = Array::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) full.row(idx[k]) += g.row(static_cast<Index>(k));
    tp.accumulate(a, full);
  });
}

Var tile_rows(const Var& a, Index times) {
  if (times < 1) throw std::invalid_argument("tile_rows: times must be positive");
  return make(a.tape(), a.value().replicate(times, 1), [a, times](Tape& tp, const Array& g) {
    Array acc = Array::Zero(a.rows(), a.cols());
    for (Index k = 0; k < times; ++k) acc += g.middleRows(k * a.rows(), a.rows());
    tp.accumulate(a, acc);
  });
}

Var reverse_cumsum_blocks(const Var& a, Index block) {
  if (block < 1 || a.rows() % block != 0) throw std::invalid_argument("reverse_cumsum_blocks: bad block size");
  const Index nb = a.rows() / block;
  Array out = a.value();
  for (Index i = nb - 2; i >= 0; --i) out.middleRows(i * block, block) += out.middleRows((i + 1) * block, block);
  return make(a.tape(), std::move(out), [a, block, nb](Tape& tp, const Array& g) {
    Array ga = g;
    for (Index i = 1; i < nb; ++i) ga.middleRows(i * block, block) += ga.middleRows((i - 1) * block, block);
    tp.accumulate(a, ga);
  });
}

Var sum_blocks(const Var& a, Index block) {
  if (block < 1 || a.rows() % block != 0) throw std::invalid_argument("sum_blocks: bad block size");
  const Index nb = a.rows() / block;
  Array out = Array::Zero(block, a.cols());
  for (Index i = 0; i < nb; ++i) out += a.value().middleRows(i * block, block);
  return make(a.tape(), std::move(out), [a, nb](Tape& tp, const Array& g) {
    tp.accumulate(a, g.replicate(nb, 1));
  });
}

}  // namespace bml::ad
