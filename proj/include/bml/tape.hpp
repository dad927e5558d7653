#pragma once

// Reverse-mode differentiation over batched arrays.
//
// Every value is a 2-D array whose rows index batch items (paths, or
// (time node, path) pairs) and whose columns index components. A Var is
// either a constant (no tape) or a node recorded on a Tape. Operations on
// constants never touch a tape, so the same simulation code runs with or
// without gradients.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace bml::ad {

using Array = Eigen::ArrayXXd;

class Tape;

class Var {
 public:
  Var() = default;
  explicit Var(Array value);
  static Var scalar(double v);
  static Var zeros(Eigen::Index rows, Eigen::Index cols);
  static Var filled(Eigen::Index rows, Eigen::Index cols, double v);

  const Array& value() const { return *value_; }
  Eigen::Index rows() const { return value_ ? value_->rows() : 0; }
  Eigen::Index cols() const { return value_ ? value_->cols() : 0; }
  bool tracked() const { return tape_ != nullptr; }
  bool empty() const { return !value_; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  std::shared_ptr<const Array> value_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Nodes are stored in creation order, which is a topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Array& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Array value);
  Var record(Array value, Backward backward);

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse. Gradients
  // from a previous sweep are discarded first, so repeated calls agree.
  void backward(const Var& root);

  // Gradient of the last root with respect to v (zeros if v never received
  // any contribution).
  Array gradient(const Var& v) const;

  // Adds g into v's gradient, summing over broadcast dimensions when g is
  // larger than v. No-op for constants.
  void accumulate(const Var& v, const Array& g);
  void accumulate(const Var& v, Array&& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<const Array> value;
    Array grad;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise arithmetic. Shapes must match or broadcast: a 1x1 operand acts
// as a scalar, an r x 1 column repeats across columns, a 1 x c row repeats
// across rows.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);

Var scale(const Var& a, double c);
Var square(const Var& a);
Var pow(const Var& a, int k);
Var relu(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

// Row-wise reductions, each returning rows() x 1.
Var square_norm(const Var& a);
Var dot(const Var& a, const Var& b);
Var sum_cols(const Var& a);

// Full reductions to 1x1.
Var sum(const Var& a);
Var mean(const Var& a);

// (B x k) * (k x p).
Var matmul(const Var& a, const Var& w);

// Row b of `mats` holds an r x c matrix in row-major order; the result row b
// is that matrix applied to row b of `vecs` (B x c), giving B x r.
Var batched_matvec(const Var& mats, const Var& vecs, Eigen::Index r, Eigen::Index c);

// Structural operations.
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const Eigen::Index> rows);
// Stacks `times` copies of a vertically.
Var tile_rows(const Var& a, Eigen::Index times);
// Rows are consecutive blocks of `block` rows. Output block i is the sum of
// input blocks i, i+1, ..., last.
Var reverse_cumsum_blocks(const Var& a, Eigen::Index block);
// Sum of all blocks of `block` rows, giving block x cols.
Var sum_blocks(const Var& a, Eigen::Index block);

}  // namespace bml::ad
