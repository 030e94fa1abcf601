#pragma once

#include "trailermatch/common.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace trailermatch::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  /// Gradient buffer after a backward pass (zero matrix if untouched).
  Mat grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t idx) : tape_(tape), idx_(idx) {}
  Tape* tape_ = nullptr;
  std::uint32_t idx_ = 0;
};

using GradientMap = std::map<std::string, Mat>;

/// Append-only record of primitive applications. Inputs always precede
/// outputs, so reverse insertion order is a reverse topological order and the
/// backward pass is a single right-to-left sweep with additive accumulation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives gradients.
  Var constant(Mat value);
  /// Named leaf that participates in backward; gradients are reported under
  /// this name. Names must be unique per tape.
  Var param(const std::string& name, Mat value, bool requires_grad = true);

  /// Reverse sweep from a 1x1 loss node. Every registered parameter gets an
  /// entry in the result; parameters unreachable from the loss get zeros.
  /// Deterministic: repeated calls produce identical gradients.
  GradientMap backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  // --- forward primitives ---
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);        // elementwise
  Var divide(Var a, Var b);     // elementwise
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var add_rowvec(Var a, Var v);  // v is 1 x cols, added to every row
  Var add_colvec(Var a, Var v);  // v is rows x 1, added to every column
  Var transpose(Var a);
  Var rowsoftmax(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);
  Var sum(Var a);   // 1x1
  Var mean(Var a);  // 1x1
  Var rowsum(Var a);  // rows x 1
  Var colsum(Var a);  // 1 x cols
  Var concat_cols(const std::vector<Var>& parts);
  Var split_cols(Var a, Index start, Index count);
  Var mask_rows(Var a, const std::vector<bool>& keep);       // zero out dropped rows
  Var gather_rows(Var a, const std::vector<Index>& indices); // submatrix of rows
  Var scale_rows(Var a, Var v);  // v is rows x 1, row i multiplied by v(i)
  Var scale_cols(Var a, Var v);  // v is cols x 1, column j multiplied by v(j)

 private:
  enum class Op : std::uint8_t {
    Leaf, MatMul, Add, Sub, Mul, Div, Scale, AddScalar, AddRowVec, AddColVec,
    Transpose, RowSoftmax, Sigmoid, Relu, Exp, Log, Sqrt, Square, Clamp,
    Sum, Mean, RowSum, ColSum, ConcatCols, SplitCols, GatherRows,
    ScaleRows, ScaleCols,
  };

  struct Node {
    Op op = Op::Leaf;
    Mat value;
    Mat grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::uint32_t in_a = 0;
    std::uint32_t in_b = 0;
    std::vector<std::uint32_t> in_list;  // ConcatCols
    double s0 = 0.0, s1 = 0.0;           // scalars / clamp bounds
    Index i0 = 0, i1 = 0;                // SplitCols start/count
    std::vector<Index> indices;          // GatherRows
    std::string name;                    // parameters only
  };

  friend class Var;

  Var emit(Op op, Mat value, std::uint32_t a, std::uint32_t b);
  Mat& grad_buf(std::uint32_t idx);
  void accumulate(std::uint32_t idx, const Mat& g);
  void backprop_node(std::uint32_t idx);
  const Node& node_of(const Var& v) const;
  std::uint32_t idx_of(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> params_;
};

/// Builds a scalar loss from (tape, params); params is an ordered list of
/// named tensors registered on the tape by the builder itself.
using LossBuilder =
    std::function<Var(Tape&, const std::vector<std::pair<std::string, Mat>>&)>;

/// Central-difference check of the analytic gradient. Returns the max over
/// all parameter entries of |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const LossBuilder& build,
                  const std::vector<std::pair<std::string, Mat>>& params, double h);

}  // namespace trailermatch::ad
