#include "trailermatch/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace trailermatch::ad {

const Mat& Var::value() const {
  if (!tape_) throw std::logic_error("Var is not bound to a tape");
  return tape_->node_of(*this).value;
}

bool Var::requires_grad() const {
  if (!tape_) return false;
  return tape_->node_of(*this).requires_grad;
}

Mat Var::grad() const {
  if (!tape_) throw std::logic_error("Var is not bound to a tape");
  const auto& n = tape_->node_of(*this);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const Tape::Node& Tape::node_of(const Var& v) const { return nodes_[v.idx_]; }

std::uint32_t Tape::idx_of(Var v) const {
  if (v.tape_ != this) throw std::invalid_argument("Var belongs to a different tape");
  return v.idx_;
}

Var Tape::emit(Op op, Mat value, std::uint32_t a, std::uint32_t b) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.in_a = a;
  n.in_b = b;
  if (op != Op::Leaf)
    n.requires_grad = nodes_[a].requires_grad ||
                      (b != a && nodes_[b].requires_grad);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Mat value) { return emit(Op::Leaf, std::move(value), 0, 0); }

Var Tape::param(const std::string& name, Mat value, bool requires_grad) {
  for (std::uint32_t p : params_)
    if (nodes_[p].name == name)
      throw std::invalid_argument("duplicate parameter name on tape: " + name);
  Var v = emit(Op::Leaf, std::move(value), 0, 0);
  nodes_[v.idx_].requires_grad = requires_grad;
  nodes_[v.idx_].name = name;
  params_.push_back(v.idx_);
  return v;
}

namespace {
void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
}  // namespace

Var Tape::matmul(Var a, Var b) {
  const std::uint32_t ia = idx_of(a), ib = idx_of(b);
  if (nodes_[ia].value.cols() != nodes_[ib].value.rows())
    throw std::invalid_argument("matmul: inner dimensions differ");
  return emit(Op::MatMul, nodes_[ia].value * nodes_[ib].value, ia, ib);
}

Var Tape::add(Var a, Var b) {
  const std::uint32_t ia = idx_of(a), ib = idx_of(b);
  require_same_shape(nodes_[ia].value, nodes_[ib].value, "add");
  return emit(Op::Add, nodes_[ia].value + nodes_[ib].value, ia, ib);
}

Var Tape::sub(Var a, Var b) {
  const std::uint32_t ia = idx_of(a), ib = idx_of(b);
  require_same_shape(nodes_[ia].value, nodes_[ib].value, "sub");
  return emit(Op::Sub, nodes_[ia].value - nodes_[ib].value, ia, ib);
}

Var Tape::mul(Var a, Var b) {
  const std::uint32_t ia = idx_of(a), ib = idx_of(b);
  require_same_shape(nodes_[ia].value, nodes_[ib].value, "mul");
  return emit(Op::Mul, nodes_[ia].value.cwiseProduct(nodes_[ib].value), ia, ib);
}

Var Tape::divide(Var a, Var b) {
  const std::uint32_t ia = idx_of(a), ib = idx_of(b);
  require_same_shape(nodes_[ia].value, nodes_[ib].value, "divide");
  return emit(Op::Div, nodes_[ia].value.cwiseQuotient(nodes_[ib].value), ia, ib);
}

Var Tape::scale(Var a, double s) {
  const std::uint32_t ia = idx_of(a);
  Var v = emit(Op::Scale, nodes_[ia].value * s, ia, ia);
  nodes_[v.idx_].s0 = s;
  return v;
}

Var Tape::add_scalar(Var a, double s) {
  const std::uint32_t ia = idx_of(a);
  Var v = emit(Op::AddScalar, (nodes_[ia].value.array() + s).matrix(), ia, ia);
  nodes_[v.idx_].s0 = s;
  return v;
}

Var Tape::add_rowvec(Var a, Var v) {
  const std::uint32_t ia = idx_of(a), iv = idx_of(v);
  const Mat& m = nodes_[ia].value;
  const Mat& r = nodes_[iv].value;
  if (r.rows() != 1 || r.cols() != m.cols())
    throw std::invalid_argument("add_rowvec: vector must be 1 x cols");
  Mat out = m;
  out.rowwise() += r.row(0);
  return emit(Op::AddRowVec, std::move(out), ia, iv);
}

Var Tape::add_colvec(Var a, Var v) {
  const std::uint32_t ia = idx_of(a), iv = idx_of(v);
  const Mat& m = nodes_[ia].value;
  const Mat& c = nodes_[iv].value;
  if (c.cols() != 1 || c.rows() != m.rows())
    throw std::invalid_argument("add_colvec: vector must be rows x 1");
  Mat out = m;
  out.colwise() += c.col(0);
  return emit(Op::AddColVec, std::move(out), ia, iv);
}

Var Tape::transpose(Var a) {
  const std::uint32_t ia = idx_of(a);
  return emit(Op::Transpose, nodes_[ia].value.transpose(), ia, ia);
}

Var Tape::rowsoftmax(Var a) {
  const std::uint32_t ia = idx_of(a);
  const Mat& x = nodes_[ia].value;
  Mat out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return emit(Op::RowSoftmax, std::move(out), ia, ia);
}

Var Tape::sigmoid(Var a) {
  const std::uint32_t ia = idx_of(a);
  // stable for both signs of x
  Mat out = nodes_[ia].value.unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return emit(Op::Sigmoid, std::move(out), ia, ia);
}

Var Tape::relu(Var a) {
  const std::uint32_t ia = idx_of(a);
  return emit(Op::Relu, nodes_[ia].value.cwiseMax(0.0), ia, ia);
}

Var Tape::exp(Var a) {
  const std::uint32_t ia = idx_of(a);
  return emit(Op::Exp, nodes_[ia].value.array().exp().matrix(), ia, ia);
}

Var Tape::log(Var a) {
  const std::uint32_t ia = idx_of(a);
  return emit(Op::Log, nodes_[ia].value.array().log().matrix(), ia, ia);
}

Var Tape::sqrt(Var a) {
  const std::uint32_t ia = idx_of(a);
  return emit(Op::Sqrt, nodes_[ia].value.array().sqrt().matrix(), ia, ia);
}

Var Tape::square(Var a) {
  const std::uint32_t ia = idx_of(a);
  return emit(Op::Square, nodes_[ia].value.array().square().matrix(), ia, ia);
}

Var Tape::clamp(Var a, double lo, double hi) {
  const std::uint32_t ia = idx_of(a);
  Var v = emit(Op::Clamp, nodes_[ia].value.cwiseMax(lo).cwiseMin(hi), ia, ia);
  nodes_[v.idx_].s0 = lo;
  nodes_[v.idx_].s1 = hi;
  return v;
}

Var Tape::sum(Var a) {
  const std::uint32_t ia = idx_of(a);
  Mat out(1, 1);
  out(0, 0) = nodes_[ia].value.sum();
  return emit(Op::Sum, std::move(out), ia, ia);
}

Var Tape::mean(Var a) {
  const std::uint32_t ia = idx_of(a);
  Mat out(1, 1);
  out(0, 0) = nodes_[ia].value.mean();
  return emit(Op::Mean, std::move(out), ia, ia);
}

Var Tape::rowsum(Var a) {
  const std::uint32_t ia = idx_of(a);
  Mat out = nodes_[ia].value.rowwise().sum();
  return emit(Op::RowSum, std::move(out), ia, ia);
}

Var Tape::colsum(Var a) {
  const std::uint32_t ia = idx_of(a);
  Mat out = nodes_[ia].value.colwise().sum();
  return emit(Op::ColSum, std::move(out), ia, ia);
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  std::vector<std::uint32_t> ids;
  Index rows = nodes_[idx_of(parts[0])].value.rows();
  Index cols = 0;
  for (Var p : parts) {
    const std::uint32_t ip = idx_of(p);
    if (nodes_[ip].value.rows() != rows)
      throw std::invalid_argument("concat_cols: row counts differ");
    cols += nodes_[ip].value.cols();
    ids.push_back(ip);
  }
  Mat out(rows, cols);
  Index at = 0;
  bool grad = false;
  for (std::uint32_t ip : ids) {
    out.middleCols(at, nodes_[ip].value.cols()) = nodes_[ip].value;
    at += nodes_[ip].value.cols();
    grad = grad || nodes_[ip].requires_grad;
  }
  Node n;
  n.op = Op::ConcatCols;
  n.value = std::move(out);
  n.in_list = std::move(ids);
  n.requires_grad = grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::split_cols(Var a, Index start, Index count) {
  const std::uint32_t ia = idx_of(a);
  const Mat& m = nodes_[ia].value;
  if (start < 0 || count < 1 || start + count > m.cols())
    throw std::invalid_argument("split_cols: range out of bounds");
  Var v = emit(Op::SplitCols, m.middleCols(start, count), ia, ia);
  nodes_[v.idx_].i0 = start;
  nodes_[v.idx_].i1 = count;
  return v;
}

Var Tape::mask_rows(Var a, const std::vector<bool>& keep) {
  const std::uint32_t ia = idx_of(a);
  if (static_cast<Index>(keep.size()) != nodes_[ia].value.rows())
    throw std::invalid_argument("mask_rows: mask length does not match rows");
  Mat m(nodes_[ia].value.rows(), 1);
  for (Index i = 0; i < m.rows(); ++i) m(i, 0) = keep[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return scale_rows(a, constant(std::move(m)));
}

Var Tape::gather_rows(Var a, const std::vector<Index>& indices) {
  const std::uint32_t ia = idx_of(a);
  const Mat& m = nodes_[ia].value;
  if (indices.empty()) throw std::invalid_argument("gather_rows: empty index list");
  Mat out(static_cast<Index>(indices.size()), m.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= m.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    out.row(static_cast<Index>(k)) = m.row(indices[k]);
  }
  Var v = emit(Op::GatherRows, std::move(out), ia, ia);
  nodes_[v.idx_].indices = indices;
  return v;
}

Var Tape::scale_rows(Var a, Var v) {
  const std::uint32_t ia = idx_of(a), iv = idx_of(v);
  const Mat& m = nodes_[ia].value;
  const Mat& s = nodes_[iv].value;
  if (s.cols() != 1 || s.rows() != m.rows())
    throw std::invalid_argument("scale_rows: scaler must be rows x 1");
  Mat out = s.col(0).asDiagonal() * m;
  return emit(Op::ScaleRows, std::move(out), ia, iv);
}

Var Tape::scale_cols(Var a, Var v) {
  const std::uint32_t ia = idx_of(a), iv = idx_of(v);
  const Mat& m = nodes_[ia].value;
  const Mat& s = nodes_[iv].value;
  if (s.cols() != 1 || s.rows() != m.cols())
    throw std::invalid_argument("scale_cols: scaler must be cols x 1");
  Mat out = m * s.col(0).asDiagonal();
  return emit(Op::ScaleCols, std::move(out), ia, iv);
}

Mat& Tape::grad_buf(std::uint32_t idx) {
  Node& n = nodes_[idx];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::uint32_t idx, const Mat& g) {
  if (!nodes_[idx].requires_grad) return;
  grad_buf(idx) += g;
}

void Tape::backprop_node(std::uint32_t idx) {
  Node& n = nodes_[idx];
  if (n.grad.size() == 0) return;  // never reached from the loss
  const Mat& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul:
      accumulate(n.in_a, g * nodes_[n.in_b].value.transpose());
      accumulate(n.in_b, nodes_[n.in_a].value.transpose() * g);
      break;
    case Op::Add:
      accumulate(n.in_a, g);
      accumulate(n.in_b, g);
      break;
    case Op::Sub:
      accumulate(n.in_a, g);
      accumulate(n.in_b, -g);
      break;
    case Op::Mul:
      accumulate(n.in_a, g.cwiseProduct(nodes_[n.in_b].value));
      accumulate(n.in_b, g.cwiseProduct(nodes_[n.in_a].value));
      break;
    case Op::Div: {
      const Mat& b = nodes_[n.in_b].value;
      accumulate(n.in_a, g.cwiseQuotient(b));
      accumulate(n.in_b, -g.cwiseProduct(n.value).cwiseQuotient(b));
      break;
    }
    case Op::Scale:
      accumulate(n.in_a, g * n.s0);
      break;
    case Op::AddScalar:
      accumulate(n.in_a, g);
      break;
    case Op::AddRowVec:
      accumulate(n.in_a, g);
      accumulate(n.in_b, g.colwise().sum());
      break;
    case Op::AddColVec:
      accumulate(n.in_a, g);
      accumulate(n.in_b, g.rowwise().sum());
      break;
    case Op::Transpose:
      accumulate(n.in_a, g.transpose());
      break;
    case Op::RowSoftmax: {
      // dX_i = (dY_i - <dY_i, Y_i>) .* Y_i per row
      Mat dx(g.rows(), g.cols());
      for (Index i = 0; i < g.rows(); ++i) {
        const double dot = g.row(i).cwiseProduct(n.value.row(i)).sum();
        dx.row(i) = (g.row(i).array() - dot) * n.value.row(i).array();
      }
      accumulate(n.in_a, dx);
      break;
    }
    case Op::Sigmoid:
      accumulate(n.in_a, g.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix())));
      break;
    case Op::Relu: {
      const Mat mask = (nodes_[n.in_a].value.array() > 0.0).cast<double>();
      accumulate(n.in_a, g.cwiseProduct(mask));
      break;
    }
    case Op::Exp:
      accumulate(n.in_a, g.cwiseProduct(n.value));
      break;
    case Op::Log:
      accumulate(n.in_a, g.cwiseQuotient(nodes_[n.in_a].value));
      break;
    case Op::Sqrt:
      accumulate(n.in_a, (g.array() * 0.5 / n.value.array()).matrix());
      break;
    case Op::Square:
      accumulate(n.in_a, (g.array() * 2.0 * nodes_[n.in_a].value.array()).matrix());
      break;
    case Op::Clamp: {
      const Mat& x = nodes_[n.in_a].value;
      const Mat mask = ((x.array() >= n.s0) && (x.array() <= n.s1)).cast<double>();
      accumulate(n.in_a, g.cwiseProduct(mask));
      break;
    }
    case Op::Sum:
      accumulate(n.in_a, Mat::Constant(nodes_[n.in_a].value.rows(),
                                       nodes_[n.in_a].value.cols(), g(0, 0)));
      break;
    case Op::Mean: {
      const Mat& x = nodes_[n.in_a].value;
      accumulate(n.in_a,
                 Mat::Constant(x.rows(), x.cols(),
                               g(0, 0) / static_cast<double>(x.size())));
      break;
    }
    case Op::RowSum:
      accumulate(n.in_a, g.col(0).replicate(1, nodes_[n.in_a].value.cols()));
      break;
    case Op::ColSum:
      accumulate(n.in_a, g.row(0).replicate(nodes_[n.in_a].value.rows(), 1));
      break;
    case Op::ConcatCols: {
      Index at = 0;
      for (std::uint32_t ip : n.in_list) {
        const Index w = nodes_[ip].value.cols();
        accumulate(ip, g.middleCols(at, w));
        at += w;
      }
      break;
    }
    case Op::SplitCols: {
      Mat dx = Mat::Zero(nodes_[n.in_a].value.rows(), nodes_[n.in_a].value.cols());
      dx.middleCols(n.i0, n.i1) = g;
      accumulate(n.in_a, dx);
      break;
    }
    case Op::GatherRows: {
      Mat dx = Mat::Zero(nodes_[n.in_a].value.rows(), nodes_[n.in_a].value.cols());
      for (std::size_t k = 0; k < n.indices.size(); ++k)
        dx.row(n.indices[k]) += g.row(static_cast<Index>(k));
      accumulate(n.in_a, dx);
      break;
    }
    case Op::ScaleRows: {
      const Mat& m = nodes_[n.in_a].value;
      const Mat& s = nodes_[n.in_b].value;
      accumulate(n.in_a, s.col(0).asDiagonal() * g);
      accumulate(n.in_b, g.cwiseProduct(m).rowwise().sum());
      break;
    }
    case Op::ScaleCols: {
      const Mat& m = nodes_[n.in_a].value;
      const Mat& s = nodes_[n.in_b].value;
      accumulate(n.in_a, g * s.col(0).asDiagonal());
      accumulate(n.in_b, g.cwiseProduct(m).colwise().sum().transpose());
      break;
    }
  }
}

GradientMap Tape::backward(const Var& loss) {
  const std::uint32_t root = idx_of(loss);
  if (nodes_[root].value.rows() != 1 || nodes_[root].value.cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar");

  for (Node& n : nodes_) n.grad.resize(0, 0);

  // A loss with no parameter ancestors is legal; every parameter is then
  // unreachable and reports a zero gradient.
  if (nodes_[root].requires_grad) {
    grad_buf(root)(0, 0) = 1.0;
    for (std::uint32_t i = root + 1; i-- > 0;) {
      if (nodes_[i].requires_grad) backprop_node(i);
    }
  }

  GradientMap out;
  for (std::uint32_t p : params_) {
    const Node& n = nodes_[p];
    if (!n.requires_grad) continue;
    out[n.name] =
        n.grad.size() == 0 ? Mat::Zero(n.value.rows(), n.value.cols()) : n.grad;
  }
  return out;
}

double grad_check(const LossBuilder& build,
                  const std::vector<std::pair<std::string, Mat>>& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be > 0");

  GradientMap analytic;
  {
    Tape tape;
    Var loss = build(tape, params);
    analytic = tape.backward(loss);
  }

  auto eval = [&](const std::vector<std::pair<std::string, Mat>>& p) {
    Tape tape;
    return build(tape, p).value()(0, 0);
  };

  double worst = 0.0;
  std::vector<std::pair<std::string, Mat>> probe = params;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    const Mat& g = analytic.at(probe[t].first);
    for (Index i = 0; i < probe[t].second.rows(); ++i) {
      for (Index j = 0; j < probe[t].second.cols(); ++j) {
        const double saved = probe[t].second(i, j);
        probe[t].second(i, j) = saved + h;
        const double up = eval(probe);
        probe[t].second(i, j) = saved - h;
        const double down = eval(probe);
        probe[t].second(i, j) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = g(i, j);
        const double err = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace trailermatch::ad
