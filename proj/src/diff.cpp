// SPDX-License-Identifier: Apache-2.0
#include "nvdp/diff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace nvdp::diff {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

const Matrix& Value::data() const {
  if (graph_ == nullptr) throw GraphError("use of an unbound Value");
  return graph_->data(id_);
}

const Matrix& Value::grad() const {
  if (graph_ == nullptr) throw GraphError("use of an unbound Value");
  return graph_->grad(id_);
}

double Value::scalar() const {
  const Matrix& d = data();
  if (d.rows() != 1 || d.cols() != 1) {
    throw ShapeError("scalar(): value has shape " + shape_str(d));
  }
  return d(0, 0);
}

Value Graph::constant(Matrix data) {
  Node n;
  n.data = std::move(data);
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Value Graph::constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

Value Graph::param(Parameter& p) {
  // Parameters are read in place; they must not change while the graph lives.
  Node n;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Value Graph::record(Matrix data, std::span<const Value> inputs, BackwardFn fn) {
  if (backward_done_) {
    throw GraphError("cannot extend a graph after backward()");
  }
  Node n;
  n.data = std::move(data);
  for (const Value& in : inputs) {
    if (in.graph() != this) {
      throw GraphError("operand belongs to a different graph");
    }
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

const Matrix& Graph::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (!n.has_grad) {
    auto& mut = const_cast<Node&>(n);
    mut.grad = Matrix::Zero(data(id).rows(), data(id).cols());
  }
  return n.grad;
}

void Graph::accumulate(const Value& v, Matrix g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  const Matrix& d = data(v.id());
  if (g.rows() != d.rows() || g.cols() != d.cols()) {
    throw ShapeError("gradient shape " + shape_str(g) +
                     " does not match value shape " + shape_str(d));
  }
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = std::move(g);
    n.has_grad = true;
  }
}

void Graph::backward(Value root) {
  if (root.graph() != this) throw GraphError("root belongs to another graph");
  if (backward_done_) {
    throw GraphError("backward() already ran on this graph; rebuild it");
  }
  const Matrix& rd = data(root.id());
  if (rd.rows() != 1 || rd.cols() != 1) {
    throw ShapeError("backward() needs a scalar root, got " + shape_str(rd));
  }
  backward_done_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr || !n.has_grad) continue;
    Parameter& p = *n.param;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.zero_grad();
    }
    p.grad += n.grad;
  }
}

namespace {

// Output shape of a broadcasting binary op.
std::pair<Index, Index> broadcast_shape(const char* op, const Matrix& a,
                                        const Matrix& b) {
  auto dim = [&](Index x, Index y) -> Index {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  };
  return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Elementwise a op b on the broadcast shape r x c, without materializing
// the broadcast operand in the common cases.
template <typename Op>
Matrix combine(const Matrix& a, const Matrix& b, Index r, Index c, Op op) {
  const bool a_full = a.rows() == r && a.cols() == c;
  const bool b_full = b.rows() == r && b.cols() == c;
  if (a_full && b_full) return a.binaryExpr(b, op);
  if (a_full && b.size() == 1) {
    const double s = b(0, 0);
    return a.unaryExpr([&](double x) { return op(x, s); });
  }
  if (b_full && a.size() == 1) {
    const double s = a(0, 0);
    return b.unaryExpr([&](double x) { return op(s, x); });
  }
  if (a_full && b.rows() == 1) {
    Matrix out(r, c);
    for (Index j = 0; j < c; ++j) {
      const double s = b(0, j);
      out.col(j) = a.col(j).unaryExpr([&](double x) { return op(x, s); });
    }
    return out;
  }
  if (b_full && a.rows() == 1) {
    Matrix out(r, c);
    for (Index j = 0; j < c; ++j) {
      const double s = a(0, j);
      out.col(j) = b.col(j).unaryExpr([&](double x) { return op(s, x); });
    }
    return out;
  }
  return expand(a, r, c).binaryExpr(expand(b, r, c), op);
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

Graph& graph_of(const Value& a) {
  if (a.graph() == nullptr) throw GraphError("use of an unbound Value");
  return *a.graph();
}

Graph& graph_of(const Value& a, const Value& b) {
  if (a.graph() != b.graph() || a.graph() == nullptr) {
    throw GraphError("operands belong to different graphs");
  }
  return *a.graph();
}

template <typename Fwd, typename Deriv>
Value unary(Value a, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(a);
  Matrix out = a.data().unaryExpr(fwd);
  return g.record(std::move(out), {a}, [a, deriv](Graph& gr, const Matrix& og) {
    const Matrix& x = gr.data(a.id());
    gr.accumulate(a, og.cwiseProduct(x.unaryExpr(deriv)));
  });
}

double floored_denominator(double x) {
  if (std::abs(x) >= kEps) return x;
  return x < 0.0 ? -kEps : kEps;
}

}  // namespace

Value matmul(Value a, Value b) {
  Graph& g = graph_of(a, b);
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_str(A) + " vs " +
                     shape_str(B));
  }
  Matrix out;
  out.noalias() = A * B;
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Matrix& og) {
    if (gr.requires_grad(a.id())) {
      Matrix ga;
      ga.noalias() = og * gr.data(b.id()).transpose();
      gr.accumulate(a, std::move(ga));
    }
    if (gr.requires_grad(b.id())) {
      Matrix gb;
      gb.noalias() = gr.data(a.id()).transpose() * og;
      gr.accumulate(b, std::move(gb));
    }
  });
}

Value transpose(Value a) {
  Graph& g = graph_of(a);
  Matrix out = a.data().transpose();
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og.transpose());
  });
}

Value add(Value a, Value b) {
  Graph& g = graph_of(a, b);
  auto [r, c] = broadcast_shape("add", a.data(), b.data());
  Matrix out = combine(a.data(), b.data(), r, c, std::plus<double>());
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Matrix& og) {
    const Matrix& A = gr.data(a.id());
    const Matrix& B = gr.data(b.id());
    if (gr.requires_grad(a.id())) gr.accumulate(a, reduce_to(og, A.rows(), A.cols()));
    if (gr.requires_grad(b.id())) gr.accumulate(b, reduce_to(og, B.rows(), B.cols()));
  });
}

Value sub(Value a, Value b) {
  Graph& g = graph_of(a, b);
  auto [r, c] = broadcast_shape("sub", a.data(), b.data());
  Matrix out = combine(a.data(), b.data(), r, c, std::minus<double>());
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Matrix& og) {
    const Matrix& A = gr.data(a.id());
    const Matrix& B = gr.data(b.id());
    if (gr.requires_grad(a.id())) gr.accumulate(a, reduce_to(og, A.rows(), A.cols()));
    if (gr.requires_grad(b.id())) gr.accumulate(b, reduce_to(-og, B.rows(), B.cols()));
  });
}

Value mul(Value a, Value b) {
  Graph& g = graph_of(a, b);
  auto [r, c] = broadcast_shape("mul", a.data(), b.data());
  Matrix out = combine(a.data(), b.data(), r, c, std::multiplies<double>());
  return g.record(std::move(out), {a, b}, [a, b, r, c](Graph& gr, const Matrix& og) {
    const Matrix& A = gr.data(a.id());
    const Matrix& B = gr.data(b.id());
    if (gr.requires_grad(a.id())) {
      gr.accumulate(a, reduce_to(combine(og, B, r, c, std::multiplies<double>()), A.rows(), A.cols()));
    }
    if (gr.requires_grad(b.id())) {
      gr.accumulate(b, reduce_to(combine(og, A, r, c, std::multiplies<double>()), B.rows(), B.cols()));
    }
  });
}

Value div(Value a, Value b) {
  Graph& g = graph_of(a, b);
  auto [r, c] = broadcast_shape("div", a.data(), b.data());
  Matrix den = expand(b.data(), r, c).unaryExpr(&floored_denominator);
  Matrix out = expand(a.data(), r, c).cwiseQuotient(den);
  return g.record(std::move(out), {a, b}, [a, b, r, c](Graph& gr, const Matrix& og) {
    const Matrix& A = gr.data(a.id());
    const Matrix& B = gr.data(b.id());
    Matrix bx = expand(B, r, c);
    Matrix d = bx.unaryExpr(&floored_denominator);
    if (gr.requires_grad(a.id())) {
      gr.accumulate(a, reduce_to(og.cwiseQuotient(d), A.rows(), A.cols()));
    }
    if (gr.requires_grad(b.id())) {
      Matrix ax = expand(A, r, c);
      Matrix gb = -og.cwiseProduct(ax).cwiseQuotient(d.cwiseProduct(d));
      for (Index j = 0; j < gb.cols(); ++j) {
        for (Index i = 0; i < gb.rows(); ++i) {
          if (std::abs(bx(i, j)) < kEps) gb(i, j) = 0.0;
        }
      }
      gr.accumulate(b, reduce_to(gb, B.rows(), B.cols()));
    }
  });
}

Value neg(Value a) { return scale(a, -1.0); }

Value scale(Value a, double s) {
  Graph& g = graph_of(a);
  Matrix out = a.data() * s;
  return g.record(std::move(out), {a}, [a, s](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og * s);
  });
}

Value add_scalar(Value a, double s) {
  Graph& g = graph_of(a);
  Matrix out = a.data().array() + s;
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og);
  });
}

Value operator+(Value a, Value b) { return add(a, b); }
Value operator-(Value a, Value b) { return sub(a, b); }
Value operator*(Value a, Value b) { return mul(a, b); }
Value operator/(Value a, Value b) { return div(a, b); }
Value operator-(Value a) { return neg(a); }
Value operator*(double s, Value a) { return scale(a, s); }
Value operator*(Value a, double s) { return scale(a, s); }
Value operator+(Value a, double s) { return add_scalar(a, s); }
Value operator+(double s, Value a) { return add_scalar(a, s); }
Value operator-(double s, Value a) { return add_scalar(neg(a), s); }
Value operator-(Value a, double s) { return add_scalar(a, -s); }

Value exp(Value a) {
  Graph& g = graph_of(a);
  Matrix out = a.data().array().exp();
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og.cwiseProduct(gr.data(a.id()).array().exp().matrix()));
  });
}

Value log(Value a) {
  Graph& g = graph_of(a);
  Matrix out = a.data().array().max(kEps).log().matrix();
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    const auto x = gr.data(a.id()).array();
    gr.accumulate(a, (x > kEps).select(og.array() / x, 0.0).matrix());
  });
}

Value sqrt(Value a) {
  Graph& g = graph_of(a);
  Matrix out = a.data().array().max(kEps).sqrt().matrix();
  const Index id = g.size();
  return g.record(std::move(out), {a}, [a, id](Graph& gr, const Matrix& og) {
    const auto x = gr.data(a.id()).array();
    const auto y = gr.data(id).array();
    gr.accumulate(a, (x > kEps).select(0.5 * og.array() / y, 0.0).matrix());
  });
}

Value square(Value a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Value tanh(Value a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

namespace {
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Value sigmoid(Value a) {
  return unary(a, &sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Value softplus(Value a) {
  return unary(
      a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      &sigmoid_scalar);
}

Value relu(Value a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Value leaky_relu(Value a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : kLeakySlope * x; },
      [](double x) { return x > 0.0 ? 1.0 : kLeakySlope; });
}

Value clip(Value a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Value sum_all(Value a) {
  Graph& g = graph_of(a);
  Matrix out = Matrix::Constant(1, 1, a.data().sum());
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    const Matrix& x = gr.data(a.id());
    gr.accumulate(a, Matrix::Constant(x.rows(), x.cols(), og(0, 0)));
  });
}

Value mean_all(Value a) {
  const double n = static_cast<double>(a.data().size());
  if (n == 0) throw ShapeError("mean_all: empty value");
  return scale(sum_all(a), 1.0 / n);
}

Value sum_cols(Value a) {
  Graph& g = graph_of(a);
  Matrix out = a.data().colwise().sum();
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og.replicate(gr.data(a.id()).rows(), 1));
  });
}

Value mean_cols(Value a) {
  const Index n = a.data().rows();
  if (n == 0) throw ShapeError("mean_cols: value has no rows");
  return scale(sum_cols(a), 1.0 / static_cast<double>(n));
}

Value sum_rows(Value a) {
  Graph& g = graph_of(a);
  Matrix out = a.data().rowwise().sum();
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og.replicate(1, gr.data(a.id()).cols()));
  });
}

Value concat_cols(std::initializer_list<Value> parts) {
  std::vector<Value> v(parts);
  return concat_cols(std::span<const Value>(v));
}

Value concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  if (parts.size() == 1) return parts[0];
  Graph& g = graph_of(parts[0]);
  const Index rows = parts[0].data().rows();
  Index cols = 0;
  for (const Value& p : parts) {
    if (p.graph() != &g) throw GraphError("operands belong to different graphs");
    if (p.data().rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " + shape_str(parts[0].data()) +
                       " vs " + shape_str(p.data()));
    }
    cols += p.data().cols();
  }
  Matrix out(rows, cols);
  Index off = 0;
  for (const Value& p : parts) {
    out.middleCols(off, p.data().cols()) = p.data();
    off += p.data().cols();
  }
  std::vector<Value> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), parts, [inputs](Graph& gr, const Matrix& og) {
    Index o = 0;
    for (const Value& p : inputs) {
      const Index c = gr.data(p.id()).cols();
      if (gr.requires_grad(p.id())) gr.accumulate(p, og.middleCols(o, c));
      o += c;
    }
  });
}

Value slice_cols(Value a, Index begin, Index end) {
  Graph& g = graph_of(a);
  const Matrix& x = a.data();
  if (begin < 0 || end > x.cols() || begin >= end) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + shape_str(x));
  }
  Matrix out = x.middleCols(begin, end - begin);
  return g.record(std::move(out), {a}, [a, begin, end](Graph& gr, const Matrix& og) {
    const Matrix& xv = gr.data(a.id());
    Matrix ga = Matrix::Zero(xv.rows(), xv.cols());
    ga.middleCols(begin, end - begin) = og;
    gr.accumulate(a, std::move(ga));
  });
}

Value gather_rows(Value a, std::span<const std::size_t> rows) {
  Graph& g = graph_of(a);
  const Matrix& x = a.data();
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(x.rows())) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) +
                       " out of range for " + shape_str(x));
    }
    out.row(static_cast<Index>(i)) = x.row(static_cast<Index>(rows[i]));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return g.record(std::move(out), {a}, [a, idx](Graph& gr, const Matrix& og) {
    const Matrix& xv = gr.data(a.id());
    Matrix ga = Matrix::Zero(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(static_cast<Index>(idx[i])) += og.row(static_cast<Index>(i));
    }
    gr.accumulate(a, std::move(ga));
  });
}

Value tile_rows(Value a, Index n) {
  Graph& g = graph_of(a);
  const Matrix& x = a.data();
  if (x.rows() != 1) {
    throw ShapeError("tile_rows: expected a row vector, got " + shape_str(x));
  }
  Matrix out = x.replicate(n, 1);
  return g.record(std::move(out), {a}, [a](Graph& gr, const Matrix& og) {
    gr.accumulate(a, og.colwise().sum());
  });
}

}  // namespace nvdp::diff
