// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Define-by-run reverse-mode differentiation over dense 2-D arrays.
//
// A Graph records every operation applied to its Values. Calling backward()
// on a 1x1 root propagates gradients to all reachable nodes and adds the
// gradients of bound Parameters into Parameter::grad. A graph may be
// differentiated once; build a new graph for every step.

namespace nvdp::diff {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Floor applied inside log, sqrt and division denominators.
inline constexpr double kEps = 1e-10;

// Slope of leaky-relu on the negative side.
inline constexpr double kLeakySlope = 0.01;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_str(const Matrix& m);

// Trainable array. Registered in exactly one ParamRegistry.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Value {
 public:
  Value() = default;

  const Matrix& data() const;
  const Matrix& grad() const;
  Index rows() const { return data().rows(); }
  Index cols() const { return data().cols(); }
  double scalar() const;
  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Value(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  // Receives the gradient of the node's output and adds contributions to
  // its inputs through Graph::accumulate.
  using BackwardFn = std::function<void(Graph&, const Matrix& out_grad)>;

  Graph() { nodes_.reserve(512); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value constant(Matrix data);
  Value constant(double v);
  Value param(Parameter& p);

  // Records an operation node. Used by the primitive implementations.
  Value record(Matrix data, std::span<const Value> inputs, BackwardFn fn);
  Value record(Matrix data, std::initializer_list<Value> inputs, BackwardFn fn) {
    return record(std::move(data), std::span<const Value>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  void backward(Value root);
  bool backward_done() const { return backward_done_; }

  const Matrix& data(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr ? n.param->value : n.data;
  }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(const Value& v, Matrix g);

 private:
  struct Node {
    Matrix data;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Arithmetic. Binary elementwise ops broadcast a 1xC row, Rx1 column or 1x1
// scalar operand against the other operand.
Value matmul(Value a, Value b);
Value transpose(Value a);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);  // |b| floored at kEps
Value neg(Value a);
Value scale(Value a, double s);
Value add_scalar(Value a, double s);

Value operator+(Value a, Value b);
Value operator-(Value a, Value b);
Value operator*(Value a, Value b);
Value operator/(Value a, Value b);
Value operator-(Value a);
Value operator*(double s, Value a);
Value operator*(Value a, double s);
Value operator+(Value a, double s);
Value operator+(double s, Value a);
Value operator-(double s, Value a);
Value operator-(Value a, double s);

// Elementwise maps.
Value exp(Value a);
Value log(Value a);   // log(max(x, kEps))
Value sqrt(Value a);  // sqrt(max(x, kEps))
Value square(Value a);
Value tanh(Value a);
Value sigmoid(Value a);
Value softplus(Value a);
Value relu(Value a);
Value leaky_relu(Value a);
// Hard projection onto [lo, hi]; zero gradient where the input lies outside.
Value clip(Value a, double lo, double hi);

// Reductions.
Value sum_all(Value a);
Value mean_all(Value a);
Value mean_cols(Value a);  // per-column mean, 1xC
Value sum_cols(Value a);   // per-column sum, 1xC
Value sum_rows(Value a);   // per-row sum, Rx1

// Structural.
Value concat_cols(std::span<const Value> parts);
Value concat_cols(std::initializer_list<Value> parts);
Value slice_cols(Value a, Index begin, Index end);
Value gather_rows(Value a, std::span<const std::size_t> rows);
Value tile_rows(Value a, Index n);  // 1xC -> nxC

}  // namespace nvdp::diff
