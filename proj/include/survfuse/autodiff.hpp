#pragma once

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// A Graph records every operation applied to its Vars; Graph::backward()
// replays the tape in reverse, accumulating gradients. Parameters enter the
// graph as leaves bound to a Parameter, whose `grad` receives the
// accumulated gradient. Constants never receive gradients and nothing
// downstream of only-constant inputs is differentiated.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace survfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter;

namespace ad {

class Graph;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Accumulated gradient; empty until backward() reaches this node.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Value of a 1x1 Var.
  double scalar() const;
  bool requires_grad() const;
  bool valid() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // Leaf bound to `param`; one leaf per parameter per graph.
  Var parameter(Parameter& param);

  // Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(const Var& output);

  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  using Backprop = std::function<void(Graph&, int self)>;
  Var record(Matrix value, std::span<const Var> inputs, Backprop backprop);
  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> leaves_;
};

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Broadcast a 1 x m row over every row of an n x m matrix.
Var add_row(const Var& a, const Var& row);
// s * a for a 1x1 Var s.
Var scale_by(const Var& a, const Var& s);
// Elementwise quotient of two 1x1 Vars.
Var divide(const Var& numerator, const Var& denominator);
// Frobenius inner product, 1x1.
Var dot(const Var& a, const Var& b);
Var sum(const Var& a);
// n x m -> 1 x m column means.
Var mean_rows(const Var& a);

// Shape manipulation.
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
// Mean of the given rows of `table` (duplicates count with multiplicity).
Var gather_mean(const Var& table, std::span<const int> rows);

// Elementwise nonlinearities.
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.01);
Var selu(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);
Var sqrt(const Var& a);

// Row-wise operations.
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta,
                    double eps = 1e-5);

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double selu_value(double x);

}  // namespace ad
}  // namespace survfuse
