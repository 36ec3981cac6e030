#pragma once

#include <string>

#include "survfuse/autodiff.hpp"

namespace survfuse {

struct CostMatrix {
  Matrix values;  // M_p x M_X
  std::string metric = "cosine";
};

struct TransportPlan {
  Matrix plan;  // M_p x M_X, nonnegative
  Vector row_marginal;
  Vector col_marginal;
  int iterations = 0;
  // Max-norm deviation of the plan's marginals from the targets.
  double violation = 0.0;
};

struct SinkhornOptions {
  double eps = 0.1;
  double tol = 1e-6;
  int max_iter = 1000;
};

// C[u][v] = 1 - cos(f_p[u], f_x[v]). Throws NumericalError on zero-norm rows.
CostMatrix cost_matrix(const Matrix& f_p, const Matrix& f_x);

// Entropic OT between uniform marginals, solved in the log domain.
// Throws ConvergenceError when the marginal violation after max_iter
// exceeds 10 * tol.
TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornOptions& options);

// <P, C>_F
double transport_cost(const TransportPlan& plan, const CostMatrix& cost);

// Barycentric projection M_X * P^T f_p. The plan is a constant: gradients
// flow only into f_p.
ad::Var align(const ad::Var& f_p, const TransportPlan& plan);
Matrix align(const Matrix& f_p, const TransportPlan& plan);

}  // namespace survfuse
