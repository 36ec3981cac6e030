#include "survfuse/ot_align.hpp"

#include <cmath>
#include <sstream>

#include "survfuse/error.hpp"

namespace survfuse {

CostMatrix cost_matrix(const Matrix& f_p, const Matrix& f_x) {
  if (f_p.rows() == 0 || f_x.rows() == 0)
    throw SchemaError("cost_matrix: empty feature set");
  if (f_p.cols() != f_x.cols())
    throw SchemaError("cost_matrix: feature widths " +
                      std::to_string(f_p.cols()) + " vs " +
                      std::to_string(f_x.cols()));
  const Vector np = f_p.rowwise().norm();
  const Vector nx = f_x.rowwise().norm();
  for (Eigen::Index u = 0; u < np.size(); ++u)
    if (!(np(u) > 0.0))
      throw NumericalError("cost_matrix: source row " + std::to_string(u) +
                           " has zero norm");
  for (Eigen::Index v = 0; v < nx.size(); ++v)
    if (!(nx(v) > 0.0))
      throw NumericalError("cost_matrix: target row " + std::to_string(v) +
                           " has zero norm");
  CostMatrix c;
  c.values = f_p * f_x.transpose();
  c.values.array().colwise() /= np.array();
  c.values.array().rowwise() /= nx.transpose().array();
  // Rounding can push |cos| a hair past 1.
  c.values = (1.0 - c.values.array()).cwiseMax(0.0).cwiseMin(2.0);
  return c;
}

namespace {

double log_sum_exp(const Eigen::Ref<const Vector>& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

// Sinkhorn sweeps before switching to Newton on the semi-dual. Plain
// Sinkhorn contracts very slowly when the entropic plan is close to a
// vertex (cost gaps large relative to eps); Newton converges
// quadratically to the same fixed point.
constexpr int kWarmSweeps = 100;

struct LogDomain {
  const Matrix& C;
  double eps;
  double log_a, log_b;

  // Row potentials making the row marginals exact for the given g.
  Vector row_potentials(const Vector& g) const {
    Vector f(C.rows());
    Vector scratch(C.cols());
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
      scratch = (g.array() - C.row(i).transpose().array()) / eps;
      f(i) = eps * (log_a - log_sum_exp(scratch));
    }
    return f;
  }
  Vector col_potentials(const Vector& f) const {
    Vector g(C.cols());
    Vector scratch(C.rows());
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      scratch = (f.array() - C.col(j).array()) / eps;
      g(j) = eps * (log_b - log_sum_exp(scratch));
    }
    return g;
  }
  Matrix plan(const Vector& f, const Vector& g) const {
    Matrix p = ((-C).colwise() + f).rowwise() + g.transpose();
    return (p.array() / eps).exp();
  }
  // Concave semi-dual objective in g (f eliminated).
  double semi_dual(const Vector& g) const {
    const double a = std::exp(log_a), b = std::exp(log_b);
    return a * row_potentials(g).sum() + b * g.sum();
  }
};

double violation_of(const Matrix& plan, const Vector& a, const Vector& b) {
  return std::max((plan.rowwise().sum() - a).cwiseAbs().maxCoeff(),
                  (plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff());
}

}  // namespace

TransportPlan sinkhorn(const CostMatrix& cost, const SinkhornOptions& options) {
  const Matrix& C = cost.values;
  const Eigen::Index n = C.rows(), m = C.cols();
  if (n == 0 || m == 0) throw SchemaError("sinkhorn: empty cost matrix");
  if (!(options.eps > 0.0)) throw ConfigError("sinkhorn: eps must be > 0");
  if (!C.allFinite()) throw NumericalError("sinkhorn: non-finite cost");

  TransportPlan out;
  out.row_marginal = Vector::Constant(n, 1.0 / static_cast<double>(n));
  out.col_marginal = Vector::Constant(m, 1.0 / static_cast<double>(m));
  const LogDomain dom{C, options.eps, std::log(1.0 / static_cast<double>(n)),
                      std::log(1.0 / static_cast<double>(m))};
  const int budget = std::max(options.max_iter, 1);

  // Dual potentials f (rows) and g (columns).
  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  Matrix plan;
  double violation = 0.0;
  int it = 0;
  bool done = false;
  for (; it < std::min(budget, kWarmSweeps) && !done; ++it) {
    f = dom.row_potentials(g);
    g = dom.col_potentials(f);
    plan = dom.plan(f, g);
    violation = violation_of(plan, out.row_marginal, out.col_marginal);
    done = violation < options.tol;
  }

  // Newton on g with the last column fixed (the dual is shift invariant).
  // Gradient b - colsum(P); Hessian -(diag(colsum) - P^T diag(1/a) P)/eps.
  const Eigen::Index k = m - 1;
  for (; it < budget && !done && k > 0; ++it) {
    f = dom.row_potentials(g);
    plan = dom.plan(f, g);
    const Vector colsum = plan.colwise().sum().transpose();
    const Vector grad = out.col_marginal - colsum;
    Matrix hess = -(Matrix(colsum.asDiagonal()) -
                    plan.transpose() * (static_cast<double>(n) * plan)) /
                  options.eps;
    const Vector step =
        (-hess.topLeftCorner(k, k)).ldlt().solve(grad.head(k));
    Vector dir = Vector::Zero(m);
    dir.head(k) = step;
    const double slope = grad.dot(dir);
    double t = 1.0;
    Vector trial = g + dir;
    auto trial_violation = [&](const Vector& gt) {
      return violation_of(dom.plan(dom.row_potentials(gt), gt), out.row_marginal,
                          out.col_marginal);
    };
    // Near the optimum the objective change is below rounding, so a full
    // step that shrinks the violation is taken as is. Otherwise backtrack
    // on the semi-dual.
    if (!(step.allFinite() && trial_violation(trial) < violation)) {
      const double base = dom.semi_dual(g);
      while (t > 1e-10 && !(dom.semi_dual(trial) >= base + 1e-4 * t * slope)) {
        t *= 0.5;
        trial = g + t * dir;
      }
    }
    if (!step.allFinite() || t <= 1e-10) {
      // Fall back to a plain sweep when the step is unusable.
      f = dom.row_potentials(g);
      trial = dom.col_potentials(f);
    }
    g = trial;
    f = dom.row_potentials(g);
    plan = dom.plan(f, g);
    violation = violation_of(plan, out.row_marginal, out.col_marginal);
    done = violation < options.tol;
  }
  if (k == 0 && !done) {
    // Single column: rows first, then the column, is exact.
    f = dom.row_potentials(g);
    plan = dom.plan(f, g);
    violation = violation_of(plan, out.row_marginal, out.col_marginal);
  }

  out.plan = std::move(plan);
  out.iterations = it;
  out.violation = violation;
  if (!(violation <= 10.0 * options.tol)) {
    std::ostringstream os;
    os << "sinkhorn did not converge in " << options.max_iter
       << " iterations: marginal violation " << violation;
    throw ConvergenceError(os.str(), violation);
  }
  return out;
}

double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
  return plan.plan.cwiseProduct(cost.values).sum();
}

namespace {

Matrix barycentric_weights(const TransportPlan& plan) {
  return plan.plan.transpose() * static_cast<double>(plan.plan.cols());
}

}  // namespace

ad::Var align(const ad::Var& f_p, const TransportPlan& plan) {
  if (plan.plan.rows() != f_p.rows())
    throw SchemaError("align: plan has " + std::to_string(plan.plan.rows()) +
                      " rows, features have " + std::to_string(f_p.rows()));
  ad::Graph& g = *f_p.graph();
  return ad::matmul(g.constant(barycentric_weights(plan)), f_p);
}

Matrix align(const Matrix& f_p, const TransportPlan& plan) {
  if (plan.plan.rows() != f_p.rows())
    throw SchemaError("align: plan has " + std::to_string(plan.plan.rows()) +
                      " rows, features have " + std::to_string(f_p.rows()));
  return barycentric_weights(plan) * f_p;
}

}  // namespace survfuse
