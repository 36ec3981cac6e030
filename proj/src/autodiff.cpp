#include "survfuse/autodiff.hpp"

#include <cmath>
#include <string>

#include "survfuse/error.hpp"
#include "survfuse/params.hpp"

namespace survfuse::ad {

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1)
    throw SchemaError("scalar() on " + std::to_string(v.rows()) + "x" +
                      std::to_string(v.cols()) + " value");
  return v(0, 0);
}

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::parameter(Parameter& param) {
  if (auto it = leaves_.find(&param); it != leaves_.end())
    return Var(this, it->second);
  Parameter* target = &param;
  nodes_.push_back(Node{param.value, {},
                        [target](Graph& g, int self) {
                          const Matrix& grad = g.grad(self);
                          if (target->grad.size() == 0)
                            target->grad = grad;
                          else
                            target->grad += grad;
                        },
                        true});
  const int id = static_cast<int>(nodes_.size()) - 1;
  leaves_.emplace(&param, id);
  return Var(this, id);
}

Var Graph::record(Matrix value, std::span<const Var> inputs,
                  Backprop backprop) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.graph() != this) throw SchemaError("Var from a different graph");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), {}, needs ? std::move(backprop) : Backprop{},
           needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Graph::backward(const Var& output) {
  if (output.graph() != this) throw SchemaError("Var from a different graph");
  if (output.value().size() != 1)
    throw SchemaError("backward() needs a scalar output");
  accumulate(output.id(), Matrix::Ones(1, 1));
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(*this, id);
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw SchemaError(std::string(op) + ": shape mismatch " +
                      std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " +
                      std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
}

void require_scalar(const Var& s, const char* op) {
  if (s.value().size() != 1)
    throw SchemaError(std::string(op) + ": expected a 1x1 operand");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw SchemaError("matmul: inner dimensions " + std::to_string(a.cols()) +
                      " vs " + std::to_string(b.rows()));
  Graph& g = *a.graph();
  const Var inputs[] = {a, b};
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() * b.value(), inputs, [ia, ib](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, up * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * up);
  });
}

Var transpose(const Var& a) {
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  return g.record(a.value().transpose(), inputs, [ia](Graph& g, int self) {
    g.accumulate(ia, g.grad(self).transpose());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Graph& g = *a.graph();
  const Var inputs[] = {a, b};
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() + b.value(), inputs, [ia, ib](Graph& g, int self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, g.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Graph& g = *a.graph();
  const Var inputs[] = {a, b};
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() - b.value(), inputs, [ia, ib](Graph& g, int self) {
    g.accumulate(ia, g.grad(self));
    if (g.requires_grad(ib)) g.accumulate(ib, -g.grad(self));
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Graph& g = *a.graph();
  const Var inputs[] = {a, b};
  const int ia = a.id(), ib = b.id();
  return g.record(a.value().cwiseProduct(b.value()), inputs,
                  [ia, ib](Graph& g, int self) {
                    const Matrix& up = g.grad(self);
                    if (g.requires_grad(ia))
                      g.accumulate(ia, up.cwiseProduct(g.value(ib)));
                    if (g.requires_grad(ib))
                      g.accumulate(ib, up.cwiseProduct(g.value(ia)));
                  });
}

Var scale(const Var& a, double s) {
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  return g.record(a.value() * s, inputs, [ia, s](Graph& g, int self) {
    g.accumulate(ia, g.grad(self) * s);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw SchemaError("add_row: row must be 1x" + std::to_string(a.cols()));
  Graph& g = *a.graph();
  const Var inputs[] = {a, row};
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return g.record(std::move(out), inputs, [ia, ir](Graph& g, int self) {
    g.accumulate(ia, g.grad(self));
    if (g.requires_grad(ir)) g.accumulate(ir, g.grad(self).colwise().sum());
  });
}

Var scale_by(const Var& a, const Var& s) {
  require_scalar(s, "scale_by");
  Graph& g = *a.graph();
  const Var inputs[] = {a, s};
  const int ia = a.id(), is = s.id();
  return g.record(a.value() * s.scalar(), inputs,
                  [ia, is](Graph& g, int self) {
                    const Matrix& up = g.grad(self);
                    const double sv = g.value(is)(0, 0);
                    if (g.requires_grad(ia)) g.accumulate(ia, up * sv);
                    if (g.requires_grad(is)) {
                      Matrix gs(1, 1);
                      gs(0, 0) = up.cwiseProduct(g.value(ia)).sum();
                      g.accumulate(is, gs);
                    }
                  });
}

Var divide(const Var& numerator, const Var& denominator) {
  require_scalar(numerator, "divide");
  require_scalar(denominator, "divide");
  Graph& g = *numerator.graph();
  const Var inputs[] = {numerator, denominator};
  const int in = numerator.id(), id = denominator.id();
  Matrix out(1, 1);
  out(0, 0) = numerator.scalar() / denominator.scalar();
  return g.record(std::move(out), inputs, [in, id](Graph& g, int self) {
    const double up = g.grad(self)(0, 0);
    const double n = g.value(in)(0, 0);
    const double d = g.value(id)(0, 0);
    g.accumulate(in, Matrix::Constant(1, 1, up / d));
    g.accumulate(id, Matrix::Constant(1, 1, -up * n / (d * d)));
  });
}

Var dot(const Var& a, const Var& b) {
  require_same_shape(a, b, "dot");
  Graph& g = *a.graph();
  const Var inputs[] = {a, b};
  const int ia = a.id(), ib = b.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().cwiseProduct(b.value()).sum();
  return g.record(std::move(out), inputs, [ia, ib](Graph& g, int self) {
    const double up = g.grad(self)(0, 0);
    if (g.requires_grad(ia)) g.accumulate(ia, g.value(ib) * up);
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia) * up);
  });
}

Var sum(const Var& a) {
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.record(std::move(out), inputs, [ia, r, c](Graph& g, int self) {
    g.accumulate(ia, Matrix::Constant(r, c, g.grad(self)(0, 0)));
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw SchemaError("mean_rows: empty input");
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  const Eigen::Index n = a.rows();
  Matrix out = a.value().colwise().mean();
  return g.record(std::move(out), inputs, [ia, n](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    g.accumulate(ia, up.replicate(n, 1) / static_cast<double>(n));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw SchemaError("concat_rows: no inputs");
  Graph& g = *parts.front().graph();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw SchemaError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return g.record(std::move(out), parts, [layout](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    for (const auto& [id, start] : layout)
      if (g.requires_grad(id))
        g.accumulate(id, up.middleRows(start, g.value(id).rows()));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw SchemaError("concat_cols: no inputs");
  Graph& g = *parts.front().graph();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw SchemaError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return g.record(std::move(out), parts, [layout](Graph& g, int self) {
    const Matrix& up = g.grad(self);
    for (const auto& [id, start] : layout)
      if (g.requires_grad(id))
        g.accumulate(id, up.middleCols(start, g.value(id).cols()));
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw SchemaError("slice_rows: range out of bounds");
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.record(a.value().middleRows(start, count), inputs,
                  [ia, r, c, start, count](Graph& g, int self) {
                    Matrix full = Matrix::Zero(r, c);
                    full.middleRows(start, count) = g.grad(self);
                    g.accumulate(ia, full);
                  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw SchemaError("slice_cols: range out of bounds");
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.record(a.value().middleCols(start, count), inputs,
                  [ia, r, c, start, count](Graph& g, int self) {
                    Matrix full = Matrix::Zero(r, c);
                    full.middleCols(start, count) = g.grad(self);
                    g.accumulate(ia, full);
                  });
}

Var gather_mean(const Var& table, std::span<const int> rows) {
  if (rows.empty()) throw SchemaError("gather_mean: no rows");
  Graph& g = *table.graph();
  const Matrix& t = table.value();
  Matrix out = Matrix::Zero(1, t.cols());
  for (int r : rows) {
    if (r < 0 || r >= t.rows()) throw SchemaError("gather_mean: row index");
    out += t.row(r);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out *= inv;
  const Var inputs[] = {table};
  const int it = table.id();
  std::vector<int> idx(rows.begin(), rows.end());
  return g.record(std::move(out), inputs,
                  [it, idx = std::move(idx), inv](Graph& g, int self) {
                    const Matrix& up = g.grad(self);
                    Matrix full = Matrix::Zero(g.value(it).rows(),
                                               g.value(it).cols());
                    for (int r : idx) full.row(r) += up.row(0) * inv;
                    g.accumulate(it, full);
                  });
}

namespace {

template <typename F, typename DF>
Var elementwise(const Var& a, F f, DF df) {
  Graph& g = *a.graph();
  const Var inputs[] = {a};
  const int ia = a.id();
  Matrix out = a.value().unaryExpr(f);
  return g.record(std::move(out), inputs, [ia, df](Graph& g, int self) {
    const Matrix local = g.value(ia).unaryExpr(df);
    g.accumulate(ia, g.grad(self).cwiseProduct(local));
  });
}

}  // namespace

Var relu(const Var& a) {
  return elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return elementwise(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

double selu_value(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

Var selu(const Var& a) {
  return elementwise(
      a, [](double x) { return selu_value(x); },
      [](double x) {
        return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
      });
}

namespace {
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(const Var& a) {
  return elementwise(
      a, [](double x) { return logistic(x); },
      [](double x) {
        const double s = logistic(x);
        return s * (1.0 - s);
      });
}

Var abs(const Var& a) {
  return elementwise(
      a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sqrt(const Var& a) {
  return elementwise(
      a, [](double x) { return std::sqrt(x); },
      [](double x) { return 0.5 / std::sqrt(x); });
}

Var softmax_rows(const Var& a) {
  Graph& g = *a.graph();
  Matrix out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  const Var inputs[] = {a};
  const int ia = a.id();
  auto backprop = [ia](Graph& g, int self) {
    const Matrix& s = g.value(self);
    const Matrix& up = g.grad(self);
    // d_in = s * (up - <up, s>) per row
    Matrix din = s.cwiseProduct(
        up - (up.cwiseProduct(s).rowwise().sum()).replicate(1, s.cols()));
    g.accumulate(ia, din);
  };
  return g.record(std::move(out), inputs, backprop);
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta,
                    double eps) {
  const Eigen::Index n = x.rows(), m = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != m || beta.rows() != 1 ||
      beta.cols() != m)
    throw SchemaError("layer_norm_rows: gamma/beta must be 1x" +
                      std::to_string(m));
  Graph& g = *x.graph();
  Matrix xhat(n, m);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const RowVector centered = x.value().row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(m);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  const Var inputs[] = {x, gamma, beta};
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return g.record(
      std::move(out), inputs,
      [ix, ig, ib, xhat, inv_std](Graph& g, int self) {
        const Matrix& up = g.grad(self);
        const Eigen::Index m = up.cols();
        if (g.requires_grad(ig))
          g.accumulate(ig, up.cwiseProduct(xhat).colwise().sum());
        if (g.requires_grad(ib)) g.accumulate(ib, up.colwise().sum());
        if (g.requires_grad(ix)) {
          const Matrix dxhat =
              up.array().rowwise() * g.value(ig).row(0).array();
          Matrix dx(up.rows(), m);
          for (Eigen::Index i = 0; i < up.rows(); ++i) {
            const double mean_d = dxhat.row(i).mean();
            const double mean_dx = dxhat.row(i).dot(xhat.row(i)) /
                                   static_cast<double>(m);
            dx.row(i) = inv_std(i) * (dxhat.row(i).array() - mean_d -
                                      xhat.row(i).array() * mean_dx);
          }
          g.accumulate(ix, dx);
        }
      });
}

}  // namespace survfuse::ad
