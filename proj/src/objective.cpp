#include "survfuse/objective.hpp"

#include <algorithm>
#include <cmath>

#include "survfuse/error.hpp"

namespace survfuse {

double clamp_probability(double p) {
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

Vector hazards_to_survival(const Vector& hazards) {
  Vector s(hazards.size());
  double acc = 1.0;
  for (Eigen::Index n = 0; n < hazards.size(); ++n) {
    acc *= 1.0 - clamp_probability(hazards(n));
    s(n) = acc;
  }
  return s;
}

double risk_score(const Vector& hazards) {
  return -hazards_to_survival(hazards).sum();
}

std::vector<LogTerm> expand_survival_loss(int y, int n_bins,
                                          SurvivalLoss kind) {
  if (n_bins < 1 || y < 0 || y >= n_bins)
    throw SchemaError("bin " + std::to_string(y) + " outside [0, " +
                      std::to_string(n_bins) + ")");
  using F = LogTerm::Factor;
  using P = LogTerm::Part;
  const double extra =
      kind == SurvivalLoss::kBalanced ? static_cast<double>(n_bins - 1 - y) : 0.0;
  std::vector<LogTerm> terms;
  // log S(y)
  for (int k = 0; k <= y; ++k)
    terms.push_back({F::kOneMinusHazard, P::kCensoredSurvival, k, 1.0});
  if (extra > 0.0)
    terms.push_back({F::kOneMinusHazard, P::kCensoredSurvival, y, extra});
  // log S(y - 1), with S(-1) = 1 and (1 - h(-1)) = 1
  for (int k = 0; k < y; ++k)
    terms.push_back({F::kOneMinusHazard, P::kUncensoredSurvival, k, 1.0});
  if (extra > 0.0 && y >= 1)
    terms.push_back({F::kOneMinusHazard, P::kUncensoredSurvival, y - 1, extra});
  terms.push_back({F::kHazard, P::kUncensoredHazard, y, 1.0});
  return terms;
}

double survival_loss(const Vector& hazards, int y, int censor,
                     SurvivalLoss kind, Vector* grad) {
  if (censor != 0 && censor != 1)
    throw SchemaError("censor must be 0 or 1");
  const int n_bins = static_cast<int>(hazards.size());
  const auto terms = expand_survival_loss(y, n_bins, kind);
  if (grad) grad->setZero(n_bins);
  double loss = 0.0;
  for (const LogTerm& t : terms) {
    const double part = t.part == LogTerm::Part::kCensoredSurvival
                            ? static_cast<double>(censor)
                            : static_cast<double>(1 - censor);
    if (part == 0.0) continue;
    const double raw = hazards(t.bin);
    const double h = clamp_probability(raw);
    const bool inside = raw > kProbFloor && raw < 1.0 - kProbFloor;
    if (t.factor == LogTerm::Factor::kHazard) {
      loss -= part * t.weight * std::log(h);
      if (grad && inside) (*grad)(t.bin) -= part * t.weight / h;
    } else {
      loss -= part * t.weight * std::log1p(-h);
      if (grad && inside) (*grad)(t.bin) += part * t.weight / (1.0 - h);
    }
  }
  return loss;
}

double nll_loss(const Vector& hazards, int y, int censor) {
  return survival_loss(hazards, y, censor, SurvivalLoss::kNll);
}

double bnll_loss(const Vector& hazards, int y, int censor, int n_bins) {
  if (hazards.size() != n_bins)
    throw SchemaError("hazard vector length " + std::to_string(hazards.size()) +
                      " != N_b " + std::to_string(n_bins));
  return survival_loss(hazards, y, censor, SurvivalLoss::kBalanced);
}

ad::Var survival_loss(const ad::Var& hazards, int y, int censor,
                      SurvivalLoss kind) {
  if (hazards.rows() != 1) throw SchemaError("hazards must be a single row");
  const Vector h = hazards.value().row(0).transpose();
  Vector grad;
  Matrix out(1, 1);
  out(0, 0) = survival_loss(h, y, censor, kind, &grad);
  ad::Graph& g = *hazards.graph();
  const ad::Var inputs[] = {hazards};
  const int ih = hazards.id();
  return g.record(std::move(out), inputs,
                  [ih, grad](ad::Graph& g, int self) {
                    g.accumulate(ih, grad.transpose() * g.grad(self)(0, 0));
                  });
}

double cosine_orthogonality_loss(const Vector& a, const Vector& b,
                                 bool* degenerate) {
  const double na = a.norm(), nb = b.norm();
  const bool degen = !(na >= 1e-12 && nb >= 1e-12);
  if (degenerate) *degenerate = degen;
  if (degen) return 0.0;
  return std::min(1.0, std::abs(a.dot(b)) / (na * nb));
}

ad::Var cosine_orthogonality_loss(const ad::Var& a, const ad::Var& b,
                                  bool* degenerate) {
  ad::Graph& g = *a.graph();
  const bool degen =
      !(a.value().norm() >= 1e-12 && b.value().norm() >= 1e-12);
  if (degenerate) *degenerate = degen;
  if (degen) return g.constant(Matrix::Zero(1, 1));
  const ad::Var denom = ad::sqrt(ad::hadamard(ad::dot(a, a), ad::dot(b, b)));
  return ad::abs(ad::divide(ad::dot(a, b), denom));
}

LossBreakdown total_loss(const LossTerms& terms, double alpha) {
  LossBreakdown out;
  out.alpha = alpha;
  if (!terms.multimodal) throw SchemaError("missing multi-modal loss");
  out.multimodal = *terms.multimodal;
  double aux = 0.0;
  for (int i = 0; i < kUnimodalHeads; ++i) {
    out.unimodal_disabled[i] = terms.unimodal_disabled[i];
    if (terms.unimodal_disabled[i]) continue;
    if (!terms.unimodal[i])
      throw SchemaError(std::string("missing uni-modal loss L_u_") +
                        kUnimodalNames[i]);
    out.unimodal[i] = *terms.unimodal[i];
    aux += out.unimodal[i];
  }
  out.cos_pg_disabled = terms.cos_pg_disabled;
  out.cos_pt_disabled = terms.cos_pt_disabled;
  if (!terms.cos_pg_disabled) {
    if (!terms.cos_pg) throw SchemaError("missing cosine loss L_cos_pg");
    out.cos_pg = *terms.cos_pg;
    aux += out.cos_pg;
  }
  if (!terms.cos_pt_disabled) {
    if (!terms.cos_pt) throw SchemaError("missing cosine loss L_cos_pt");
    out.cos_pt = *terms.cos_pt;
    aux += out.cos_pt;
  }
  out.total = out.multimodal + alpha * aux;
  return out;
}

}  // namespace survfuse
