#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "survfuse/autodiff.hpp"

namespace survfuse {

// Hazards are clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-7;

double clamp_probability(double p);

// survival[n] = prod_{k <= n} (1 - h[k]) over clamped hazards.
Vector hazards_to_survival(const Vector& hazards);

// -sum_n survival[n]; in (-N_b, 0], larger = worse prognosis.
double risk_score(const Vector& hazards);

enum class SurvivalLoss { kNll, kBalanced };

// Discrete-time likelihood losses expanded into weighted log factors:
//   loss = -sum_terms part_weight(c) * weight * log(factor)
// where factor is (1 - h[bin]) or h[bin] and part_weight is c for the
// censored part and (1 - c) for the two uncensored parts.
struct LogTerm {
  enum class Factor { kOneMinusHazard, kHazard };
  enum class Part { kCensoredSurvival, kUncensoredSurvival, kUncensoredHazard };
  Factor factor;
  Part part;
  int bin;
  double weight;
};

std::vector<LogTerm> expand_survival_loss(int y, int n_bins, SurvivalLoss kind);

// Value and, optionally, the gradient w.r.t. the (unclamped) hazards.
// Coordinates outside the clamp range receive zero gradient.
double survival_loss(const Vector& hazards, int y, int censor,
                     SurvivalLoss kind, Vector* grad = nullptr);

double nll_loss(const Vector& hazards, int y, int censor);
double bnll_loss(const Vector& hazards, int y, int censor, int n_bins);

// Graph node over a 1 x N_b hazard row.
ad::Var survival_loss(const ad::Var& hazards, int y, int censor,
                      SurvivalLoss kind);

// |cos(a, b)|; 0 and *degenerate = true when either norm < 1e-12.
double cosine_orthogonality_loss(const Vector& a, const Vector& b,
                                 bool* degenerate = nullptr);
ad::Var cosine_orthogonality_loss(const ad::Var& a, const ad::Var& b,
                                  bool* degenerate = nullptr);

inline constexpr int kUnimodalHeads = 5;
// Order of the uni-modal terms: g, pg, p, pt, t.
inline constexpr std::array<const char*, kUnimodalHeads> kUnimodalNames = {
    "g", "pg", "p", "pt", "t"};

// Inputs to total_loss. A component that is absent must be listed as
// disabled; it then contributes 0.
struct LossTerms {
  std::optional<double> multimodal;
  std::array<std::optional<double>, kUnimodalHeads> unimodal;
  std::optional<double> cos_pg;
  std::optional<double> cos_pt;
  std::array<bool, kUnimodalHeads> unimodal_disabled{};
  bool cos_pg_disabled = false;
  bool cos_pt_disabled = false;
};

struct LossBreakdown {
  double multimodal = 0.0;
  std::array<double, kUnimodalHeads> unimodal{};
  double cos_pg = 0.0;
  double cos_pt = 0.0;
  double total = 0.0;
  double alpha = 0.1;
  std::array<bool, kUnimodalHeads> unimodal_disabled{};
  bool cos_pg_disabled = false;
  bool cos_pt_disabled = false;
};

// total = L_m + alpha * (sum L_u + L_cos_pg + L_cos_pt).
// Throws SchemaError on a missing component that is not disabled.
LossBreakdown total_loss(const LossTerms& terms, double alpha = 0.1);

}  // namespace survfuse
