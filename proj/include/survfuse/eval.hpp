#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace survfuse {

struct SurvivalOutcome {
  double time = 0.0;  // months
  int censor = 0;     // 1 = censored
  double risk = 0.0;  // higher = worse
};

struct ConcordanceResult {
  double cindex = 0.0;
  std::int64_t concordant = 0;
  std::int64_t risk_ties = 0;
  std::int64_t comparable = 0;
};

// Harrell's C: pairs with t_i < t_j and an event at t_i are comparable;
// concordant when risk_i > risk_j, tied risks earn half credit.
// O(n log n). Throws EvalError when no pair is comparable.
ConcordanceResult concordance(std::span<const SurvivalOutcome> outcomes);
double concordance_index(std::span<const SurvivalOutcome> outcomes);

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
  int at_risk = 0;
  int events = 0;
};

// Product-limit estimate, one point per distinct event time. Survival is
// 1.0 before the first point.
struct KmCurve {
  std::vector<KmPoint> points;
  int n = 0;

  double survival_at(double t) const;
};

KmCurve km_curve(std::span<const SurvivalOutcome> group);

struct LogrankResult {
  double chi_square = 0.0;
  double p_value = 1.0;
  double observed_a = 0.0;
  double expected_a = 0.0;
  double variance = 0.0;
  int n_a = 0;
  int n_b = 0;
};

// Two-group logrank test with one degree of freedom.
// Throws EvalError on an empty group or zero variance.
LogrankResult logrank_test(std::span<const SurvivalOutcome> group_a,
                           std::span<const SurvivalOutcome> group_b);

// Upper tail of the chi-square distribution with one degree of freedom.
double chi_square_1df_sf(double chi_square);

struct RiskGroups {
  std::vector<std::size_t> low;
  std::vector<std::size_t> high;
  double threshold = 0.0;
};

// Median split of predicted risk; ties at the median go to the low group.
RiskGroups split_by_median_risk(std::span<const SurvivalOutcome> outcomes);

std::vector<SurvivalOutcome> select(std::span<const SurvivalOutcome> outcomes,
                                    const std::vector<std::size_t>& indices);

struct GaussianFit {
  double mean = 0.0;
  double stddev = 0.0;
};

// Sample mean and (n - 1)-normalized standard deviation.
GaussianFit fit_gaussian(std::span<const double> values);

std::string km_to_csv(const KmCurve& curve);
// Self-contained SVG with the two step curves.
std::string km_to_svg(const KmCurve& low, const KmCurve& high,
                      const std::string& title);

}  // namespace survfuse
