#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "survfuse/error.hpp"
#include "survfuse/eval.hpp"

using namespace survfuse;

namespace {

std::vector<SurvivalOutcome> outcomes(std::initializer_list<double> times,
                                      std::initializer_list<int> censor,
                                      std::initializer_list<double> risks = {}) {
  std::vector<SurvivalOutcome> o;
  auto t = times.begin();
  auto c = censor.begin();
  auto r = risks.begin();
  for (; t != times.end(); ++t, ++c) {
    o.push_back({*t, *c, r != risks.end() ? *r : 0.0});
    if (r != risks.end()) ++r;
  }
  return o;
}

// Integer-valued times and risks so that ties happen often.
std::vector<SurvivalOutcome> random_outcomes(std::mt19937_64& rng, int n, double censor_rate) {
  std::uniform_int_distribution<int> time(1, 60), risk(0, 40);
  std::bernoulli_distribution censored(censor_rate);
  std::vector<SurvivalOutcome> o(n);
  for (auto& x : o) x = {double(time(rng)), censored(rng) ? 1 : 0, risk(rng) * 0.25 - 3.0};
  return o;
}

std::vector<oracle::Outcome> to_oracle(const std::vector<SurvivalOutcome>& o) {
  std::vector<oracle::Outcome> out;
  for (const auto& x : o) out.push_back({x.time, x.censor, x.risk});
  return out;
}

// Textbook logrank accumulation over the pooled distinct event times.
double reference_logrank(const std::vector<SurvivalOutcome>& a, const std::vector<SurvivalOutcome>& b) {
  std::vector<double> times;
  for (const auto* g : {&a, &b})
    for (const auto& x : *g)
      if (x.censor == 0) times.push_back(x.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  double o_a = 0, e_a = 0, v = 0;
  for (double t : times) {
    double n_a = 0, n_b = 0, d_a = 0, d_b = 0;
    for (const auto& x : a) n_a += x.time >= t, d_a += x.time == t && x.censor == 0;
    for (const auto& x : b) n_b += x.time >= t, d_b += x.time == t && x.censor == 0;
    const double n = n_a + n_b, d = d_a + d_b;
    o_a += d_a;
    e_a += d * n_a / n;
    if (n > 1) v += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1);
  }
  return (o_a - e_a) * (o_a - e_a) / v;
}

}  // namespace

TEST_CASE("concordance hand examples") {
  CHECK(concordance_index(outcomes({2, 4, 6}, {0, 0, 0}, {0.9, 0.5, 0.1})) == 1.0);
  CHECK(concordance_index(outcomes({2, 4, 6}, {0, 0, 0}, {0.1, 0.5, 0.9})) == 0.0);
  CHECK_THROWS_AS(concordance_index(outcomes({2, 4}, {1, 0}, {0.1, 0.2})), EvalError);
  // Tied event times are not comparable; tied risks earn half credit.
  const auto r = concordance(outcomes({2, 2, 5}, {0, 0, 1}, {1, 1, 1}));
  CHECK(r.comparable == 2);
  CHECK(r.risk_ties == 2);
  CHECK(r.cindex == 0.5);
}

TEST_CASE("concordance equals the brute-force pair count") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto o = random_outcomes(rng, 200, 0.3);
    const auto ref = oracle::brute_force_cindex(to_oracle(o));
    const auto got = concordance(o);
    CHECK(got.comparable == ref.comparable);
    CHECK(got.concordant == ref.concordant);
    CHECK(got.risk_ties == ref.ties);
    CHECK(got.cindex == ref.cindex());
  }
}

TEST_CASE("concordance is invariant under increasing risk transforms") {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 10; ++trial) {
    auto o = random_outcomes(rng, 200, 0.3);
    const double before = concordance_index(o);
    for (auto& x : o) x.risk = std::exp(2.0 * x.risk) + 7.0;
    CHECK(concordance_index(o) == before);
  }
}

TEST_CASE("Kaplan-Meier hand examples") {
  const KmCurve all = km_curve(outcomes({1, 2, 3}, {0, 0, 0}));
  REQUIRE(all.points.size() == 3);
  CHECK(all.points[0].survival == doctest::Approx(2.0 / 3));
  CHECK(all.points[1].survival == doctest::Approx(1.0 / 3));
  CHECK(all.points[2].survival == 0.0);

  const KmCurve shrink = km_curve(outcomes({3, 2, 1}, {0, 1, 0}));
  REQUIRE(shrink.points.size() == 2);
  CHECK(shrink.points[0].time == 1);
  CHECK(shrink.points[0].survival == doctest::Approx(2.0 / 3));
  CHECK(shrink.points[1].time == 3);
  CHECK(shrink.points[1].at_risk == 1);
  CHECK(shrink.points[1].survival == 0.0);
  CHECK(shrink.survival_at(0.5) == 1.0);
  CHECK(shrink.survival_at(2.5) == doctest::Approx(2.0 / 3));

  const KmCurve none = km_curve(outcomes({1, 2}, {1, 1}));
  CHECK(none.points.empty());
  CHECK(none.survival_at(10) == 1.0);
}

TEST_CASE("Kaplan-Meier is order invariant and nonincreasing") {
  std::mt19937_64 rng(5);
  auto o = random_outcomes(rng, 80, 0.3);
  const KmCurve a = km_curve(o);
  std::shuffle(o.begin(), o.end(), rng);
  const KmCurve b = km_curve(o);
  REQUIRE(a.points.size() == b.points.size());
  double prev = 1.0;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].survival == b.points[i].survival);
    CHECK(a.points[i].survival <= prev);
    CHECK(a.points[i].survival >= 0.0);
    prev = a.points[i].survival;
  }
}

TEST_CASE("logrank hand example and symmetries") {
  const auto a = outcomes({1, 3}, {0, 0});
  const auto b = outcomes({2, 4}, {0, 0});
  const LogrankResult r = logrank_test(a, b);
  CHECK(r.observed_a == 2.0);
  CHECK(r.expected_a == doctest::Approx(4.0 / 3));
  CHECK(r.variance == doctest::Approx(13.0 / 18));
  CHECK(std::abs(r.chi_square - 8.0 / 13) < 1e-12);
  CHECK(std::abs(r.chi_square - 0.6154) < 1e-4);
  CHECK(std::abs(r.p_value - std::erfc(std::sqrt(r.chi_square / 2))) <= 1e-10);
  CHECK(logrank_test(b, a).chi_square == doctest::Approx(r.chi_square).epsilon(1e-14));

  // Identical groups with one event each at t = 1. A later censored member
  // keeps the variance positive (a lone pair of simultaneous events has none).
  const auto same = outcomes({1, 5}, {0, 1});
  CHECK(logrank_test(same, same).chi_square == 0.0);
  const auto lone = outcomes({1}, {0});
  CHECK_THROWS_AS(logrank_test(lone, lone), EvalError);
  CHECK_THROWS_AS(logrank_test(outcomes({1, 2}, {1, 1}), outcomes({3}, {1})), EvalError);
  CHECK_THROWS_AS(logrank_test(a, {}), EvalError);
}

TEST_CASE("logrank matches a reference and ignores monotone time maps") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_outcomes(rng, 30, 0.25), b = random_outcomes(rng, 25, 0.25);
    const double chi = logrank_test(a, b).chi_square;
    CHECK(chi == doctest::Approx(reference_logrank(a, b)).epsilon(1e-12));
    CHECK(logrank_test(b, a).chi_square == doctest::Approx(chi).epsilon(1e-12));
    for (auto* g : {&a, &b})
      for (auto& x : *g) x.time = std::log(x.time) * 3.0 + 100.0;
    CHECK(logrank_test(a, b).chi_square == doctest::Approx(chi).epsilon(1e-12));
  }
}

TEST_CASE("chi-square upper tail with one degree of freedom") {
  CHECK(chi_square_1df_sf(0.0) == 1.0);
  CHECK(chi_square_1df_sf(3.841458820694124) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("median risk split") {
  auto withr = [](std::initializer_list<double> r) {
    std::vector<SurvivalOutcome> o;
    for (double x : r) o.push_back({1.0, 0, x});
    return o;
  };
  const auto even = split_by_median_risk(withr({3, 1, 4, 2}));
  CHECK(even.low == std::vector<std::size_t>{1, 3});
  CHECK(even.high == std::vector<std::size_t>{0, 2});
  const auto odd = split_by_median_risk(withr({1, 2, 3}));
  CHECK(odd.low == std::vector<std::size_t>{0, 1});
  CHECK(odd.high == std::vector<std::size_t>{2});
  const auto flat = split_by_median_risk(withr({2, 2, 2}));
  CHECK(flat.low.size() == 3);
  CHECK(flat.high.empty());
  const auto o = withr({2, 2, 2});
  CHECK_THROWS_AS(logrank_test(select(o, flat.low), select(o, flat.high)), EvalError);
}

TEST_CASE("gaussian fit and report writers") {
  const double v[] = {1.0, 2.0, 3.0, 4.0};
  const GaussianFit fit = fit_gaussian(v);
  CHECK(fit.mean == 2.5);
  CHECK(fit.stddev == doctest::Approx(std::sqrt(5.0 / 3)));

  const KmCurve c = km_curve(outcomes({1, 2, 3}, {0, 0, 0}));
  const std::string csv = km_to_csv(c);
  CHECK(csv.rfind("time,survival,at_risk,events\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header, origin, 3 steps
  const std::string svg = km_to_svg(c, c, "t");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}
