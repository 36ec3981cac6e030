#include "survfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "survfuse/error.hpp"

namespace survfuse {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks < i.
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace

ConcordanceResult concordance(std::span<const SurvivalOutcome> outcomes) {
  const std::size_t n = outcomes.size();
  std::vector<double> ranks_sorted;
  ranks_sorted.reserve(n);
  for (const auto& o : outcomes) {
    if (!std::isfinite(o.risk)) throw EvalError("non-finite risk score");
    ranks_sorted.push_back(o.risk);
  }
  std::sort(ranks_sorted.begin(), ranks_sorted.end());
  ranks_sorted.erase(std::unique(ranks_sorted.begin(), ranks_sorted.end()),
                     ranks_sorted.end());
  auto rank_of = [&](double r) {
    return static_cast<std::size_t>(
        std::lower_bound(ranks_sorted.begin(), ranks_sorted.end(), r) -
        ranks_sorted.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return outcomes[a].time > outcomes[b].time;
  });

  ConcordanceResult res;
  Fenwick tree(ranks_sorted.size());
  std::int64_t inserted = 0;
  std::size_t g = 0;
  while (g < n) {
    std::size_t end = g;
    while (end < n && outcomes[order[end]].time == outcomes[order[g]].time) ++end;
    // Everyone inserted so far has a strictly later time.
    for (std::size_t k = g; k < end; ++k) {
      const auto& o = outcomes[order[k]];
      if (o.censor != 0) continue;
      const std::size_t r = rank_of(o.risk);
      const std::int64_t below = tree.prefix(r);
      const std::int64_t at_or_below = tree.prefix(r + 1);
      res.comparable += inserted;
      res.concordant += below;
      res.risk_ties += at_or_below - below;
    }
    for (std::size_t k = g; k < end; ++k) {
      tree.add(rank_of(outcomes[order[k]].risk));
      ++inserted;
    }
    g = end;
  }
  if (res.comparable == 0) throw EvalError("no comparable pairs");
  res.cindex = (static_cast<double>(res.concordant) +
                0.5 * static_cast<double>(res.risk_ties)) /
               static_cast<double>(res.comparable);
  return res;
}

double concordance_index(std::span<const SurvivalOutcome> outcomes) {
  return concordance(outcomes).cindex;
}

double KmCurve::survival_at(double t) const {
  double s = 1.0;
  for (const auto& p : points) {
    if (p.time > t) break;
    s = p.survival;
  }
  return s;
}

KmCurve km_curve(std::span<const SurvivalOutcome> group) {
  std::vector<SurvivalOutcome> sorted(group.begin(), group.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.time < b.time; });
  KmCurve curve;
  curve.n = static_cast<int>(sorted.size());
  int at_risk = curve.n;
  double s = 1.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t end = i;
    int events = 0;
    while (end < sorted.size() && sorted[end].time == sorted[i].time) {
      if (sorted[end].censor == 0) ++events;
      ++end;
    }
    if (events > 0) {
      s *= 1.0 - static_cast<double>(events) / at_risk;
      curve.points.push_back({sorted[i].time, s, at_risk, events});
    }
    at_risk -= static_cast<int>(end - i);
    i = end;
  }
  return curve;
}

double chi_square_1df_sf(double chi_square) {
  return std::erfc(std::sqrt(chi_square / 2.0));
}

LogrankResult logrank_test(std::span<const SurvivalOutcome> group_a,
                           std::span<const SurvivalOutcome> group_b) {
  if (group_a.empty() || group_b.empty())
    throw EvalError("logrank test needs two nonempty groups");
  struct Item {
    double time;
    bool event;
    bool in_a;
  };
  std::vector<Item> items;
  for (const auto& o : group_a) items.push_back({o.time, o.censor == 0, true});
  for (const auto& o : group_b) items.push_back({o.time, o.censor == 0, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.time < b.time; });

  LogrankResult res;
  res.n_a = static_cast<int>(group_a.size());
  res.n_b = static_cast<int>(group_b.size());
  double n_at_a = res.n_a, n_at_b = res.n_b;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t end = i;
    double d = 0.0, d_a = 0.0, leave_a = 0.0, leave_b = 0.0;
    while (end < items.size() && items[end].time == items[i].time) {
      if (items[end].event) {
        d += 1.0;
        if (items[end].in_a) d_a += 1.0;
      }
      (items[end].in_a ? leave_a : leave_b) += 1.0;
      ++end;
    }
    if (d > 0.0) {
      const double n = n_at_a + n_at_b;
      res.observed_a += d_a;
      res.expected_a += d * n_at_a / n;
      if (n > 1.0)
        res.variance += n_at_a * n_at_b * d * (n - d) / (n * n * (n - 1.0));
    }
    n_at_a -= leave_a;
    n_at_b -= leave_b;
    i = end;
  }
  if (!(res.variance > 0.0))
    throw EvalError("logrank variance is zero (no informative event times)");
  const double diff = res.observed_a - res.expected_a;
  res.chi_square = diff * diff / res.variance;
  res.p_value = chi_square_1df_sf(res.chi_square);
  return res;
}

RiskGroups split_by_median_risk(std::span<const SurvivalOutcome> outcomes) {
  if (outcomes.size() < 2) throw EvalError("median split needs >= 2 outcomes");
  std::vector<double> risks;
  for (const auto& o : outcomes) risks.push_back(o.risk);
  std::sort(risks.begin(), risks.end());
  const std::size_t n = risks.size();
  RiskGroups g;
  g.threshold = n % 2 == 1 ? risks[n / 2]
                           : 0.5 * (risks[n / 2 - 1] + risks[n / 2]);
  for (std::size_t i = 0; i < n; ++i)
    (outcomes[i].risk <= g.threshold ? g.low : g.high).push_back(i);
  return g;
}

std::vector<SurvivalOutcome> select(std::span<const SurvivalOutcome> outcomes,
                                    const std::vector<std::size_t>& indices) {
  std::vector<SurvivalOutcome> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(outcomes[i]);
  return out;
}

GaussianFit fit_gaussian(std::span<const double> values) {
  GaussianFit fit;
  if (values.empty()) return fit;
  const double n = static_cast<double>(values.size());
  fit.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - fit.mean) * (v - fit.mean);
    fit.stddev = std::sqrt(ss / (n - 1.0));
  }
  return fit;
}

std::string km_to_csv(const KmCurve& curve) {
  std::ostringstream os;
  os.precision(10);
  os << "time,survival,at_risk,events\n";
  os << 0.0 << ',' << 1.0 << ',' << curve.n << ',' << 0 << '\n';
  for (const auto& p : curve.points)
    os << p.time << ',' << p.survival << ',' << p.at_risk << ',' << p.events
       << '\n';
  return os.str();
}

std::string km_to_svg(const KmCurve& low, const KmCurve& high,
                      const std::string& title) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  double t_max = 1.0;
  for (const KmCurve* c : {&low, &high})
    if (!c->points.empty()) t_max = std::max(t_max, c->points.back().time);
  auto x = [&](double t) { return kPad + (kW - 2 * kPad) * t / t_max; };
  auto y = [&](double s) { return kH - kPad - (kH - 2 * kPad) * s; };
  auto path = [&](const KmCurve& c) {
    std::ostringstream p;
    p << "M" << x(0) << "," << y(1.0);
    double s = 1.0;
    for (const auto& pt : c.points) {
      p << " L" << x(pt.time) << "," << y(s);
      s = pt.survival;
      p << " L" << x(pt.time) << "," << y(s);
    }
    p << " L" << x(t_max) << "," << y(s);
    return p.str();
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kPad << "\" y=\"20\" font-size=\"14\">" << title
     << "</text>\n"
     << "<line x1=\"" << kPad << "\" y1=\"" << y(0) << "\" x2=\"" << kW - kPad
     << "\" y2=\"" << y(0) << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kPad << "\" y1=\"" << y(0) << "\" x2=\"" << kPad
     << "\" y2=\"" << y(1) << "\" stroke=\"black\"/>\n"
     << "<path d=\"" << path(low) << "\" fill=\"none\" stroke=\"blue\"/>\n"
     << "<path d=\"" << path(high) << "\" fill=\"none\" stroke=\"red\"/>\n"
     << "</svg>\n";
  return os.str();
}

}  // namespace survfuse
