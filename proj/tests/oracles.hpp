#pragma once

// Reference implementations used only by tests. Written independently of
// the library code they check; deliberately naive.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

struct Outcome {
  double time;
  int censor;
  double risk;
};

struct PairCounts {
  std::int64_t concordant = 0;
  std::int64_t ties = 0;
  std::int64_t comparable = 0;
  double cindex() const {
    return (concordant + 0.5 * static_cast<double>(ties)) /
           static_cast<double>(comparable);
  }
};

// Every ordered pair (i, j) with t_i < t_j and an event at i.
inline PairCounts brute_force_cindex(const std::vector<Outcome>& o) {
  PairCounts c;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o[i].censor != 0) continue;
    for (std::size_t j = 0; j < o.size(); ++j) {
      if (!(o[i].time < o[j].time)) continue;
      ++c.comparable;
      if (o[i].risk > o[j].risk)
        ++c.concordant;
      else if (o[i].risk == o[j].risk)
        ++c.ties;
    }
  }
  return c;
}

// Exact optimum of min <P, C> over the transportation polytope with
// marginals a (rows) and b (cols), by enumerating all bases: sets of
// n + m - 1 cells forming a spanning tree of the bipartite row/column graph.
// Each basis has a unique flow found by peeling leaves; the feasible ones
// are the polytope's vertices.
inline double transport_lp_optimum(const Eigen::MatrixXd& C,
                                   const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& b) {
  const int n = static_cast<int>(C.rows()), m = static_cast<int>(C.cols());
  const int cells = n * m, need = n + m - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick;
  // Iterate over subsets of size `need` with a bitmask walk.
  for (std::uint32_t mask = 0; mask < (1u << cells); ++mask) {
    if (__builtin_popcount(mask) != need) continue;
    pick.clear();
    for (int c = 0; c < cells; ++c)
      if (mask & (1u << c)) pick.push_back(c);
    std::vector<double> supply(a.data(), a.data() + n);
    std::vector<double> demand(b.data(), b.data() + m);
    std::vector<bool> used(pick.size(), false);
    std::vector<double> flow(pick.size(), 0.0);
    bool ok = true;
    for (int round = 0; round < need && ok; ++round) {
      // Find a node (row or column) touched by exactly one unused cell.
      int leaf_cell = -1;
      bool leaf_is_row = false;
      for (int r = 0; r < n && leaf_cell < 0; ++r) {
        int deg = 0, last = -1;
        for (std::size_t k = 0; k < pick.size(); ++k)
          if (!used[k] && pick[k] / m == r) ++deg, last = static_cast<int>(k);
        if (deg == 1) leaf_cell = last, leaf_is_row = true;
      }
      for (int c = 0; c < m && leaf_cell < 0; ++c) {
        int deg = 0, last = -1;
        for (std::size_t k = 0; k < pick.size(); ++k)
          if (!used[k] && pick[k] % m == c) ++deg, last = static_cast<int>(k);
        if (deg == 1) leaf_cell = last, leaf_is_row = false;
      }
      if (leaf_cell < 0) {
        ok = false;  // contains a cycle: not a tree
        break;
      }
      const int r = pick[leaf_cell] / m, c = pick[leaf_cell] % m;
      const double f = leaf_is_row ? supply[r] : demand[c];
      flow[leaf_cell] = f;
      supply[r] -= f;
      demand[c] -= f;
      used[leaf_cell] = true;
    }
    if (!ok) continue;
    double residual = 0.0;
    for (double s : supply) residual = std::max(residual, std::abs(s));
    for (double d : demand) residual = std::max(residual, std::abs(d));
    if (residual > 1e-12) continue;
    double cost = 0.0;
    for (std::size_t k = 0; k < pick.size(); ++k) {
      if (flow[k] < -1e-12) {
        ok = false;
        break;
      }
      cost += flow[k] * C(pick[k] / m, pick[k] % m);
    }
    if (ok) best = std::min(best, cost);
  }
  return best;
}

}  // namespace oracle
