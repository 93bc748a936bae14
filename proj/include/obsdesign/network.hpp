#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

namespace obsdesign::network {

/// Min-cost assignment of every row of `cost` to a distinct column
/// (rows <= cols) by shortest augmenting paths with dual potentials.
/// Infinite entries are forbidden edges. Returns the column of each row, or
/// nullopt when no finite-cost assignment exists.
inline std::optional<std::vector<std::size_t>> solve_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  if (n > m) return std::nullopt;
  if (n == 0) return std::vector<std::size_t>{};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0, as in the classical O(n^2 m) scheme.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double c = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1));
        if (std::isfinite(c)) {
          const double cur = c - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 == 0) return std::nullopt;
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else if (std::isfinite(minv[j])) {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (owner[j] != 0) row_to_col[owner[j] - 1] = j - 1;
  return row_to_col;
}

/// Successive-shortest-path min-cost flow with Dijkstra on reduced costs.
/// Arc costs must be nonnegative.
class MinCostFlow {
 public:
  struct Arc {
    std::size_t to;
    std::size_t rev;
    long cap;
    double cost;
    long flow = 0;
  };

  explicit MinCostFlow(std::size_t nodes) : adj_(nodes) {}

  std::size_t add_arc(std::size_t from, std::size_t to, long cap, double cost) {
    adj_[from].push_back({to, adj_[to].size(), cap, cost});
    adj_[to].push_back({from, adj_[from].size() - 1, 0, -cost});
    return adj_[from].size() - 1;
  }

  const Arc& arc(std::size_t from, std::size_t index) const { return adj_[from][index]; }

  // Pushes up to `limit` units from s to t. Returns (flow, cost).
  std::pair<long, double> run(std::size_t s, std::size_t t, long limit) {
    const std::size_t n = adj_.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> potential(n, 0.0), dist(n);
    std::vector<std::size_t> prev_node(n), prev_arc(n);
    long flow = 0;
    double cost = 0.0;
    using Item = std::pair<double, std::size_t>;
    while (flow < limit) {
      std::fill(dist.begin(), dist.end(), inf);
      dist[s] = 0.0;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      pq.push({0.0, s});
      while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (du > dist[u]) continue;
        for (std::size_t k = 0; k < adj_[u].size(); ++k) {
          const Arc& a = adj_[u][k];
          if (a.cap - a.flow <= 0) continue;
          // Round-off can leave tiny negative reduced costs; clamp them.
          const double rc = std::max(0.0, a.cost + potential[u] - potential[a.to]);
          const double nd = du + rc;
          if (nd < dist[a.to]) {
            dist[a.to] = nd;
            prev_node[a.to] = u;
            prev_arc[a.to] = k;
            pq.push({nd, a.to});
          }
        }
      }
      if (!std::isfinite(dist[t])) break;
      for (std::size_t v = 0; v < n; ++v)
        if (std::isfinite(dist[v])) potential[v] += dist[v];
      long push = limit - flow;
      for (std::size_t v = t; v != s; v = prev_node[v]) {
        const Arc& a = adj_[prev_node[v]][prev_arc[v]];
        push = std::min(push, a.cap - a.flow);
      }
      for (std::size_t v = t; v != s; v = prev_node[v]) {
        Arc& a = adj_[prev_node[v]][prev_arc[v]];
        a.flow += push;
        adj_[v][a.rev].flow -= push;
        cost += static_cast<double>(push) * a.cost;
      }
      flow += push;
    }
    return {flow, cost};
  }

 private:
  std::vector<std::vector<Arc>> adj_;
};

}  // namespace obsdesign::network
