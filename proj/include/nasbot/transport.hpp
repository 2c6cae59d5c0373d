#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nasbot/errors.hpp"

namespace nasbot {

/// Balanced transportation problem: ship `supplies` to `demands` at unit
/// prices `cost` (rows = supplies, columns = demands).
struct TransportInstance {
  std::vector<double> supplies;
  std::vector<double> demands;
  Eigen::MatrixXd cost;
};

/// A basic cell (row, column) of the transportation tableau.
using Cell = std::pair<int, int>;

struct TransportPlan {
  Eigen::MatrixXd coupling;
  double objective = 0.0;
  std::vector<Cell> basis; // spanning tree of m+n-1 cells, reusable as a warm start
  int pivots = 0;
};

struct SolveOptions {
  /// Cells whose cost is >= this value are never priced in. Only sound when
  /// the caller knows such cells cannot improve any optimum.
  double entry_cutoff = std::numeric_limits<double>::infinity();
  /// Optional starting basis (e.g. the optimum of a related instance with
  /// the same marginals). Ignored if it is not a feasible spanning tree.
  const std::vector<Cell>* warm_basis = nullptr;
  /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
  int degenerate_limit = 30;
};

namespace detail {

/// Transportation simplex working storage. One object can be loaded with
/// instances of any shape repeatedly; buffers are kept between loads.
class TransportSimplex {
public:
  /// The referenced vectors and matrix must outlive the solves.
  void load(const std::vector<double>& supplies, const std::vector<double>& demands, const Eigen::MatrixXd& cost,
            const SolveOptions& opts) {
    supplies_ = &supplies;
    demands_ = &demands;
    cost_ = &cost;
    opts_ = opts;
    m_ = static_cast<int>(supplies.size());
    n_ = static_cast<int>(demands.size());
    nodes_ = m_ + n_;
    pivots_ = 0;
  }

  /// Returns the optimal objective.
  double solve() {
    collect_candidates();
    if (!(opts_.warm_basis && load_basis(*opts_.warm_basis))) initial_basis();
    rebuild_tree();
    return optimise();
  }

  /// Re-solves under a new cost matrix of the same shape, starting from the
  /// current (still primal feasible) basis.
  double resolve(const Eigen::MatrixXd& cost) {
    cost_ = &cost;
    pivots_ = 0;
    collect_candidates();
    // same tree, new costs: only the potentials change
    relabel_subtree(0);
    return optimise();
  }

  TransportPlan plan() const {
    TransportPlan plan;
    plan.coupling = Eigen::MatrixXd::Zero(m_, n_);
    plan.basis = basis_;
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      auto [i, j] = basis_[e];
      plan.coupling(i, j) = flow_[e];
      plan.objective += flow_[e] * cost(i, j);
    }
    plan.pivots = pivots_;
    return plan;
  }

private:
  double optimise() {
    int degenerate_run = 0;
    bool bland = false;
    const long max_pivots = 200L * nodes_ * nodes_ + 1000;
    while (true) {
      int enter = bland ? price_bland() : price_block();
      // Cells above the cutoff are not priced; certify them once at the end
      // and bring any that would still improve the plan into the pool.
      if (enter < 0 && admit_unpriced()) enter = bland ? price_bland() : price_block();
      if (enter < 0) break;
      const double theta = pivot(enter);
      if (++pivots_ > max_pivots) throw ComputeError("transport: pivot limit exceeded");
      if (theta <= 0.0) {
        if (++degenerate_run > opts_.degenerate_limit) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
    double obj = 0.0;
    for (std::size_t e = 0; e < basis_.size(); ++e) obj += flow_[e] * cost(basis_[e].first, basis_[e].second);
    return obj;
  }

  double cost(int i, int j) const { return (*cost_)(i, j); }

  const std::vector<double>* supplies_ = nullptr;
  const std::vector<double>* demands_ = nullptr;
  const Eigen::MatrixXd* cost_ = nullptr;
  SolveOptions opts_;
  int m_ = 0, n_ = 0, nodes_ = 0;
  long pivots_ = 0;

  // priced cells, in column-major index order
  struct Candidate {
    double cost;
    int row, node; // node = col_node(m, column)
  };
  std::vector<Candidate> cand_;
  std::size_t n_cand_ = 0, next_cand_ = 0;
  double tol_ = 1e-12;

  std::vector<Cell> basis_;
  std::vector<double> flow_;
  std::vector<std::vector<int>> adj_; // node -> incident basis entries
  std::vector<int> parent_node_, parent_edge_, depth_;
  std::vector<double> pot_;
  std::vector<int> queue_, side_a_, side_b_; // scratch
  std::vector<std::uint64_t> order_;
  std::vector<double> left_s_, left_d_;
  std::vector<char> row_done_, col_done_;

  static int col_node(int m, int j) { return m + j; }

  void collect_candidates() {
    // admitted cells are disjoint from priced ones, so m*n slots always suffice
    const auto cells = static_cast<std::size_t>(m_) * static_cast<std::size_t>(n_);
    if (cand_.size() < cells) cand_.resize(cells);
    double scale = 1.0;
    std::size_t k = 0;
    const double cut = opts_.entry_cutoff;
    const double* c = cost_->data();
    for (int j = 0; j < n_; ++j) {
      const int node = col_node(m_, j);
      for (int i = 0; i < m_; ++i, ++c)
        if (*c < cut) {
          cand_[k++] = {*c, i, node};
          scale = std::max(scale, std::abs(*c));
        }
    }
    n_cand_ = k;
    next_cand_ = 0;
    tol_ = 1e-12 * scale;
  }

  // Least-cost ("matrix minimum") start. Each allocation retires one line;
  // the last row and column are retired together, giving m+n-1 tree cells.
  // Cells at or above the cutoff are only reached once the priced cells are
  // exhausted, so only the priced cells need sorting.
  void initial_basis() {
    // Non-negative doubles order like their bit patterns; a float key is
    // precise enough for a starting heuristic and leaves room for the index.
    auto key = [](double c, int idx) {
      const float f = static_cast<float>(std::max(0.0, c));
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      return (static_cast<std::uint64_t>(bits) << 32) | static_cast<std::uint32_t>(idx);
    };
    left_s_ = *supplies_;
    left_d_ = *demands_;
    row_done_.assign(m_, 0);
    col_done_.assign(n_, 0);
    int rows_left = m_, cols_left = n_;
    basis_.clear();
    flow_.clear();
    const auto full = static_cast<std::size_t>(m_ + n_ - 1);
    auto allocate = [&] {
      for (std::uint64_t packed : order_) {
        if (basis_.size() == full) return;
        const int k = static_cast<int>(packed & 0xffffffffu);
        const int i = k / n_, j = k % n_;
        if (row_done_[i] || col_done_[j]) continue;
        const double q = std::min(left_s_[i], left_d_[j]);
        basis_.emplace_back(i, j);
        flow_.push_back(q);
        const bool row_exhausted = left_s_[i] <= left_d_[j];
        left_s_[i] -= q;
        left_d_[j] -= q;
        if (rows_left == 1 && cols_left == 1) {
          row_done_[i] = col_done_[j] = 1;
          rows_left = cols_left = 0;
        } else if ((row_exhausted && rows_left > 1) || cols_left == 1) {
          left_s_[i] = 0.0;
          row_done_[i] = 1;
          --rows_left;
        } else {
          left_d_[j] = 0.0;
          col_done_[j] = 1;
          --cols_left;
        }
      }
    };
    order_.clear();
    for (std::size_t k = 0; k < n_cand_; ++k)
      order_.push_back(key(cand_[k].cost, cand_[k].row * n_ + cand_[k].node - m_));
    std::sort(order_.begin(), order_.end());
    allocate();
    if (basis_.size() == full) return;
    // Unpriced cells are sorted only when the priced ones cannot finish the tree.
    order_.clear();
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < m_; ++i)
        if (!row_done_[i] && !col_done_[j] && cost(i, j) >= opts_.entry_cutoff)
          order_.push_back(key(cost(i, j), i * n_ + j));
    std::sort(order_.begin(), order_.end());
    allocate();
  }

  // Recover flows on a candidate tree by peeling leaves.
  bool load_basis(const std::vector<Cell>& cells) {
    if (static_cast<int>(cells.size()) != m_ + n_ - 1) return false;
    std::vector<std::vector<int>> adj(nodes_);
    for (std::size_t e = 0; e < cells.size(); ++e) {
      auto [i, j] = cells[e];
      if (i < 0 || i >= m_ || j < 0 || j >= n_) return false;
      adj[i].push_back(static_cast<int>(e));
      adj[col_node(m_, j)].push_back(static_cast<int>(e));
    }
    std::vector<double> residual(nodes_);
    for (int i = 0; i < m_; ++i) residual[i] = (*supplies_)[i];
    for (int j = 0; j < n_; ++j) residual[col_node(m_, j)] = (*demands_)[j];
    std::vector<int> degree(nodes_);
    std::vector<int> leaves;
    for (int v = 0; v < nodes_; ++v) {
      degree[v] = static_cast<int>(adj[v].size());
      if (degree[v] == 1) leaves.push_back(v);
    }
    std::vector<char> used(cells.size(), 0);
    std::vector<double> flow(cells.size(), 0.0);
    std::size_t done = 0;
    double total = 0.0;
    for (double x : *supplies_) total += x;
    const double eps = 1e-9 * std::max(1.0, total);
    while (!leaves.empty()) {
      const int v = leaves.back();
      leaves.pop_back();
      if (degree[v] != 1) continue;
      int edge = -1;
      for (int e : adj[v])
        if (!used[e]) edge = e;
      if (edge < 0) continue;
      auto [i, j] = cells[edge];
      const int other = v < m_ ? col_node(m_, j) : i;
      double f = residual[v];
      if (f < -eps) return false;
      f = std::max(0.0, f);
      flow[edge] = f;
      used[edge] = 1;
      ++done;
      residual[v] = 0.0;
      residual[other] -= f;
      --degree[v];
      if (--degree[other] == 1) leaves.push_back(other);
    }
    if (done != cells.size()) return false;
    basis_ = cells;
    flow_ = std::move(flow);
    return true;
  }

  int other_end(int v, int e) const { return v < m_ ? col_node(m_, basis_[e].second) : basis_[e].first; }

  // Sets depth and potential below `root` (whose own values are already set),
  // following tree edges away from its parent.
  void relabel_subtree(int root) {
    queue_.assign(1, root);
    for (std::size_t h = 0; h < queue_.size(); ++h) {
      const int v = queue_[h];
      for (int e : adj_[v]) {
        if (e == parent_edge_[v]) continue;
        const int w = other_end(v, e);
        depth_[w] = depth_[v] + 1;
        parent_node_[w] = v;
        parent_edge_[w] = e;
        pot_[w] = cost(basis_[e].first, basis_[e].second) - pot_[v];
        queue_.push_back(w);
      }
    }
  }

  void rebuild_tree() {
    adj_.resize(nodes_);
    for (auto& a : adj_) a.clear();
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      adj_[basis_[e].first].push_back(static_cast<int>(e));
      adj_[col_node(m_, basis_[e].second)].push_back(static_cast<int>(e));
    }
    parent_node_.assign(nodes_, -1);
    parent_edge_.assign(nodes_, -1);
    depth_.assign(nodes_, 0);
    pot_.assign(nodes_, 0.0);
    relabel_subtree(0);
    if (static_cast<int>(queue_.size()) != nodes_) throw ComputeError("transport: basis is not a spanning tree");
  }

  bool admit_unpriced() {
    if (!(opts_.entry_cutoff < std::numeric_limits<double>::infinity())) return false;
    const double max_u = *std::max_element(pot_.begin(), pot_.begin() + m_);
    const double max_v = *std::max_element(pot_.begin() + m_, pot_.end());
    if (opts_.entry_cutoff - max_u - max_v >= -tol_) return false;
    bool added = false;
    for (int j = 0; j < n_; ++j) {
      const int node = col_node(m_, j);
      const double vj = pot_[node];
      if (opts_.entry_cutoff - max_u - vj >= -tol_) continue;
      for (int i = 0; i < m_; ++i) {
        const double c = cost(i, j);
        if (c < opts_.entry_cutoff || c - pot_[i] - vj >= -tol_) continue;
        cand_[n_cand_++] = {c, i, node};
        added = true;
      }
    }
    return added;
  }

  double reduced(std::size_t k) const {
    return cand_[k].cost - pot_[cand_[k].row] - pot_[cand_[k].node];
  }

  // Scans the candidates cyclically in blocks and takes the most negative
  // reduced cost of the first block that has one.
  int price_block() {
    const std::size_t n = n_cand_;
    const std::size_t block = std::max<std::size_t>(16, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
    int best = -1;
    double best_r = -tol_;
    std::size_t k = next_cand_ < n ? next_cand_ : 0, in_block = 0;
    for (std::size_t seen = 0; seen < n; ++seen) {
      const double r = reduced(k);
      if (r < best_r) {
        best_r = r;
        best = static_cast<int>(k);
      }
      if (++k == n) k = 0;
      if (++in_block == block) {
        if (best >= 0) break;
        in_block = 0;
      }
    }
    next_cand_ = k;
    return best;
  }

  int price_bland() const {
    int best = -1;
    long best_key = 0;
    for (std::size_t k = 0; k < n_cand_; ++k) {
      if (reduced(k) >= -tol_) continue;
      const long key = static_cast<long>(cand_[k].row) * n_ + (cand_[k].node - m_);
      if (best < 0 || key < best_key) {
        best = static_cast<int>(k);
        best_key = key;
      }
    }
    return best;
  }

  static void erase_edge(std::vector<int>& list, int e) { list.erase(std::find(list.begin(), list.end(), e)); }

  // Pushes flow around the cycle closed by candidate `k`; returns the step.
  double pivot(int k) {
    const int i = cand_[k].row, j = cand_[k].node - m_;
    const int ni = i, nj = col_node(m_, j);
    int a = ni, b = nj;
    auto& from_a = side_a_;
    auto& from_b = side_b_;
    from_a.clear();
    from_b.clear();
    while (a != b) {
      if (depth_[a] >= depth_[b]) {
        from_a.push_back(parent_edge_[a]);
        a = parent_node_[a];
      } else {
        from_b.push_back(parent_edge_[b]);
        b = parent_node_[b];
      }
    }
    // Cycle edges alternate -,+,-,... from both ends of the tree path.
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    bool leave_on_a = true;
    auto consider = [&](const std::vector<int>& side, bool on_a) {
      for (std::size_t t = 0; t < side.size(); t += 2) {
        const int e = side[t];
        const double f = flow_[e];
        const auto key = static_cast<long>(basis_[e].first) * n_ + basis_[e].second;
        const auto best_key =
            leave < 0 ? 0L : static_cast<long>(basis_[leave].first) * n_ + basis_[leave].second;
        if (f < theta || (f == theta && key < best_key)) {
          theta = f;
          leave = e;
          leave_on_a = on_a;
        }
      }
    };
    consider(from_a, true);
    consider(from_b, false);
    theta = std::max(0.0, theta);
    auto apply = [&](const std::vector<int>& side) {
      for (std::size_t t = 0; t < side.size(); ++t) {
        const int e = side[t];
        if (t % 2 == 0)
          flow_[e] = std::max(0.0, flow_[e] - theta);
        else
          flow_[e] += theta;
      }
    };
    apply(from_a);
    apply(from_b);

    // The leaving edge cuts off the subtree holding the entering endpoint on
    // its side of the cycle; hang that subtree from the other endpoint.
    erase_edge(adj_[basis_[leave].first], leave);
    erase_edge(adj_[col_node(m_, basis_[leave].second)], leave);
    basis_[leave] = {i, j};
    flow_[leave] = theta;
    adj_[ni].push_back(leave);
    adj_[nj].push_back(leave);
    const int u = leave_on_a ? ni : nj, v = leave_on_a ? nj : ni;
    parent_node_[u] = v;
    parent_edge_[u] = leave;
    depth_[u] = depth_[v] + 1;
    pot_[u] = cost(i, j) - pot_[v];
    relabel_subtree(u);
    return theta;
  }
};

inline void check_cost(const Eigen::MatrixXd& cost, std::size_t m, std::size_t n) {
  if (static_cast<std::size_t>(cost.rows()) != m || static_cast<std::size_t>(cost.cols()) != n)
    throw InputError("transport: cost matrix is " + std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()) + ", expected " + std::to_string(m) + "x" + std::to_string(n));
  if (!cost.allFinite()) throw InputError("transport: cost entries must be finite");
}

inline void check_instance(const TransportInstance& inst) {
  const auto m = inst.supplies.size(), n = inst.demands.size();
  if (m == 0 || n == 0) throw InputError("transport: empty supplies or demands");
  double s = 0.0, d = 0.0;
  for (double x : inst.supplies) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InputError("transport: supplies must be finite and non-negative");
    s += x;
  }
  for (double x : inst.demands) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InputError("transport: demands must be finite and non-negative");
    d += x;
  }
  if (std::abs(s - d) > 1e-9 * std::max({1.0, s, d}))
    throw InputError("transport: unbalanced instance (supply " + std::to_string(s) + " vs demand " +
                     std::to_string(d) + ")");
  check_cost(inst.cost, m, n);
}

} // namespace detail

/// Exact optimum of a balanced transportation problem (transportation
/// simplex on the bipartite spanning-tree basis; block pricing with a
/// fall back to Bland's rule on runs of degenerate pivots).
inline TransportPlan solve_exact(const TransportInstance& inst, const SolveOptions& opts = {}) {
  detail::check_instance(inst);
  detail::TransportSimplex simplex;
  simplex.load(inst.supplies, inst.demands, inst.cost, opts);
  simplex.solve();
  return simplex.plan();
}

/// Solves the same marginals under each cost matrix in turn, every solve
/// warm-started from the previous optimal basis. `inst.cost` is ignored in
/// favour of `costs`.
inline std::vector<TransportPlan> solve_sequence(const TransportInstance& inst, const std::vector<Eigen::MatrixXd>& costs,
                                                 const SolveOptions& opts = {}) {
  std::vector<TransportPlan> plans;
  if (costs.empty()) return plans;
  TransportInstance first{inst.supplies, inst.demands, costs.front()};
  detail::check_instance(first);
  for (const auto& c : costs) detail::check_cost(c, inst.supplies.size(), inst.demands.size());
  detail::TransportSimplex simplex;
  simplex.load(first.supplies, first.demands, first.cost, opts);
  simplex.solve();
  plans.push_back(simplex.plan());
  for (std::size_t k = 1; k < costs.size(); ++k) {
    simplex.resolve(costs[k]);
    plans.push_back(simplex.plan());
  }
  return plans;
}

} // namespace nasbot
