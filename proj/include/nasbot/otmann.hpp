#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "nasbot/architecture.hpp"
#include "nasbot/format.hpp"
#include "nasbot/hash.hpp"
#include "nasbot/parallel.hpp"
#include "nasbot/transport.hpp"

namespace nasbot {

// ---------------------------------------------------------------------------
// Label penalty

/// Unit cost of moving mass between two labels. Infinite entries are kept
/// as +inf and replaced by `big` on lookup, so they never reach the solver.
struct LabelPenalty {
  ArchClass cls = ArchClass::cnn;
  std::array<std::array<double, kNumLabels>, kNumLabels> raw{};
  double big = 10.0;

  double operator()(LayerLabel a, LayerLabel b) const {
    const double v = raw[label_index(a)][label_index(b)];
    return std::isinf(v) ? big : v;
  }

  void set(LayerLabel a, LayerLabel b, double v) {
    raw[label_index(a)][label_index(b)] = v;
    raw[label_index(b)][label_index(a)] = v;
  }
};

inline LabelPenalty default_penalty(ArchClass cls, double big = 10.0) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  LabelPenalty p;
  p.cls = cls;
  p.big = big;
  for (auto& row : p.raw) row.fill(inf);
  for (LayerLabel l : kAllLabels) p.raw[label_index(l)][label_index(l)] = 0.0;

  if (cls == ArchClass::cnn) {
    using L = LayerLabel;
    const std::array<L, 3> conv = {L::conv3, L::conv5, L::conv7};
    const std::array<L, 3> res = {L::res3, L::res5, L::res7};
    const double conv_cost[3][3] = {{0.0, 0.2, 0.3}, {0.2, 0.0, 0.2}, {0.3, 0.2, 0.0}};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        p.raw[label_index(conv[a])][label_index(conv[b])] = conv_cost[a][b];
        p.raw[label_index(res[a])][label_index(res[b])] = conv_cost[a][b];
        // res-k vs conv-j: mix of the conv cost and the unit non-assignment cost
        const double mixed = 0.9 * conv_cost[a][b] + 0.1;
        p.raw[label_index(res[a])][label_index(conv[b])] = mixed;
        p.raw[label_index(conv[b])][label_index(res[a])] = mixed;
      }
    p.set(L::max_pool, L::avg_pool, 0.25);
  } else {
    for (LayerLabel a : kMlpProcessingLabels)
      for (LayerLabel b : kMlpProcessingLabels) {
        if (a == b) continue;
        const bool same_group = (is_rectifier(a) && is_rectifier(b)) || (is_sigmoidal(a) && is_sigmoidal(b));
        p.raw[label_index(a)][label_index(b)] = same_group ? 0.1 : 0.25;
      }
  }
  return p;
}

/// Returns indices (x, y, z) with M(x,z) > M(x,y) + M(y,z), if any.
inline std::optional<std::array<int, 3>> check_triangle(const Eigen::MatrixXd& m, double slack = 1e-12) {
  const int n = static_cast<int>(m.rows());
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z)
        if (m(x, z) > m(x, y) + m(y, z) + slack) return std::array<int, 3>{x, y, z};
  return std::nullopt;
}

/// Penalty restricted to the class's labels, with BIG substituted.
inline Eigen::MatrixXd penalty_matrix(const LabelPenalty& p) {
  auto labels = class_labels(p.cls);
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) m(a, b) = p(labels[a], labels[b]);
  return m;
}

inline std::optional<std::array<LayerLabel, 3>> check_triangle(const LabelPenalty& p) {
  auto labels = class_labels(p.cls);
  if (auto v = check_triangle(penalty_matrix(p)))
    return std::array<LayerLabel, 3>{labels[(*v)[0]], labels[(*v)[1]], labels[(*v)[2]]};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Per-architecture features

inline constexpr int kPathStats = 6; // {sp, lp, rw} x {ip, op}

/// Everything the distance needs from one network, computed once.
struct ArchFeatures {
  ArchClass cls = ArchClass::cnn;
  std::vector<LayerLabel> labels;
  std::vector<double> masses;
  double total_mass = 0.0;
  /// Row per layer; column g*6 + s holds path statistic s under label group g.
  Eigen::MatrixXd paths;
};

inline ArchFeatures compute_features(const Architecture& arch, const MassParams& mass_params = {}) {
  Graph g(arch);
  auto order = detail::kahn_order(g);
  if (order.empty()) throw InputError("otmann: architecture has a cycle");
  ArchFeatures f;
  f.cls = arch.cls;
  for (const Layer& l : arch.layers) f.labels.push_back(l.label);
  f.masses = layer_masses(arch, g, order, mass_params);
  for (double m : f.masses) f.total_mass += m;
  auto groups = label_groups(arch.cls);
  f.paths.resize(static_cast<Eigen::Index>(arch.size()), static_cast<Eigen::Index>(groups.size()) * kPathStats);
  int col = 0;
  for (LabelGroup grp : groups)
    for (PathKind kind : kPathKinds)
      for (PathAnchor anchor : kPathAnchors) {
        auto delta = path_lengths(arch, g, order, {kind, anchor, grp});
        for (std::size_t u = 0; u < delta.size(); ++u) f.paths(static_cast<Eigen::Index>(u), col) = delta[u];
        ++col;
      }
  return f;
}

inline void fill_mismatch_cost(const ArchFeatures& a, const ArchFeatures& b, const LabelPenalty& penalty,
                               Eigen::MatrixXd& c) {
  c.resize(static_cast<Eigen::Index>(a.labels.size()), static_cast<Eigen::Index>(b.labels.size()));
  for (std::size_t j = 0; j < b.labels.size(); ++j)
    for (std::size_t i = 0; i < a.labels.size(); ++i)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = penalty(a.labels[i], b.labels[j]);
}

inline Eigen::MatrixXd mismatch_cost_matrix(const ArchFeatures& a, const ArchFeatures& b, const LabelPenalty& penalty) {
  Eigen::MatrixXd c;
  fill_mismatch_cost(a, b, penalty, c);
  return c;
}

/// Mean over label groups of the averaged six path-length differences.
inline void fill_structural_cost(const ArchFeatures& a, const ArchFeatures& b, Eigen::MatrixXd& c) {
  const Eigen::Index n1 = a.paths.rows(), n2 = b.paths.rows(), k = a.paths.cols();
  c.setZero(n1, n2);
  // Column by column so the inner loop runs over contiguous layers.
  for (Eigen::Index j = 0; j < n2; ++j) {
    double* cj = c.data() + j * n1;
    for (Eigen::Index t = 0; t < k; ++t) {
      const double* at = a.paths.data() + t * n1;
      const double bjt = b.paths(j, t);
      for (Eigen::Index i = 0; i < n1; ++i) cj[i] += std::abs(at[i] - bjt);
    }
  }
  c *= 1.0 / static_cast<double>(k);
}

inline Eigen::MatrixXd structural_cost_matrix(const ArchFeatures& a, const ArchFeatures& b) {
  Eigen::MatrixXd c;
  fill_structural_cost(a, b, c);
  return c;
}

inline void require_same_class(ArchClass a, ArchClass b) {
  if (a != b)
    throw SemanticError("otmann: cannot compare a " + std::string(class_name(a)) + " with a " +
                        std::string(class_name(b)));
}

inline Eigen::MatrixXd mismatch_cost_matrix(const Architecture& g1, const Architecture& g2,
                                            const LabelPenalty& penalty) {
  require_same_class(g1.cls, g2.cls);
  return mismatch_cost_matrix(compute_features(g1), compute_features(g2), penalty);
}

inline Eigen::MatrixXd structural_cost_matrix(const Architecture& g1, const Architecture& g2) {
  require_same_class(g1.cls, g2.cls);
  return structural_cost_matrix(compute_features(g1), compute_features(g2));
}

// ---------------------------------------------------------------------------
// Distance

struct DistanceParams {
  std::vector<double> nu_grid{0.1, 0.2, 0.4, 0.8};
  MassParams mass;
  LabelPenalty penalty;
  ArchClass cls = ArchClass::cnn;
  /// Skip pricing cells whose augmented cost is >= 2 (never optimal, since
  /// unassigning both ends costs exactly 2).
  bool prune = true;

  static DistanceParams defaults(ArchClass cls) {
    DistanceParams p;
    p.cls = cls;
    p.penalty = default_penalty(cls);
    return p;
  }
};

struct DistanceResult {
  double d = 0.0;
  TransportPlan plan;
  TransportInstance instance;
};

struct DistanceProfile {
  std::vector<double> d;
  std::vector<double> d_bar;
  std::string hash_a, hash_b;
};

/// The augmented transport program: layer masses plus a non-assignment
/// node on each side carrying the other network's total mass.
inline TransportInstance augmented_instance(const ArchFeatures& a, const ArchFeatures& b,
                                            const Eigen::MatrixXd& label_cost, const Eigen::MatrixXd& struct_cost,
                                            double nu) {
  const Eigen::Index n1 = label_cost.rows(), n2 = label_cost.cols();
  TransportInstance inst;
  inst.supplies = a.masses;
  inst.supplies.push_back(b.total_mass);
  inst.demands = b.masses;
  inst.demands.push_back(a.total_mass);
  inst.cost.resize(n1 + 1, n2 + 1);
  inst.cost.topLeftCorner(n1, n2) = label_cost + nu * struct_cost;
  inst.cost.col(n2).setOnes();
  inst.cost.row(n1).setOnes();
  inst.cost(n1, n2) = 0.0;
  return inst;
}

namespace detail {

inline void check_nu(double nu) {
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw InputError("otmann: nu must be finite and non-negative");
}

inline void check_params(const DistanceParams& params) {
  if (params.nu_grid.empty()) throw InputError("otmann: nu grid is empty");
  for (double nu : params.nu_grid)
    if (!(nu > 0.0)) throw InputError("otmann: nu grid entries must be positive");
  if (auto bad = check_triangle(params.penalty))
    throw SemanticError("otmann: label penalty violates the triangle inequality at (" +
                        std::string(label_name((*bad)[0])) + ", " + std::string(label_name((*bad)[1])) + ", " +
                        std::string(label_name((*bad)[2])) + ")");
}

struct ProfileWorkspace {
  Eigen::MatrixXd label, structure, cost;
  std::vector<double> supplies, demands;
  TransportSimplex simplex;
};

inline DistanceProfile profile_from_features(const ArchFeatures& a, const ArchFeatures& b,
                                             const DistanceParams& params) {
  thread_local ProfileWorkspace ws;
  const Eigen::Index n1 = static_cast<Eigen::Index>(a.labels.size()), n2 = static_cast<Eigen::Index>(b.labels.size());
  fill_mismatch_cost(a, b, params.penalty, ws.label);
  fill_structural_cost(a, b, ws.structure);
  ws.supplies.assign(a.masses.begin(), a.masses.end());
  ws.supplies.push_back(b.total_mass);
  ws.demands.assign(b.masses.begin(), b.masses.end());
  ws.demands.push_back(a.total_mass);
  ws.cost.resize(n1 + 1, n2 + 1);
  ws.cost.col(n2).setOnes();
  ws.cost.row(n1).setOnes();
  ws.cost(n1, n2) = 0.0;
  SolveOptions opts;
  if (params.prune) opts.entry_cutoff = 2.0;
  ws.simplex.load(ws.supplies, ws.demands, ws.cost, opts);

  DistanceProfile prof;
  prof.d.reserve(params.nu_grid.size());
  prof.d_bar.reserve(params.nu_grid.size());
  const double norm = a.total_mass + b.total_mass;
  for (std::size_t g = 0; g < params.nu_grid.size(); ++g) {
    ws.cost.topLeftCorner(n1, n2) = ws.label + params.nu_grid[g] * ws.structure;
    const double d = g == 0 ? ws.simplex.solve() : ws.simplex.resolve(ws.cost);
    prof.d.push_back(d);
    prof.d_bar.push_back(norm > 0.0 ? d / norm : 0.0);
  }
  return prof;
}

} // namespace detail

/// OTMANN distance at one structural weight nu, with the optimal coupling.
inline DistanceResult distance(const Architecture& g1, const Architecture& g2, double nu,
                               const DistanceParams& params) {
  require_same_class(g1.cls, g2.cls);
  require_same_class(g1.cls, params.penalty.cls);
  detail::check_nu(nu);
  if (auto bad = check_triangle(params.penalty))
    throw SemanticError("otmann: label penalty violates the triangle inequality at (" +
                        std::string(label_name((*bad)[0])) + ", " + std::string(label_name((*bad)[1])) + ", " +
                        std::string(label_name((*bad)[2])) + ")");
  const auto a = compute_features(g1, params.mass);
  const auto b = compute_features(g2, params.mass);
  DistanceResult r;
  r.instance = augmented_instance(a, b, mismatch_cost_matrix(a, b, params.penalty), structural_cost_matrix(a, b), nu);
  SolveOptions opts;
  if (params.prune) opts.entry_cutoff = 2.0;
  r.plan = solve_exact(r.instance, opts);
  r.d = r.plan.objective;
  return r;
}

inline DistanceProfile distance_profile(const Architecture& g1, const Architecture& g2,
                                        const DistanceParams& params) {
  require_same_class(g1.cls, g2.cls);
  require_same_class(g1.cls, params.penalty.cls);
  detail::check_params(params);
  auto prof = detail::profile_from_features(compute_features(g1, params.mass), compute_features(g2, params.mass),
                                            params);
  prof.hash_a = structural_hash(g1);
  prof.hash_b = structural_hash(g2);
  return prof;
}

// ---------------------------------------------------------------------------
// Cached engine

/// An architecture together with its hash and distance features.
struct PreparedArch {
  Architecture arch;
  std::string hash;
  ArchFeatures features;
};

using PreparedPtr = std::shared_ptr<const PreparedArch>;

/// Memoises features per architecture and profiles per unordered pair,
/// keyed by structural hash. Safe for concurrent use; inserted values are
/// idempotent so racing writers are harmless.
class DistanceEngine {
public:
  explicit DistanceEngine(DistanceParams params) : params_(std::move(params)) { detail::check_params(params_); }

  const DistanceParams& params() const { return params_; }

  /// With `store` false the result is returned without being cached (for
  /// one-off candidates that would otherwise grow the cache without bound).
  PreparedPtr prepare(const Architecture& arch, bool store = true) {
    auto hash = structural_hash(arch);
    {
      std::shared_lock lock(mutex_);
      if (auto it = prepared_.find(hash); it != prepared_.end()) return it->second;
    }
    require_same_class(arch.cls, params_.cls);
    auto p = std::make_shared<PreparedArch>(PreparedArch{arch, hash, compute_features(arch, params_.mass)});
    if (!store) return p;
    std::unique_lock lock(mutex_);
    return prepared_.emplace(hash, std::move(p)).first->second;
  }

  DistanceProfile profile(const PreparedArch& a, const PreparedArch& b, bool store = true) {
    if (a.hash == b.hash) {
      const auto g = params_.nu_grid.size();
      return {std::vector<double>(g, 0.0), std::vector<double>(g, 0.0), a.hash, b.hash};
    }
    const bool swap = b.hash < a.hash;
    const std::string key = swap ? b.hash + a.hash : a.hash + b.hash;
    {
      std::shared_lock lock(mutex_);
      if (auto it = profiles_.find(key); it != profiles_.end()) {
        auto prof = it->second;
        prof.hash_a = a.hash;
        prof.hash_b = b.hash;
        return prof;
      }
    }
    auto prof = swap ? detail::profile_from_features(b.features, a.features, params_)
                     : detail::profile_from_features(a.features, b.features, params_);
    if (store) {
      std::unique_lock lock(mutex_);
      profiles_.emplace(key, prof);
    }
    prof.hash_a = a.hash;
    prof.hash_b = b.hash;
    return prof;
  }

  std::size_t cached_profiles() const {
    std::shared_lock lock(mutex_);
    return profiles_.size();
  }

private:
  DistanceParams params_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, PreparedPtr> prepared_;
  std::unordered_map<std::string, DistanceProfile> profiles_;
};

/// Pairwise d and d-bar matrices, one per nu in the grid.
struct PairwiseProfiles {
  std::vector<Eigen::MatrixXd> d;
  std::vector<Eigen::MatrixXd> d_bar;

  std::size_t size() const { return d.empty() ? 0 : static_cast<std::size_t>(d.front().rows()); }
  std::size_t grid() const { return d.size(); }

  DistanceProfile at(std::size_t i, std::size_t j) const {
    DistanceProfile p;
    for (std::size_t g = 0; g < d.size(); ++g) {
      p.d.push_back(d[g](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      p.d_bar.push_back(d_bar[g](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    return p;
  }
};

inline PairwiseProfiles pairwise_matrix(DistanceEngine& engine, const std::vector<PreparedPtr>& archs,
                                        unsigned threads = default_threads()) {
  const auto n = static_cast<Eigen::Index>(archs.size());
  const auto grid = engine.params().nu_grid.size();
  PairwiseProfiles out;
  out.d.assign(grid, Eigen::MatrixXd::Zero(n, n));
  out.d_bar.assign(grid, Eigen::MatrixXd::Zero(n, n));
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) cells.emplace_back(i, j);
  parallel_for(
      cells.size(),
      [&](std::size_t k) {
        auto [i, j] = cells[k];
        auto prof = engine.profile(*archs[i], *archs[j]);
        for (std::size_t g = 0; g < grid; ++g) {
          out.d[g](i, j) = out.d[g](j, i) = prof.d[g];
          out.d_bar[g](i, j) = out.d_bar[g](j, i) = prof.d_bar[g];
        }
      },
      threads);
  return out;
}

inline PairwiseProfiles pairwise_matrix(const std::vector<Architecture>& archs, const DistanceParams& params,
                                        unsigned threads = default_threads()) {
  for (const auto& a : archs) require_same_class(a.cls, params.cls);
  DistanceEngine engine(params);
  std::vector<PreparedPtr> prepared;
  for (const auto& a : archs) prepared.push_back(engine.prepare(a));
  return pairwise_matrix(engine, prepared, threads);
}

/// One CSV per (nu, normalised?) pair, named d_nu<nu>.csv and dbar_nu<nu>.csv.
/// The first row and column hold `names`; the corner cell is empty.
/// Returns the written paths.
inline std::vector<std::filesystem::path> write_distance_csvs(const std::filesystem::path& dir,
                                                              const std::vector<std::string>& names,
                                                              const PairwiseProfiles& prof,
                                                              const std::vector<double>& nu_grid) {
  if (names.size() != prof.size()) throw InputError("distance csv: name count does not match matrix size");
  if (nu_grid.size() != prof.grid()) throw InputError("distance csv: grid size does not match");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& stem, const Eigen::MatrixXd& m, double nu) {
    const auto path = dir / (stem + "_nu" + format_number(nu) + ".csv");
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    for (const auto& n : names) f << "," << csv_field(n);
    f << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      f << csv_field(names[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < m.cols(); ++j) f << "," << format_number(m(i, j));
      f << "\n";
    }
    written.push_back(path);
  };
  for (std::size_t g = 0; g < nu_grid.size(); ++g) {
    emit("d", prof.d[g], nu_grid[g]);
    emit("dbar", prof.d_bar[g], nu_grid[g]);
  }
  return written;
}

} // namespace nasbot
