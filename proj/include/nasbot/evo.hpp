#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "nasbot/architecture.hpp"
#include "nasbot/errors.hpp"
#include "nasbot/hash.hpp"

namespace nasbot {

enum class ModifierKind { dec_single, dec_en_masse, inc_single, inc_en_masse, dup_path, remove_layer, skip, swap_label, wedge };

inline constexpr std::array<ModifierKind, 9> kAllModifiers = {
    ModifierKind::dec_single, ModifierKind::dec_en_masse, ModifierKind::inc_single,
    ModifierKind::inc_en_masse, ModifierKind::dup_path,   ModifierKind::remove_layer,
    ModifierKind::skip,       ModifierKind::swap_label,   ModifierKind::wedge};

constexpr std::string_view modifier_name(ModifierKind k) {
  switch (k) {
  case ModifierKind::dec_single: return "dec_single";
  case ModifierKind::dec_en_masse: return "dec_en_masse";
  case ModifierKind::inc_single: return "inc_single";
  case ModifierKind::inc_en_masse: return "inc_en_masse";
  case ModifierKind::dup_path: return "dup_path";
  case ModifierKind::remove_layer: return "remove_layer";
  case ModifierKind::skip: return "skip";
  case ModifierKind::swap_label: return "swap_label";
  case ModifierKind::wedge: return "wedge";
  }
  return "?";
}

constexpr bool changes_units_only(ModifierKind k) {
  return k == ModifierKind::dec_single || k == ModifierKind::dec_en_masse || k == ModifierKind::inc_single ||
         k == ModifierKind::inc_en_masse;
}

enum class ModifierSubset { all, units_only, structure_only };

inline std::optional<ModifierSubset> parse_modifier_subset(std::string_view s) {
  if (s == "all") return ModifierSubset::all;
  if (s == "units") return ModifierSubset::units_only;
  if (s == "structure") return ModifierSubset::structure_only;
  return std::nullopt;
}

inline std::vector<ModifierKind> modifiers_in(ModifierSubset s) {
  std::vector<ModifierKind> out;
  for (ModifierKind k : kAllModifiers)
    if (s == ModifierSubset::all || (s == ModifierSubset::units_only) == changes_units_only(k)) out.push_back(k);
  return out;
}

struct MutationConfig {
  std::vector<double> step_probabilities{0.5, 0.25, 0.125, 0.075, 0.05};
  int max_attempts = 20;
  ModifierSubset subset = ModifierSubset::all;
  DomainLimits limits;

  void check() const {
    if (step_probabilities.empty()) throw InputError("mutation: step probabilities are empty");
    double s = 0.0;
    for (double p : step_probabilities) {
      if (!(p > 0.0)) throw InputError("mutation: step probabilities must be positive");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InputError("mutation: step probabilities must sum to 1");
    if (max_attempts < 1) throw InputError("mutation: max_attempts must be >= 1");
  }
};

/// Either a validated architecture or the reason the modifier was refused.
struct ModifierResult {
  std::optional<Architecture> arch;
  std::string reason;

  explicit operator bool() const { return arch.has_value(); }

  static ModifierResult reject(std::string why) { return {std::nullopt, std::move(why)}; }
};

// ---------------------------------------------------------------------------
// Deterministic building blocks (choices made by the caller)

inline int unit_delta(int units) { return (units + 7) / 8; }

inline int adjust_units(int units, int sign, const DomainLimits& lim) {
  return std::clamp(units + sign * unit_delta(units), lim.min_units, lim.max_units);
}

/// Validates `arch` and wraps it, or rejects with the first violation.
inline ModifierResult finish(Architecture arch, const DomainLimits& lim) {
  auto rep = validate(arch, lim);
  if (!rep.ok()) return ModifierResult::reject(rep.violations.front().message);
  return {std::move(arch), {}};
}

/// Scales the units of `layers` by +-1/8 (sign = +1 or -1).
inline ModifierResult change_units(const Architecture& arch, const std::vector<int>& layers, int sign,
                                   const DomainLimits& lim) {
  Architecture out = arch;
  bool changed = false;
  for (int u : layers) {
    auto& l = out.layers.at(static_cast<std::size_t>(u));
    if (!l.units) return ModifierResult::reject("layer " + std::to_string(u) + " has no units");
    const int next = adjust_units(*l.units, sign, lim);
    changed = changed || next != *l.units;
    l.units = next;
  }
  if (!changed) return ModifierResult::reject(sign > 0 ? "units already at maximum" : "units already at minimum");
  return finish(std::move(out), lim);
}

/// Duplicates the interior of `path` (u1, ..., uk) as a parallel branch
/// from u1 to uk.
inline ModifierResult duplicate_path(const Architecture& arch, const std::vector<int>& path,
                                     const DomainLimits& lim) {
  if (path.size() < 3) return ModifierResult::reject("path has no interior layer");
  Architecture out = arch;
  int prev = path.front();
  for (std::size_t i = 1; i + 1 < path.size(); ++i) {
    Layer copy = arch.layers.at(static_cast<std::size_t>(path[i]));
    copy.id = static_cast<int>(out.layers.size());
    out.layers.push_back(copy);
    out.edges.emplace_back(prev, copy.id);
    prev = copy.id;
  }
  out.edges.emplace_back(prev, path.back());
  return finish(std::move(out), lim);
}

/// Removes layer `u` and renumbers the layers after it.
inline Architecture erase_layer(const Architecture& arch, int u) {
  Architecture out;
  out.cls = arch.cls;
  out.input_channels = arch.input_channels;
  for (const Layer& l : arch.layers) {
    if (l.id == u) continue;
    Layer c = l;
    if (c.id > u) --c.id;
    out.layers.push_back(c);
  }
  auto shift = [u](int v) { return v > u ? v - 1 : v; };
  for (auto [a, b] : arch.edges)
    if (a != u && b != u) out.edges.emplace_back(shift(a), shift(b));
  return out;
}

/// Removes `u`. A parent left without children gets an edge to one of u's
/// children, and a child left without parents gets an edge from one of u's
/// parents; `pick(n)` chooses which (an index below n).
inline ModifierResult remove_layer(const Architecture& arch, int u, const std::function<int(int)>& pick,
                                   const DomainLimits& lim) {
  const Layer& l = arch.layers.at(static_cast<std::size_t>(u));
  if (l.label == LayerLabel::ip || l.label == LayerLabel::op) return ModifierResult::reject("cannot remove ip/op");
  Graph g(arch);
  const auto& parents = g.parents[u];
  const auto& children = g.children[u];
  Architecture tmp = arch;
  auto has_edge = [&](int a, int b) {
    return std::find(tmp.edges.begin(), tmp.edges.end(), Edge{a, b}) != tmp.edges.end();
  };
  if (!children.empty())
    for (int p : parents)
      if (g.children[p].size() == 1) {
        const int c = children[static_cast<std::size_t>(pick(static_cast<int>(children.size())))];
        if (!has_edge(p, c)) tmp.edges.emplace_back(p, c);
      }
  if (!parents.empty())
    for (int c : children)
      if (g.parents[c].size() == 1) {
        const int p = parents[static_cast<std::size_t>(pick(static_cast<int>(parents.size())))];
        if (!has_edge(p, c)) tmp.edges.emplace_back(p, c);
      }
  return finish(erase_layer(tmp, u), lim);
}

/// Adds edge (u, v). In a CNN, when u's output image is larger than what v
/// currently receives, a chain of stride-2 avg-pool layers is inserted so
/// the sizes agree.
inline ModifierResult add_skip(const Architecture& arch, int u, int v, const DomainLimits& lim) {
  const int n = static_cast<int>(arch.size());
  if (u < 0 || v < 0 || u >= n || v >= n || u == v) return ModifierResult::reject("bad skip endpoints");
  if (std::find(arch.edges.begin(), arch.edges.end(), Edge{u, v}) != arch.edges.end())
    return ModifierResult::reject("edge already present");
  Architecture out = arch;
  if (arch.cls == ArchClass::cnn) {
    Graph g(arch);
    auto order = detail::kahn_order(g);
    if (order.empty()) return ModifierResult::reject("graph has a cycle");
    auto sizes = image_sizes(arch, g, order, lim.input_size).sizes;
    int from = sizes[u];
    int target = from;
    if (!g.parents[v].empty()) target = sizes[g.parents[v].front()];
    if (from < target) return ModifierResult::reject("skip source image smaller than target");
    int prev = u;
    while (from > target) {
      Layer pool{static_cast<int>(out.layers.size()), LayerLabel::avg_pool, std::nullopt, std::nullopt};
      out.layers.push_back(pool);
      out.edges.emplace_back(prev, pool.id);
      prev = pool.id;
      from = (from + 1) / 2;
    }
    if (from != target) return ModifierResult::reject("skip cannot equalise image sizes");
    out.edges.emplace_back(prev, v);
  } else {
    out.edges.emplace_back(u, v);
  }
  return finish(std::move(out), lim);
}

/// Relabels processing layer `u`. Units survive when both labels use them;
/// a pooling layer turned into conv/res takes its incoming channel count
/// and stride 2 (pooling halves the image, so the size is preserved).
inline ModifierResult swap_label(const Architecture& arch, int u, LayerLabel to, const DomainLimits& lim) {
  Architecture out = arch;
  Layer& l = out.layers.at(static_cast<std::size_t>(u));
  if (!is_processing(l.label)) return ModifierResult::reject("only processing layers change label");
  if (l.label == to) return ModifierResult::reject("label unchanged");
  const LayerLabel from = l.label;
  l.label = to;
  if (has_units(to) && !l.units) {
    Graph g(arch);
    auto order = detail::kahn_order(g);
    if (order.empty()) return ModifierResult::reject("graph has a cycle");
    double in = 0.0;
    for (int p : g.parents[u]) in += outgoing_units(arch, g, order)[p];
    l.units = std::clamp(static_cast<int>(in), lim.min_units, lim.max_units);
  }
  if (!has_units(to)) l.units.reset();
  if (has_stride(to)) {
    if (!l.stride) l.stride = is_pool(from) ? 2 : 1;
  } else {
    l.stride.reset();
  }
  return finish(std::move(out), lim);
}

/// Replaces edge (u, v) with u -> w -> v for a new layer w labelled `label`.
/// Its units are the average of the endpoints' units (the one available
/// if only one has units, else u's outgoing channel count).
inline ModifierResult wedge(const Architecture& arch, Edge e, LayerLabel label, const DomainLimits& lim) {
  auto it = std::find(arch.edges.begin(), arch.edges.end(), e);
  if (it == arch.edges.end()) return ModifierResult::reject("edge not present");
  Architecture out = arch;
  out.edges.erase(out.edges.begin() + (it - arch.edges.begin()));
  Layer w{static_cast<int>(out.layers.size()), label, std::nullopt, std::nullopt};
  if (has_units(label)) {
    const auto& lu = arch.layers[static_cast<std::size_t>(e.first)];
    const auto& lv = arch.layers[static_cast<std::size_t>(e.second)];
    int units;
    if (lu.units && lv.units)
      units = (*lu.units + *lv.units) / 2;
    else if (lu.units || lv.units)
      units = lu.units ? *lu.units : *lv.units;
    else {
      Graph g(arch);
      auto order = detail::kahn_order(g);
      if (order.empty()) return ModifierResult::reject("graph has a cycle");
      units = static_cast<int>(outgoing_units(arch, g, order)[static_cast<std::size_t>(e.first)]);
    }
    w.units = std::clamp(units, lim.min_units, lim.max_units);
  }
  if (has_stride(label)) w.stride = 1;
  out.layers.push_back(w);
  out.edges.emplace_back(e.first, w.id);
  out.edges.emplace_back(w.id, e.second);
  return finish(std::move(out), lim);
}

// ---------------------------------------------------------------------------
// Random modifiers

namespace detail {

template <class Rng>
int uniform_index(Rng& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

template <class T, class Rng>
const T& choose(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(uniform_index(rng, v.size()))];
}

inline std::vector<int> unit_layers(const Architecture& arch) {
  std::vector<int> out;
  for (const Layer& l : arch.layers)
    if (is_processing(l.label) && l.units) out.push_back(l.id);
  return out;
}

} // namespace detail

/// Number of layers the en-masse modifiers touch in a network of n layers.
inline int en_masse_count(int n) {
  if (n <= 4) return (n + 1) / 2;
  if (n <= 8) return (n + 3) / 4;
  return (n + 7) / 8;
}

template <class Rng>
ModifierResult apply_modifier(const Architecture& arch, ModifierKind kind, Rng& rng, const DomainLimits& lim = {}) {
  using detail::choose;
  using detail::uniform_index;
  switch (kind) {
  case ModifierKind::dec_single:
  case ModifierKind::inc_single: {
    const int sign = kind == ModifierKind::inc_single ? 1 : -1;
    std::vector<int> eligible;
    for (int u : detail::unit_layers(arch))
      if (adjust_units(*arch.layers[u].units, sign, lim) != *arch.layers[u].units) eligible.push_back(u);
    if (eligible.empty()) return ModifierResult::reject("no layer can change its units");
    return change_units(arch, {choose(eligible, rng)}, sign, lim);
  }
  case ModifierKind::dec_en_masse:
  case ModifierKind::inc_en_masse: {
    const int sign = kind == ModifierKind::inc_en_masse ? 1 : -1;
    auto eligible = detail::unit_layers(arch);
    if (eligible.empty()) return ModifierResult::reject("no layer has units");
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(en_masse_count(static_cast<int>(arch.size()))),
                                         eligible.size());
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(k);
    std::sort(eligible.begin(), eligible.end());
    return change_units(arch, eligible, sign, lim);
  }
  case ModifierKind::dup_path: {
    Graph g(arch);
    std::vector<int> starts;
    for (const Layer& l : arch.layers)
      if (!g.children[l.id].empty()) starts.push_back(l.id);
    if (starts.empty()) return ModifierResult::reject("no path to duplicate");
    std::vector<int> path{choose(starts, rng)};
    std::bernoulli_distribution stop(0.5);
    while (true) {
      const auto& next = g.children[path.back()];
      if (next.empty()) break;
      path.push_back(choose(next, rng));
      if (path.size() >= 3 && stop(rng)) break;
    }
    return duplicate_path(arch, path, lim);
  }
  case ModifierKind::remove_layer: {
    std::vector<int> eligible;
    for (const Layer& l : arch.layers)
      if (l.label != LayerLabel::ip && l.label != LayerLabel::op) eligible.push_back(l.id);
    if (eligible.empty()) return ModifierResult::reject("no removable layer");
    return remove_layer(arch, choose(eligible, rng), [&](int n) { return uniform_index(rng, static_cast<std::size_t>(n)); },
                        lim);
  }
  case ModifierKind::skip: {
    Graph g(arch);
    auto order = detail::kahn_order(g);
    if (order.empty()) return ModifierResult::reject("graph has a cycle");
    std::vector<Edge> pairs;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int u = order[i];
      if (arch.layers[u].label == LayerLabel::op || is_decision(arch.layers[u].label)) continue;
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const int v = order[j];
        if (arch.layers[v].label == LayerLabel::op) continue;
        if (std::find(g.children[u].begin(), g.children[u].end(), v) == g.children[u].end()) pairs.emplace_back(u, v);
      }
    }
    if (pairs.empty()) return ModifierResult::reject("all layer pairs already connected");
    auto [u, v] = choose(pairs, rng);
    return add_skip(arch, u, v, lim);
  }
  case ModifierKind::swap_label: {
    auto eligible = processing_layers(arch);
    if (eligible.empty()) return ModifierResult::reject("no processing layer");
    const int u = choose(eligible, rng);
    std::vector<LayerLabel> labels;
    for (LayerLabel l : processing_labels(arch.cls))
      if (l != arch.layers[u].label) labels.push_back(l);
    return swap_label(arch, u, choose(labels, rng), lim);
  }
  case ModifierKind::wedge: {
    if (arch.edges.empty()) return ModifierResult::reject("no edge to split");
    const Edge e = choose(arch.edges, rng);
    std::vector<LayerLabel> labels(processing_labels(arch.cls).begin(), processing_labels(arch.cls).end());
    return wedge(arch, e, choose(labels, rng), lim);
  }
  }
  return ModifierResult::reject("unknown modifier");
}

// ---------------------------------------------------------------------------
// Compound mutation

template <class Rng>
int draw_step_count(const MutationConfig& cfg, Rng& rng) {
  std::discrete_distribution<int> d(cfg.step_probabilities.begin(), cfg.step_probabilities.end());
  return d(rng) + 1;
}

struct MutationResult {
  Architecture arch;
  int steps_drawn = 0;
  int steps_applied = 0;
};

/// Applies `steps` successful one-step modifiers, each drawn uniformly
/// from the configured subset and retried on rejection. Stops early if a
/// step exhausts its attempts.
template <class Rng>
MutationResult mutate_steps(const Architecture& arch, int steps, const MutationConfig& cfg, Rng& rng) {
  const auto kinds = modifiers_in(cfg.subset);
  MutationResult r{arch, steps, 0};
  for (int s = 0; s < steps; ++s) {
    bool done = false;
    for (int a = 0; a < cfg.max_attempts && !done; ++a) {
      auto res = apply_modifier(r.arch, detail::choose(kinds, rng), rng, cfg.limits);
      if (res) {
        r.arch = std::move(*res.arch);
        done = true;
      }
    }
    if (!done) break;
    ++r.steps_applied;
  }
  return r;
}

template <class Rng>
MutationResult mutate(const Architecture& arch, const MutationConfig& cfg, Rng& rng) {
  return mutate_steps(arch, draw_step_count(cfg, rng), cfg, rng);
}

// ---------------------------------------------------------------------------
// Evolutionary optimiser

/// Draws n indices with replacement, index i with probability proportional
/// to exp(values[i] / sigma), sigma being the sample standard deviation of
/// all values (uniform when sigma is 0).
template <class Rng>
std::vector<int> select_candidates(const std::vector<double>& values, int n, Rng& rng) {
  if (values.empty()) throw InputError("select_candidates: empty pool");
  std::vector<int> out;
  if (n <= 0) return out;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sigma = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  std::vector<double> w(values.size(), 1.0);
  if (sigma > 0.0) {
    const double top = *std::max_element(values.begin(), values.end());
    for (std::size_t i = 0; i < values.size(); ++i) w[i] = std::exp((values[i] - top) / sigma);
  }
  std::discrete_distribution<int> d(w.begin(), w.end());
  for (int i = 0; i < n; ++i) out.push_back(d(rng));
  return out;
}

/// Thrown when the objective fails; carries the architecture involved.
class EvaluationError : public ComputeError {
public:
  EvaluationError(Architecture a, const std::string& what) : ComputeError(what), arch(std::move(a)) {}
  Architecture arch;
};

struct EAResult {
  Architecture best;
  double best_value = 0.0;
  std::vector<std::pair<Architecture, double>> history;
};

struct EAOptions {
  /// Pick parents uniformly instead of by exp(g / sigma).
  bool uniform_selection = false;
  /// Re-mutations tried when a child repeats an architecture already seen.
  int duplicate_retries = 5;
};

using BatchObjective = std::function<std::vector<double>(const std::vector<Architecture>&)>;

/// Evaluates the initial pool, then repeatedly selects n_mut parents,
/// mutates each and evaluates the children, until total_evals evaluations
/// have been made.
template <class Rng>
EAResult ea_maximize(const BatchObjective& g, const std::vector<Architecture>& init_pool, int total_evals, int n_mut,
                     const MutationConfig& cfg, Rng& rng, const EAOptions& opts = {}) {
  if (init_pool.empty()) throw InputError("ea: initial pool is empty");
  if (total_evals < static_cast<int>(init_pool.size()))
    throw InputError("ea: total_evals smaller than the initial pool");
  if (n_mut < 1) throw InputError("ea: n_mut must be >= 1");
  EAResult r;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  auto record = [&](const std::vector<Architecture>& batch) {
    auto vals = g(batch);
    if (vals.size() != batch.size()) throw ComputeError("ea: objective returned the wrong number of values");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (r.history.empty() || vals[i] > r.best_value) {
        r.best = batch[i];
        r.best_value = vals[i];
      }
      r.history.emplace_back(batch[i], vals[i]);
      values.push_back(vals[i]);
    }
  };
  for (const auto& a : init_pool) seen.insert(structural_hash(a));
  record(init_pool);
  while (static_cast<int>(r.history.size()) < total_evals) {
    const int m = std::min(n_mut, total_evals - static_cast<int>(r.history.size()));
    std::vector<int> parents;
    if (opts.uniform_selection) {
      std::uniform_int_distribution<int> u(0, static_cast<int>(values.size()) - 1);
      for (int i = 0; i < m; ++i) parents.push_back(u(rng));
    } else {
      parents = select_candidates(values, m, rng);
    }
    std::vector<Architecture> children;
    for (int p : parents) {
      const Architecture& parent = r.history[static_cast<std::size_t>(p)].first;
      Architecture child = mutate(parent, cfg, rng).arch;
      for (int t = 0; t < opts.duplicate_retries && seen.count(structural_hash(child)); ++t)
        child = mutate(parent, cfg, rng).arch;
      seen.insert(structural_hash(child));
      children.push_back(std::move(child));
    }
    record(children);
  }
  return r;
}

/// Single-architecture objective; failures surface as EvaluationError.
template <class Rng>
EAResult ea_maximize(const std::function<double(const Architecture&)>& g, const std::vector<Architecture>& init_pool,
                     int total_evals, int n_mut, const MutationConfig& cfg, Rng& rng, const EAOptions& opts = {}) {
  BatchObjective batch = [&](const std::vector<Architecture>& archs) {
    std::vector<double> out;
    for (const auto& a : archs) {
      try {
        out.push_back(g(a));
      } catch (const EvaluationError&) {
        throw;
      } catch (const std::exception& e) {
        throw EvaluationError(a, std::string("objective failed: ") + e.what());
      }
    }
    return out;
  };
  return ea_maximize(batch, init_pool, total_evals, n_mut, cfg, rng, opts);
}

} // namespace nasbot
