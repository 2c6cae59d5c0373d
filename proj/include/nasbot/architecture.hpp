#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nasbot/errors.hpp"
#include "nasbot/labels.hpp"

namespace nasbot {

struct Layer {
  int id = 0;
  LayerLabel label = LayerLabel::ip;
  std::optional<int> units;
  std::optional<int> stride;

  bool operator==(const Layer&) const = default;
};

using Edge = std::pair<int, int>;

/// A network as a labelled DAG. Layer ids are dense: layers[i].id == i.
struct Architecture {
  ArchClass cls = ArchClass::cnn;
  int input_channels = 1;
  std::vector<Layer> layers;
  std::vector<Edge> edges;

  bool operator==(const Architecture&) const = default;

  std::size_t size() const { return layers.size(); }
};

/// Search-domain limits. Image size is the CNN input resolution used for
/// the concatenation-size rule.
struct DomainLimits {
  int max_layers = 60;
  double max_mass = 1e8;
  int max_in_degree = 5;
  int max_out_degree = 5;
  int max_edges = 200;
  int min_units = 8;
  int max_units = 1024;
  int input_size = 32;
};

struct MassParams {
  double zeta = 0.1;
  double fc_multiplier = 0.1;
};

/// Adjacency view over an architecture whose ids are dense.
struct Graph {
  std::vector<std::vector<int>> children;
  std::vector<std::vector<int>> parents;

  explicit Graph(const Architecture& arch) : children(arch.size()), parents(arch.size()) {
    for (auto [u, v] : arch.edges) {
      children[u].push_back(v);
      parents[v].push_back(u);
    }
  }

  std::size_t size() const { return children.size(); }
};

namespace detail {

// Kahn's algorithm, smallest ready id first. Empty result on a cycle.
inline std::vector<int> kahn_order(const Graph& g) {
  const int n = static_cast<int>(g.size());
  std::vector<int> indeg(n);
  for (int v = 0; v < n; ++v) indeg[v] = static_cast<int>(g.parents[v].size());
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.push(v);
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    int u = ready.top();
    ready.pop();
    order.push_back(u);
    for (int c : g.children[u])
      if (--indeg[c] == 0) ready.push(c);
  }
  if (static_cast<int>(order.size()) != n) order.clear();
  return order;
}

// One directed cycle, as a list of layer ids, found by DFS colouring.
inline std::vector<int> find_cycle(const Graph& g) {
  const int n = static_cast<int>(g.size());
  std::vector<int> colour(n, 0), parent(n, -1);
  for (int s = 0; s < n; ++s) {
    if (colour[s] != 0) continue;
    std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
    colour[s] = 1;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next < g.children[u].size()) {
        int c = g.children[u][next++];
        if (colour[c] == 0) {
          colour[c] = 1;
          parent[c] = u;
          stack.push_back({c, 0});
        } else if (colour[c] == 1) {
          std::vector<int> cycle{c};
          for (int w = u; w != c; w = parent[w]) cycle.push_back(w);
          std::reverse(cycle.begin() + 1, cycle.end());
          return cycle;
        }
      } else {
        colour[u] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

inline std::string join_ids(const std::vector<int>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? "," : "") << ids[i];
  return os.str();
}

} // namespace detail

inline int find_label(const Architecture& arch, LayerLabel label) {
  for (const auto& l : arch.layers)
    if (l.label == label) return l.id;
  return -1;
}

inline std::vector<int> decision_layers(const Architecture& arch) {
  std::vector<int> out;
  for (const auto& l : arch.layers)
    if (is_decision(l.label)) out.push_back(l.id);
  return out;
}

inline std::vector<int> processing_layers(const Architecture& arch) {
  std::vector<int> out;
  for (const auto& l : arch.layers)
    if (is_processing(l.label)) out.push_back(l.id);
  return out;
}

// ---------------------------------------------------------------------------
// Image sizes

struct ImageSizeIssue {
  enum class Kind { mismatch, degenerate };
  Kind kind = Kind::mismatch;
  int layer = -1;
  std::vector<std::pair<int, int>> parent_sizes; // (parent id, size)
};

struct ImageSizeReport {
  std::vector<int> sizes; // output image size of every layer
  std::vector<ImageSizeIssue> issues;
  bool ok() const { return issues.empty(); }
};

/// Output image size of every layer of a CNN. Stride-2 conv/res layers and
/// all pooling layers halve (rounding up); everything else passes the size
/// through. Parents that disagree, or halving an image that is already 1x1,
/// are reported.
inline ImageSizeReport image_sizes(const Architecture& arch, const Graph& g,
                                   const std::vector<int>& order, int input_size) {
  ImageSizeReport rep;
  rep.sizes.assign(arch.size(), 0);
  for (int u : order) {
    const Layer& layer = arch.layers[u];
    if (layer.label == LayerLabel::ip) {
      rep.sizes[u] = input_size;
      continue;
    }
    int in = 0;
    bool mismatch = false;
    for (int p : g.parents[u]) {
      if (in != 0 && rep.sizes[p] != in) mismatch = true;
      in = std::max(in, rep.sizes[p]);
    }
    if (mismatch) {
      ImageSizeIssue issue{ImageSizeIssue::Kind::mismatch, u, {}};
      for (int p : g.parents[u]) issue.parent_sizes.emplace_back(p, rep.sizes[p]);
      rep.issues.push_back(std::move(issue));
    }
    const bool halves = is_pool(layer.label) || (has_stride(layer.label) && layer.stride.value_or(1) == 2);
    if (halves) {
      if (in <= 1) {
        ImageSizeIssue issue{ImageSizeIssue::Kind::degenerate, u, {}};
        for (int p : g.parents[u]) issue.parent_sizes.emplace_back(p, rep.sizes[p]);
        rep.issues.push_back(std::move(issue));
      }
      rep.sizes[u] = std::max(1, (in + 1) / 2);
    } else {
      rep.sizes[u] = in;
    }
  }
  return rep;
}

inline ImageSizeReport image_sizes(const Architecture& arch, int input_size) {
  Graph g(arch);
  auto order = detail::kahn_order(g);
  if (order.empty()) throw InputError("image_sizes: graph has a cycle");
  return image_sizes(arch, g, order, input_size);
}

// ---------------------------------------------------------------------------
// Masses

/// Channel count a layer hands to its children: its units, the input
/// channel count for ip, and the pass-through count for pooling.
inline std::vector<double> outgoing_units(const Architecture& arch, const Graph& g,
                                          const std::vector<int>& order) {
  std::vector<double> out(arch.size(), 0.0);
  for (int u : order) {
    const Layer& l = arch.layers[u];
    if (l.label == LayerLabel::ip) {
      out[u] = arch.input_channels;
    } else if (l.units) {
      out[u] = *l.units;
    } else {
      double in = 0.0;
      for (int p : g.parents[u]) in += out[p];
      out[u] = in;
    }
  }
  return out;
}

inline std::vector<double> layer_masses(const Architecture& arch, const Graph& g,
                                        const std::vector<int>& order, const MassParams& params) {
  const auto out = outgoing_units(arch, g, order);
  std::vector<double> mass(arch.size(), 0.0);
  double processing = 0.0;
  int n_decision = 0;
  for (const Layer& l : arch.layers) {
    if (is_decision(l.label)) ++n_decision;
    if (!is_processing(l.label) || !l.units) continue;
    double in = 0.0;
    for (int p : g.parents[l.id]) in += out[p];
    double m = static_cast<double>(*l.units) * in;
    if (is_res(l.label)) m *= 2.0;
    if (arch.cls == ArchClass::cnn && l.label == LayerLabel::fc) m *= params.fc_multiplier;
    mass[l.id] = m;
    processing += m;
  }
  for (const Layer& l : arch.layers) {
    if (l.label == LayerLabel::ip || l.label == LayerLabel::op)
      mass[l.id] = params.zeta * processing;
    else if (is_decision(l.label))
      mass[l.id] = params.zeta / n_decision * processing;
  }
  return mass;
}

/// Per-layer mass, indexed by layer id. Requires a valid architecture.
inline std::vector<double> layer_masses(const Architecture& arch, const MassParams& params = {}) {
  Graph g(arch);
  auto order = detail::kahn_order(g);
  if (order.empty()) throw InputError("layer_masses: graph has a cycle");
  return layer_masses(arch, g, order, params);
}

inline double total_mass(const Architecture& arch, const MassParams& params = {}) {
  double s = 0.0;
  for (double m : layer_masses(arch, params)) s += m;
  return s;
}

// ---------------------------------------------------------------------------
// Path lengths

enum class PathKind { sp, lp, rw };
enum class PathAnchor { ip, op };

struct PathLengthSpec {
  PathKind kind = PathKind::sp;
  PathAnchor anchor = PathAnchor::op;
  LabelGroup group = LabelGroup::all;
};

inline constexpr std::array<PathKind, 3> kPathKinds = {PathKind::sp, PathKind::lp, PathKind::rw};
inline constexpr std::array<PathAnchor, 2> kPathAnchors = {PathAnchor::ip, PathAnchor::op};

/// Shortest / longest / random-walk hop counts to op (or from ip) for every
/// layer, computed by one sweep over a topological order. Under a restricted
/// group a hop only counts when it lands on a layer of that group.
inline std::vector<double> path_lengths(const Architecture& arch, const Graph& g,
                                        const std::vector<int>& order, const PathLengthSpec& spec) {
  const std::size_t n = arch.size();
  std::vector<double> delta(n, 0.0);
  const bool to_op = spec.anchor == PathAnchor::op;
  auto visit = [&](int u) {
    const auto& next = to_op ? g.children[u] : g.parents[u];
    if (next.empty()) {
      delta[u] = 0.0;
      return;
    }
    double acc = spec.kind == PathKind::sp ? std::numeric_limits<double>::infinity()
                 : spec.kind == PathKind::lp ? -std::numeric_limits<double>::infinity()
                                             : 0.0;
    for (int w : next) {
      const int head = to_op ? w : u;
      const double hop = in_group(arch.layers[head].label, spec.group) ? 1.0 : 0.0;
      const double val = hop + delta[w];
      switch (spec.kind) {
      case PathKind::sp: acc = std::min(acc, val); break;
      case PathKind::lp: acc = std::max(acc, val); break;
      case PathKind::rw: acc += val; break;
      }
    }
    if (spec.kind == PathKind::rw) acc /= static_cast<double>(next.size());
    delta[u] = acc;
  };
  if (to_op)
    for (auto it = order.rbegin(); it != order.rend(); ++it) visit(*it);
  else
    for (int u : order) visit(u);
  return delta;
}

inline std::vector<double> path_lengths(const Architecture& arch, const PathLengthSpec& spec) {
  Graph g(arch);
  auto order = detail::kahn_order(g);
  if (order.empty()) throw InputError("path_lengths: graph has a cycle");
  return path_lengths(arch, g, order, spec);
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string rule;
  std::string message;
  std::vector<int> layers;
  std::optional<Edge> edge;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  bool has(std::string_view rule) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.rule == rule; });
  }

  std::string summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i)
      os << (i ? "; " : "") << violations[i].message;
    return os.str();
  }
};

/// Checks every structural and domain rule. Never throws: problems are
/// returned as data, each naming the rule and the offending ids.
inline ValidationReport validate(const Architecture& arch, const DomainLimits& limits = {},
                                  const MassParams& mass_params = {}) {
  ValidationReport rep;
  auto add = [&](std::string rule, std::string msg, std::vector<int> layers = {},
                 std::optional<Edge> edge = std::nullopt) {
    rep.violations.push_back({std::move(rule), std::move(msg), std::move(layers), edge});
  };
  const int n = static_cast<int>(arch.size());

  if (arch.input_channels < 1) add("input-channels", "input_channels must be positive");

  bool ids_ok = true;
  for (int i = 0; i < n; ++i) {
    if (arch.layers[i].id != i) {
      add("layer-ids", "layer ids must be dense 0..n-1 in order (position " + std::to_string(i) +
                           " has id " + std::to_string(arch.layers[i].id) + ")",
          {arch.layers[i].id});
      ids_ok = false;
    }
  }

  int n_ip = 0, n_op = 0, n_decision = 0, n_processing = 0;
  for (const Layer& l : arch.layers) {
    const std::string where = "layer " + std::to_string(l.id) + " (" + std::string(label_name(l.label)) + ")";
    if (!label_in_class(l.label, arch.cls))
      add("label-class", where + " is not a " + std::string(class_name(arch.cls)) + " label", {l.id});
    if (l.label == LayerLabel::ip) ++n_ip;
    if (l.label == LayerLabel::op) ++n_op;
    if (is_decision(l.label)) ++n_decision;
    if (is_processing(l.label)) ++n_processing;
    if (has_units(l.label)) {
      if (!l.units)
        add("units", where + " is missing units", {l.id});
      else if (*l.units < limits.min_units || *l.units > limits.max_units)
        add("units", where + " has units " + std::to_string(*l.units) + " outside [" +
                         std::to_string(limits.min_units) + ", " + std::to_string(limits.max_units) + "]",
            {l.id});
    } else if (l.units) {
      add("units", where + " must not carry units", {l.id});
    }
    if (has_stride(l.label)) {
      if (!l.stride)
        add("stride", where + " is missing stride", {l.id});
      else if (*l.stride != 1 && *l.stride != 2)
        add("stride", where + " has stride " + std::to_string(*l.stride) + " (must be 1 or 2)", {l.id});
    } else if (l.stride) {
      add("stride", where + " must not carry a stride", {l.id});
    }
  }
  if (n_ip != 1) add("ip-count", "expected exactly one ip layer, found " + std::to_string(n_ip));
  if (n_op != 1) add("op-count", "expected exactly one op layer, found " + std::to_string(n_op));
  if (n_decision == 0) add("no-decision-layer", "network has no decision layer");
  if (n_processing == 0) add("no-processing-layer", "network has no processing layer");
  if (n > limits.max_layers)
    add("layer-count", "layer count > " + std::to_string(limits.max_layers) + " (" + std::to_string(n) + ")");
  if (static_cast<int>(arch.edges.size()) > limits.max_edges)
    add("edge-count", "edge count > " + std::to_string(limits.max_edges) + " (" +
                          std::to_string(arch.edges.size()) + ")");

  bool edges_ok = true;
  std::vector<Edge> sorted = arch.edges;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] == sorted[i - 1])
      add("duplicate-edge", "duplicate edge (" + std::to_string(sorted[i].first) + " -> " +
                                std::to_string(sorted[i].second) + ")",
          {}, sorted[i]);
  for (const Edge& e : arch.edges) {
    auto [u, v] = e;
    const std::string es = "(" + std::to_string(u) + " -> " + std::to_string(v) + ")";
    if (u < 0 || v < 0 || u >= n || v >= n) {
      add("edge-endpoint", "edge " + es + " refers to a missing layer", {}, e);
      edges_ok = false;
      continue;
    }
    if (u == v) add("self-edge", "self edge " + es, {u}, e);
    if (arch.layers[v].label == LayerLabel::ip) add("incoming-edge-to-ip", "incoming edge to ip " + es, {v}, e);
    if (arch.layers[u].label == LayerLabel::op) add("outgoing-edge-from-op", "outgoing edge from op " + es, {u}, e);
    if (arch.layers[v].label == LayerLabel::op && !is_decision(arch.layers[u].label))
      add("edge-to-op", "only decision layers may feed op " + es, {u}, e);
    if (is_decision(arch.layers[u].label) && arch.layers[v].label != LayerLabel::op)
      add("decision-edge", "decision layer " + std::to_string(u) + " must only feed op " + es, {u}, e);
  }
  if (!ids_ok || !edges_ok) return rep;

  Graph g(arch);
  for (const Layer& l : arch.layers) {
    const int in = static_cast<int>(g.parents[l.id].size());
    const int out = static_cast<int>(g.children[l.id].size());
    if (l.label != LayerLabel::ip && in == 0)
      add("missing-incoming", "layer " + std::to_string(l.id) + " has no incoming edge", {l.id});
    if (l.label != LayerLabel::op && out == 0)
      add("missing-outgoing", "layer " + std::to_string(l.id) + " has no outgoing edge", {l.id});
    if (is_decision(l.label) && n_op == 1) {
      const int op = find_label(arch, LayerLabel::op);
      if (std::find(g.children[l.id].begin(), g.children[l.id].end(), op) == g.children[l.id].end())
        add("decision-edge", "decision layer " + std::to_string(l.id) + " does not feed op", {l.id});
    }
    if (in > limits.max_in_degree)
      add("in-degree", "in-degree > " + std::to_string(limits.max_in_degree) + " at layer " +
                           std::to_string(l.id) + " (" + std::to_string(in) + ")",
          {l.id});
    if (out > limits.max_out_degree)
      add("out-degree", "out-degree > " + std::to_string(limits.max_out_degree) + " at layer " +
                            std::to_string(l.id) + " (" + std::to_string(out) + ")",
          {l.id});
  }

  auto order = detail::kahn_order(g);
  if (order.empty()) {
    auto cycle = detail::find_cycle(g);
    add("cycle", "graph has a cycle through layers " + detail::join_ids(cycle), cycle);
    return rep;
  }

  // Masses and image sizes only make sense once labels and units are sane.
  const bool shape_ok = !rep.has("units") && !rep.has("stride") && !rep.has("label-class") &&
                        !rep.has("input-channels");
  if (!shape_ok) return rep;

  if (arch.cls == ArchClass::cnn) {
    auto sizes = image_sizes(arch, g, order, limits.input_size);
    for (const auto& issue : sizes.issues) {
      std::ostringstream os;
      if (issue.kind == ImageSizeIssue::Kind::mismatch) {
        os << "image size mismatch at layer " << issue.layer << " (parents:";
        for (auto [p, s] : issue.parent_sizes) os << " " << p << "=" << s;
        os << ")";
      } else {
        os << "degenerate image size at layer " << issue.layer << " (halving a 1x1 image)";
      }
      add("image-size", os.str(), {issue.layer});
    }
  }

  double tm = 0.0;
  for (double m : layer_masses(arch, g, order, mass_params)) tm += m;
  if (tm > limits.max_mass) {
    std::ostringstream os;
    os << "total mass > " << limits.max_mass << " (" << tm << ")";
    add("total-mass", os.str());
  }
  return rep;
}

/// Topological order of a valid architecture; ip first, op last.
inline std::vector<int> topo_sort(const Architecture& arch, const DomainLimits& limits = {}) {
  auto rep = validate(arch, limits);
  if (!rep.ok()) throw InputError("topo_sort: invalid architecture: " + rep.summary());
  return detail::kahn_order(Graph(arch));
}

} // namespace nasbot
