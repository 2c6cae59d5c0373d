#pragma once

#include <cstdint>
#include <cstdio>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "nasbot/architecture.hpp"

namespace nasbot {

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

} // namespace detail

/// Canonical text form: layers in topological order, ties broken by
/// (label, units, stride, out-degree, in-degree), edges renumbered to that
/// order. Isomorphic networks that differ only in id assignment almost
/// always map to the same text.
inline std::string canonical_form(const Architecture& arch) {
  Graph g(arch);
  const int n = static_cast<int>(arch.size());
  using Key = std::tuple<int, int, int, int, int, int>;
  auto key = [&](int u) {
    const Layer& l = arch.layers[u];
    return Key{static_cast<int>(label_index(l.label)), l.units.value_or(0), l.stride.value_or(0),
               static_cast<int>(g.children[u].size()), static_cast<int>(g.parents[u].size()), u};
  };
  std::vector<int> indeg(n);
  std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
  for (int v = 0; v < n; ++v) {
    indeg[v] = static_cast<int>(g.parents[v].size());
    if (indeg[v] == 0) ready.push(key(v));
  }
  std::vector<int> pos(n, -1), order;
  while (!ready.empty()) {
    const int u = std::get<5>(ready.top());
    ready.pop();
    pos[u] = static_cast<int>(order.size());
    order.push_back(u);
    for (int c : g.children[u])
      if (--indeg[c] == 0) ready.push(key(c));
  }
  // Cyclic graphs still get a (non-canonical) form.
  for (int v = 0; v < n; ++v)
    if (pos[v] < 0) {
      pos[v] = static_cast<int>(order.size());
      order.push_back(v);
    }

  std::string out(class_name(arch.cls));
  out += "|" + std::to_string(arch.input_channels) + "|";
  for (int u : order) {
    const Layer& l = arch.layers[u];
    out += label_name(l.label);
    out += ":" + std::to_string(l.units.value_or(0)) + ":" + std::to_string(l.stride.value_or(0)) + ";";
  }
  std::vector<Edge> edges;
  edges.reserve(arch.edges.size());
  for (auto [u, v] : arch.edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) continue;
    edges.emplace_back(pos[u], pos[v]);
  }
  std::sort(edges.begin(), edges.end());
  out += "|";
  for (auto [u, v] : edges) out += std::to_string(u) + ">" + std::to_string(v) + ";";
  return out;
}

/// 16-hex-digit structural hash; stable cache key and file name.
inline std::string structural_hash(const Architecture& arch) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(canonical_form(arch))));
  return buf;
}

} // namespace nasbot
