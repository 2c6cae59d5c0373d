#pragma once

// Random valid architectures for property tests. Built layer by layer in
// topological order, then rejected and redrawn until validate() accepts.

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "nasbot/architecture.hpp"

namespace gen {

using nasbot::ArchClass;
using nasbot::Architecture;
using nasbot::LayerLabel;

struct Options {
  int min_processing = 1;
  int max_processing = 8;
  int max_decision = 2;
  double extra_parent = 0.3; // chance of each of up to two extra parents
  double chain = 0.6;        // chance the main parent is the previous layer
  double stride2 = 0.2;
};

template <class Rng>
int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <class Rng>
bool coin(Rng& rng, double p) {
  return std::bernoulli_distribution(p)(rng);
}

template <class Rng>
std::optional<Architecture> try_arch(ArchClass cls, Rng& rng, const Options& o) {
  static const int kUnits[] = {8, 16, 24, 32, 64, 128};
  const auto labels = nasbot::processing_labels(cls);
  const int input_size = nasbot::DomainLimits{}.input_size;
  Architecture a;
  a.cls = cls;
  a.input_channels = uniform_int(rng, 1, 4);
  a.layers.push_back({0, LayerLabel::ip, std::nullopt, std::nullopt});
  std::vector<int> size{input_size};
  std::vector<int> out_degree{0};

  const int n = uniform_int(rng, o.min_processing, o.max_processing);
  for (int k = 1; k <= n; ++k) {
    const LayerLabel label = labels[static_cast<std::size_t>(uniform_int(rng, 0, int(labels.size()) - 1))];
    nasbot::Layer l{k, label, std::nullopt, std::nullopt};
    if (nasbot::has_units(label)) l.units = kUnits[uniform_int(rng, 0, 5)];
    if (nasbot::has_stride(label)) l.stride = coin(rng, o.stride2) ? 2 : 1;

    const int main = coin(rng, o.chain) ? k - 1 : uniform_int(rng, 0, k - 1);
    std::vector<int> parents{main};
    for (int e = 0; e < 2; ++e) {
      if (!coin(rng, o.extra_parent)) continue;
      const int p = uniform_int(rng, 0, k - 1);
      if (std::find(parents.begin(), parents.end(), p) != parents.end()) continue;
      if (cls == ArchClass::cnn && size[p] != size[main]) continue;
      parents.push_back(p);
    }
    const bool halves = nasbot::is_pool(label) || l.stride.value_or(1) == 2;
    if (halves && size[main] <= 1) return std::nullopt;
    size.push_back(halves ? (size[main] + 1) / 2 : size[main]);
    out_degree.push_back(0);
    for (int p : parents) {
      a.edges.emplace_back(p, k);
      ++out_degree[p];
    }
    a.layers.push_back(l);
  }

  // Sinks feed the decision layers; every decision layer needs a parent.
  const int n_decision = uniform_int(rng, 1, o.max_decision);
  const int first_decision = n + 1;
  std::vector<int> fed(n_decision, 0);
  for (int d = 0; d < n_decision; ++d)
    a.layers.push_back({first_decision + d, nasbot::decision_label(cls), std::nullopt, std::nullopt});
  for (int u = 1; u <= n; ++u) {
    if (out_degree[u] > 0) continue;
    const int d = uniform_int(rng, 0, n_decision - 1);
    a.edges.emplace_back(u, first_decision + d);
    ++fed[d];
  }
  for (int d = 0; d < n_decision; ++d)
    if (!fed[d]) a.edges.emplace_back(uniform_int(rng, 1, n), first_decision + d);
  const int op = first_decision + n_decision;
  a.layers.push_back({op, LayerLabel::op, std::nullopt, std::nullopt});
  for (int d = 0; d < n_decision; ++d) a.edges.emplace_back(first_decision + d, op);

  if (!nasbot::validate(a).ok()) return std::nullopt;
  return a;
}

template <class Rng>
Architecture random_arch(ArchClass cls, Rng& rng, const Options& o = {}) {
  for (int attempt = 0; attempt < 100000; ++attempt)
    if (auto a = try_arch(cls, rng, o)) return *a;
  throw std::runtime_error("random_arch: no valid architecture drawn");
}

/// Same network with layer ids permuted (ip and op included) and edges
/// listed in a shuffled order.
template <class Rng>
Architecture relabel(const Architecture& a, Rng& rng) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Architecture b = a;
  for (const auto& l : a.layers) {
    auto nl = l;
    nl.id = perm[static_cast<std::size_t>(l.id)];
    b.layers[static_cast<std::size_t>(nl.id)] = nl;
  }
  b.edges.clear();
  for (auto [u, v] : a.edges) b.edges.emplace_back(perm[static_cast<std::size_t>(u)], perm[static_cast<std::size_t>(v)]);
  std::shuffle(b.edges.begin(), b.edges.end(), rng);
  return b;
}

} // namespace gen
