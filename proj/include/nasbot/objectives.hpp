#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "nasbot/architecture.hpp"
#include "nasbot/errors.hpp"

namespace nasbot {

struct ArchStats {
  double am = 0.0;     // total mass / number of layers
  double deg_i = 0.0;  // mean in-degree
  double deg_o = 0.0;  // mean out-degree
  double delta = 0.0;  // fewest hops from ip to op
  double stride_avg = 0.0;
  double frac_conv3 = 0.0;
  double frac_sigmoid = 0.0;
  int n_layers = 0;
  int n_edges = 0;
};

inline ArchStats stats(const Architecture& arch, const MassParams& mass_params = {}) {
  ArchStats s;
  s.n_layers = static_cast<int>(arch.size());
  s.n_edges = static_cast<int>(arch.edges.size());
  if (s.n_layers == 0) return s;
  Graph g(arch);
  auto order = detail::kahn_order(g);
  if (order.empty()) throw InputError("stats: graph has a cycle");
  double tm = 0.0;
  for (double m : layer_masses(arch, g, order, mass_params)) tm += m;
  s.am = tm / s.n_layers;
  s.deg_i = s.deg_o = static_cast<double>(s.n_edges) / s.n_layers;
  const int ip = find_label(arch, LayerLabel::ip);
  const int op = find_label(arch, LayerLabel::op);
  if (ip >= 0 && op >= 0) s.delta = path_lengths(arch, g, order, {PathKind::sp, PathAnchor::ip, LabelGroup::all})[op];

  int strided = 0, processing = 0, conv3 = 0, sigmoid = 0;
  double stride_sum = 0.0;
  for (const Layer& l : arch.layers) {
    if (has_stride(l.label) && l.stride) {
      stride_sum += *l.stride;
      ++strided;
    }
    if (!is_processing(l.label)) continue;
    ++processing;
    if (l.label == LayerLabel::conv3) ++conv3;
    if (is_sigmoidal(l.label)) ++sigmoid;
  }
  if (strided) s.stride_avg = stride_sum / strided;
  if (processing) {
    s.frac_conv3 = static_cast<double>(conv3) / processing;
    s.frac_sigmoid = static_cast<double>(sigmoid) / processing;
  }
  return s;
}

inline double synthetic_f0(const ArchStats& s) {
  return std::exp(-0.001 * std::abs(s.am - 1000.0)) + std::exp(-0.5 * std::abs(s.deg_i - 5.0)) +
         std::exp(-0.5 * std::abs(s.deg_o - 5.0)) + std::exp(-0.1 * std::abs(s.delta - 5.0)) +
         std::exp(-0.1 * std::abs(s.n_layers - 30.0)) + std::exp(-0.05 * std::abs(s.n_edges - 100.0));
}

/// The class each synthetic function is defined for (f0 works on both).
inline std::optional<ArchClass> synthetic_class(int k) {
  if (k == 1) return ArchClass::cnn;
  if (k == 2 || k == 3) return ArchClass::mlp;
  return std::nullopt;
}

inline double eval_f(int k, const Architecture& arch) {
  if (k < 0 || k > 3) throw InputError("eval_f: unknown synthetic function f" + std::to_string(k));
  if (auto cls = synthetic_class(k); cls && *cls != arch.cls)
    throw SemanticError("f" + std::to_string(k) + " is defined for " + std::string(class_name(*cls)) +
                        " architectures, got " + std::string(class_name(arch.cls)));
  const ArchStats s = stats(arch);
  const double f0 = synthetic_f0(s);
  switch (k) {
  case 1:
    return f0 + std::exp(-3.0 * std::abs(s.stride_avg - 1.5)) + std::exp(-0.3 * std::abs(s.n_layers - 50.0)) +
           std::exp(-0.001 * std::abs(s.am - 500.0)) + s.frac_conv3;
  case 2:
    return f0 + std::exp(-0.001 * std::abs(s.am - 2000.0)) + std::exp(-0.1 * std::abs(s.n_edges - 50.0)) +
           s.frac_sigmoid;
  case 3: return f0 + s.frac_sigmoid;
  default: return f0;
  }
}

/// Parses "f0".."f3".
inline std::optional<int> parse_synthetic(std::string_view name) {
  if (name.size() == 2 && name[0] == 'f' && name[1] >= '0' && name[1] <= '3') return name[1] - '0';
  return std::nullopt;
}

} // namespace nasbot
