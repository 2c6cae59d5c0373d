#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>

#include "nasbot/errors.hpp"

namespace nasbot {

enum class ArchClass { cnn, mlp };

enum class LayerLabel {
  ip,
  op,
  // cnn
  softmax,
  conv3,
  conv5,
  conv7,
  res3,
  res5,
  res7,
  max_pool,
  avg_pool,
  fc,
  // mlp
  linear,
  relu,
  crelu,
  leaky_relu,
  softplus,
  elu,
  logistic,
  tanh,
};

inline constexpr std::size_t kNumLabels = 20;

inline constexpr std::array<LayerLabel, kNumLabels> kAllLabels = {
    LayerLabel::ip,       LayerLabel::op,         LayerLabel::softmax,  LayerLabel::conv3,
    LayerLabel::conv5,    LayerLabel::conv7,      LayerLabel::res3,     LayerLabel::res5,
    LayerLabel::res7,     LayerLabel::max_pool,   LayerLabel::avg_pool, LayerLabel::fc,
    LayerLabel::linear,   LayerLabel::relu,       LayerLabel::crelu,    LayerLabel::leaky_relu,
    LayerLabel::softplus, LayerLabel::elu,        LayerLabel::logistic, LayerLabel::tanh,
};

inline constexpr std::array<LayerLabel, 12> kCnnLabels = {
    LayerLabel::ip,    LayerLabel::op,   LayerLabel::softmax,  LayerLabel::conv3,
    LayerLabel::conv5, LayerLabel::conv7, LayerLabel::res3,    LayerLabel::res5,
    LayerLabel::res7,  LayerLabel::max_pool, LayerLabel::avg_pool, LayerLabel::fc,
};

inline constexpr std::array<LayerLabel, 10> kMlpLabels = {
    LayerLabel::ip,       LayerLabel::op,  LayerLabel::linear,   LayerLabel::relu,
    LayerLabel::crelu,    LayerLabel::leaky_relu, LayerLabel::softplus, LayerLabel::elu,
    LayerLabel::logistic, LayerLabel::tanh,
};

inline constexpr std::array<LayerLabel, 9> kCnnProcessingLabels = {
    LayerLabel::conv3, LayerLabel::conv5, LayerLabel::conv7,    LayerLabel::res3,     LayerLabel::res5,
    LayerLabel::res7,  LayerLabel::max_pool, LayerLabel::avg_pool, LayerLabel::fc,
};

inline constexpr std::array<LayerLabel, 7> kMlpProcessingLabels = {
    LayerLabel::relu, LayerLabel::crelu,    LayerLabel::leaky_relu, LayerLabel::softplus,
    LayerLabel::elu,  LayerLabel::logistic, LayerLabel::tanh,
};

constexpr std::size_t label_index(LayerLabel l) { return static_cast<std::size_t>(l); }

constexpr std::string_view label_name(LayerLabel l) {
  switch (l) {
  case LayerLabel::ip: return "ip";
  case LayerLabel::op: return "op";
  case LayerLabel::softmax: return "softmax";
  case LayerLabel::conv3: return "conv3";
  case LayerLabel::conv5: return "conv5";
  case LayerLabel::conv7: return "conv7";
  case LayerLabel::res3: return "res3";
  case LayerLabel::res5: return "res5";
  case LayerLabel::res7: return "res7";
  case LayerLabel::max_pool: return "max-pool";
  case LayerLabel::avg_pool: return "avg-pool";
  case LayerLabel::fc: return "fc";
  case LayerLabel::linear: return "linear";
  case LayerLabel::relu: return "relu";
  case LayerLabel::crelu: return "crelu";
  case LayerLabel::leaky_relu: return "leaky-relu";
  case LayerLabel::softplus: return "softplus";
  case LayerLabel::elu: return "elu";
  case LayerLabel::logistic: return "logistic";
  case LayerLabel::tanh: return "tanh";
  }
  return "?";
}

inline std::optional<LayerLabel> parse_label(std::string_view name) {
  for (LayerLabel l : kAllLabels)
    if (label_name(l) == name) return l;
  return std::nullopt;
}

constexpr std::string_view class_name(ArchClass c) { return c == ArchClass::cnn ? "cnn" : "mlp"; }

inline std::optional<ArchClass> parse_class(std::string_view name) {
  if (name == "cnn") return ArchClass::cnn;
  if (name == "mlp") return ArchClass::mlp;
  return std::nullopt;
}

constexpr bool is_conv(LayerLabel l) {
  return l == LayerLabel::conv3 || l == LayerLabel::conv5 || l == LayerLabel::conv7;
}
constexpr bool is_res(LayerLabel l) {
  return l == LayerLabel::res3 || l == LayerLabel::res5 || l == LayerLabel::res7;
}
constexpr bool is_pool(LayerLabel l) { return l == LayerLabel::max_pool || l == LayerLabel::avg_pool; }
constexpr bool is_rectifier(LayerLabel l) {
  return l == LayerLabel::relu || l == LayerLabel::crelu || l == LayerLabel::leaky_relu ||
         l == LayerLabel::softplus || l == LayerLabel::elu;
}
constexpr bool is_sigmoidal(LayerLabel l) { return l == LayerLabel::logistic || l == LayerLabel::tanh; }
constexpr bool is_decision(LayerLabel l) { return l == LayerLabel::softmax || l == LayerLabel::linear; }
constexpr bool is_processing(LayerLabel l) {
  return l != LayerLabel::ip && l != LayerLabel::op && !is_decision(l);
}

/// Labels that carry a `units` field.
constexpr bool has_units(LayerLabel l) {
  return is_conv(l) || is_res(l) || l == LayerLabel::fc || is_rectifier(l) || is_sigmoidal(l);
}
/// Labels that carry a `stride` field.
constexpr bool has_stride(LayerLabel l) { return is_conv(l) || is_res(l); }

/// ip and op are role labels shared by both classes; every other label
/// belongs to exactly one class.
constexpr bool label_in_class(LayerLabel l, ArchClass c) {
  if (l == LayerLabel::ip || l == LayerLabel::op) return true;
  const auto i = label_index(l);
  const bool cnn = i >= label_index(LayerLabel::softmax) && i <= label_index(LayerLabel::fc);
  return c == ArchClass::cnn ? cnn : !cnn;
}

constexpr LayerLabel decision_label(ArchClass c) {
  return c == ArchClass::cnn ? LayerLabel::softmax : LayerLabel::linear;
}

inline std::span<const LayerLabel> class_labels(ArchClass c) {
  if (c == ArchClass::cnn) return kCnnLabels;
  return kMlpLabels;
}

inline std::span<const LayerLabel> processing_labels(ArchClass c) {
  if (c == ArchClass::cnn) return kCnnProcessingLabels;
  return kMlpProcessingLabels;
}

/// Label groups used for the restricted path-length statistics.
enum class LabelGroup { all, conv, pool, fc, rect, sigm };

inline constexpr std::array<LabelGroup, 4> kCnnGroups = {LabelGroup::all, LabelGroup::conv,
                                                         LabelGroup::pool, LabelGroup::fc};
inline constexpr std::array<LabelGroup, 3> kMlpGroups = {LabelGroup::all, LabelGroup::rect,
                                                         LabelGroup::sigm};

inline std::span<const LabelGroup> label_groups(ArchClass c) {
  if (c == ArchClass::cnn) return kCnnGroups;
  return kMlpGroups;
}

/// res-k blocks are convolutions, so they count towards the conv group.
constexpr bool in_group(LayerLabel l, LabelGroup g) {
  switch (g) {
  case LabelGroup::all: return true;
  case LabelGroup::conv: return is_conv(l) || is_res(l);
  case LabelGroup::pool: return is_pool(l);
  case LabelGroup::fc: return l == LayerLabel::fc;
  case LabelGroup::rect: return is_rectifier(l);
  case LabelGroup::sigm: return is_sigmoidal(l);
  }
  return false;
}

constexpr std::string_view group_name(LabelGroup g) {
  switch (g) {
  case LabelGroup::all: return "all";
  case LabelGroup::conv: return "conv";
  case LabelGroup::pool: return "pool";
  case LabelGroup::fc: return "fc";
  case LabelGroup::rect: return "rect";
  case LabelGroup::sigm: return "sigm";
  }
  return "?";
}

} // namespace nasbot
