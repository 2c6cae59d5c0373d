#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "nasbot/architecture.hpp"

namespace nasbot {

namespace detail {

inline void reject_unknown_fields(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                                  const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (auto a : allowed) known = known || it.key() == a;
    if (!known) throw InputError(path + "." + it.key() + ": unknown field");
  }
}

inline int require_int(const nlohmann::json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(path + "." + key + ": missing field");
  if (!it->is_number_integer()) throw InputError(path + "." + key + ": expected an integer");
  return it->get<int>();
}

} // namespace detail

inline nlohmann::json arch_to_json_value(const Architecture& arch) {
  nlohmann::json j;
  j["class"] = std::string(class_name(arch.cls));
  j["input_channels"] = arch.input_channels;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const Layer& l : arch.layers) {
    nlohmann::json jl;
    jl["id"] = l.id;
    jl["label"] = std::string(label_name(l.label));
    if (l.units) jl["units"] = *l.units;
    if (l.stride) jl["stride"] = *l.stride;
    layers.push_back(std::move(jl));
  }
  auto& edges = j["edges"] = nlohmann::json::array();
  for (auto [u, v] : arch.edges) edges.push_back({u, v});
  return j;
}

inline std::string to_json(const Architecture& arch, int indent = 2) {
  return arch_to_json_value(arch).dump(indent);
}

inline Architecture arch_from_json_value(const nlohmann::json& j) {
  using detail::require_int;
  if (!j.is_object()) throw InputError("$: expected an object");
  detail::reject_unknown_fields(j, {"class", "input_channels", "layers", "edges"}, "$");

  Architecture arch;
  auto cls = j.find("class");
  if (cls == j.end()) throw InputError("$.class: missing field");
  if (!cls->is_string()) throw InputError("$.class: expected a string");
  auto parsed_cls = parse_class(cls->get<std::string>());
  if (!parsed_cls) throw InputError("$.class: unknown class \"" + cls->get<std::string>() + "\"");
  arch.cls = *parsed_cls;

  if (j.contains("input_channels")) {
    arch.input_channels = require_int(j, "input_channels", "$");
    if (arch.input_channels < 1) throw InputError("$.input_channels: must be positive");
  }

  auto layers = j.find("layers");
  if (layers == j.end()) throw InputError("$.layers: missing field");
  if (!layers->is_array()) throw InputError("$.layers: expected an array");
  std::set<int> seen;
  for (std::size_t i = 0; i < layers->size(); ++i) {
    const auto& jl = (*layers)[i];
    const std::string path = "$.layers[" + std::to_string(i) + "]";
    if (!jl.is_object()) throw InputError(path + ": expected an object");
    detail::reject_unknown_fields(jl, {"id", "label", "units", "stride"}, path);
    Layer l;
    l.id = require_int(jl, "id", path);
    if (l.id < 0) throw InputError(path + ".id: must be non-negative");
    if (!seen.insert(l.id).second) throw InputError(path + ".id: duplicate layer id " + std::to_string(l.id));
    auto lab = jl.find("label");
    if (lab == jl.end()) throw InputError(path + ".label: missing field");
    if (!lab->is_string()) throw InputError(path + ".label: expected a string");
    auto parsed = parse_label(lab->get<std::string>());
    if (!parsed) throw InputError(path + ".label: unknown label \"" + lab->get<std::string>() + "\"");
    l.label = *parsed;
    if (jl.contains("units")) l.units = require_int(jl, "units", path);
    if (jl.contains("stride")) l.stride = require_int(jl, "stride", path);
    arch.layers.push_back(l);
  }
  std::sort(arch.layers.begin(), arch.layers.end(), [](const Layer& a, const Layer& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < arch.layers.size(); ++i)
    if (arch.layers[i].id != static_cast<int>(i))
      throw InputError("$.layers: ids must be dense 0.." + std::to_string(arch.layers.size() - 1));

  auto edges = j.find("edges");
  if (edges == j.end()) throw InputError("$.edges: missing field");
  if (!edges->is_array()) throw InputError("$.edges: expected an array");
  for (std::size_t i = 0; i < edges->size(); ++i) {
    const auto& je = (*edges)[i];
    const std::string path = "$.edges[" + std::to_string(i) + "]";
    if (!je.is_array() || je.size() != 2 || !je[0].is_number_integer() || !je[1].is_number_integer())
      throw InputError(path + ": expected a pair of integers");
    arch.edges.emplace_back(je[0].get<int>(), je[1].get<int>());
  }
  return arch;
}

/// Parses the architecture document. Throws InputError naming the offending
/// field path on any schema violation.
inline Architecture parse_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
  return arch_from_json_value(j);
}

} // namespace nasbot
