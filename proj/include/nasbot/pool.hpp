#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nasbot/architecture.hpp"

namespace nasbot {

/// Appends layers one after another; each new layer is fed by the last.
class ChainBuilder {
public:
  explicit ChainBuilder(ArchClass cls, int input_channels = 1) {
    arch_.cls = cls;
    arch_.input_channels = input_channels;
    add(LayerLabel::ip);
  }

  ChainBuilder& add(LayerLabel label, std::optional<int> units = std::nullopt,
                    std::optional<int> stride = std::nullopt) {
    const int id = static_cast<int>(arch_.layers.size());
    if (has_stride(label) && !stride) stride = 1;
    arch_.layers.push_back({id, label, units, stride});
    if (id > 0) arch_.edges.emplace_back(id - 1, id);
    return *this;
  }

  ChainBuilder& repeat(LayerLabel label, int units, int count, int first_stride = 1) {
    for (int i = 0; i < count; ++i)
      add(label, units, has_stride(label) ? std::optional<int>(i == 0 ? first_stride : 1) : std::nullopt);
    return *this;
  }

  Architecture finish() {
    add(decision_label(arch_.cls));
    add(LayerLabel::op);
    return arch_;
  }

private:
  Architecture arch_;
};

namespace detail {

using L = LayerLabel;

inline Architecture vgg(std::vector<std::pair<int, int>> blocks, std::vector<int> fc) {
  ChainBuilder b(ArchClass::cnn, 3);
  for (auto [units, count] : blocks) {
    b.repeat(L::conv3, units, count);
    b.add(L::max_pool);
  }
  for (int u : fc) b.add(L::fc, u);
  return b.finish();
}

struct Block {
  LayerLabel label;
  int units;
  int count;
};

/// Stem convolution, then blocks that halve the image on entry (except the
/// first), then a pooled fc head.
inline Architecture blocked(LayerLabel stem, int stem_units, std::vector<Block> blocks, LayerLabel head_pool,
                            int fc_units) {
  ChainBuilder b(ArchClass::cnn, 3);
  b.add(stem, stem_units, 1);
  for (std::size_t i = 0; i < blocks.size(); ++i) b.repeat(blocks[i].label, blocks[i].units, blocks[i].count, i ? 2 : 1);
  b.add(head_pool);
  b.add(L::fc, fc_units);
  return b.finish();
}

inline Architecture mlp(std::vector<Block> blocks, int input_channels = 8) {
  ChainBuilder b(ArchClass::mlp, input_channels);
  for (const auto& blk : blocks) b.repeat(blk.label, blk.units, blk.count);
  return b.finish();
}

} // namespace detail

/// The ten feed-forward networks every search starts from. CNNs: three
/// VGG-style stacks and seven blocked nets; MLPs: ten blocked stacks.
inline std::vector<Architecture> initial_pool(ArchClass cls) {
  using detail::Block;
  using L = LayerLabel;
  if (cls == ArchClass::cnn) {
    return {
        detail::vgg({{32, 1}, {64, 1}, {128, 2}}, {256}),
        detail::vgg({{32, 2}, {64, 2}, {128, 2}}, {256, 128}),
        detail::vgg({{16, 2}, {32, 2}, {64, 3}, {128, 3}}, {128}),
        detail::blocked(L::conv3, 16, {{L::res3, 16, 2}, {L::res3, 32, 2}, {L::res3, 64, 2}}, L::avg_pool, 64),
        detail::blocked(L::conv5, 32, {{L::res3, 32, 3}, {L::res3, 64, 3}}, L::avg_pool, 128),
        detail::blocked(L::conv3, 16, {{L::conv3, 16, 2}, {L::conv3, 32, 2}, {L::conv3, 64, 2}, {L::conv3, 128, 2}},
                        L::max_pool, 128),
        detail::blocked(L::conv7, 24, {{L::res5, 24, 2}, {L::res5, 48, 2}}, L::avg_pool, 96),
        detail::blocked(L::conv5, 16, {{L::conv5, 16, 1}, {L::res3, 32, 2}, {L::conv3, 64, 2}}, L::max_pool, 64),
        detail::blocked(L::conv3, 16, {{L::res3, 16, 4}, {L::res3, 32, 4}, {L::res3, 64, 4}}, L::avg_pool, 64),
        detail::blocked(L::conv7, 64, {{L::res3, 128, 2}}, L::max_pool, 256),
    };
  }
  return {
      detail::mlp({{L::relu, 64, 2}, {L::relu, 32, 2}}),
      detail::mlp({{L::tanh, 64, 3}, {L::logistic, 32, 2}}),
      detail::mlp({{L::relu, 128, 2}, {L::logistic, 64, 2}, {L::elu, 32, 2}, {L::softplus, 16, 1}}),
      detail::mlp({{L::leaky_relu, 256, 2}, {L::leaky_relu, 128, 2}, {L::leaky_relu, 64, 2}}),
      detail::mlp({{L::crelu, 32, 4}}),
      detail::mlp({{L::softplus, 64, 2}, {L::tanh, 64, 2}, {L::relu, 32, 2}}),
      detail::mlp({{L::elu, 128, 3}, {L::elu, 64, 3}, {L::elu, 32, 3}}),
      detail::mlp({{L::logistic, 16, 2}, {L::tanh, 16, 2}}),
      detail::mlp({{L::relu, 512, 1}, {L::crelu, 256, 2}, {L::tanh, 128, 2}, {L::logistic, 64, 1}}),
      detail::mlp({{L::leaky_relu, 48, 5}, {L::softplus, 24, 5}}),
  };
}

} // namespace nasbot
