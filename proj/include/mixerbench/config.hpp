#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixerbench/mixers.hpp"
#include "mixerbench/tensor.hpp"

namespace mixerbench {

enum class Backbone { vit, swin };
enum class PosEmbed { learned, none };

Backbone parse_backbone(const std::string& name);
const char* backbone_name(Backbone b);

struct ModelConfig {
  Backbone backbone = Backbone::vit;
  MixerKind mixer = MixerKind::attention;
  int spatial_rank = 2;
  std::int64_t patch_size = 16;
  std::int64_t window_size = 8;  // swin only
  std::int64_t embed_dim = 64;
  // vit: one entry (block count); swin: blocks per stage, one entry per stage
  std::vector<std::int64_t> depth{2};
  std::int64_t num_heads = 4;
  bool shift_enabled = false;
  PosEmbed pos_embed = PosEmbed::learned;

  // Throws ConfigError on any violated invariant.
  void validate() const;

  // "key = value" lines with the field names above.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  static ModelConfig load(const std::string& path);
  // Applies one key/value (as read from a file or a flag).
  void set(const std::string& key, const std::string& value);

  // FNV-1a of to_text()
  std::uint64_t hash() const;
};

// The swin defaults: four stages of two blocks, no learned positions.
ModelConfig default_swin_config();

// vit: total tokens; swin: window_size^rank
std::int64_t context_length(const ModelConfig& config, const Shape& image_extents);

std::uint64_t fnv1a(const std::string& text);

}  // namespace mixerbench
