#include "mixerbench/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mixerbench {

Backbone parse_backbone(const std::string& name) {
  if (name == "vit") return Backbone::vit;
  if (name == "swin") return Backbone::swin;
  throw ConfigError("unknown backbone '" + name + "' (expected vit or swin)");
}

const char* backbone_name(Backbone b) { return b == Backbone::vit ? "vit" : "swin"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

}  // namespace

void ModelConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "backbone") {
    backbone = parse_backbone(v);
  } else if (key == "mixer") {
    mixer = parse_mixer(v);
  } else if (key == "spatial_rank") {
    spatial_rank = static_cast<int>(to_int(key, v));
  } else if (key == "patch_size") {
    patch_size = to_int(key, v);
  } else if (key == "window_size") {
    window_size = to_int(key, v);
  } else if (key == "embed_dim") {
    embed_dim = to_int(key, v);
  } else if (key == "depth") {
    depth.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) depth.push_back(to_int(key, trim(item)));
    if (depth.empty()) throw ConfigError("depth: empty list");
  } else if (key == "num_heads") {
    num_heads = to_int(key, v);
  } else if (key == "shift_enabled") {
    shift_enabled = to_bool(key, v);
  } else if (key == "pos_embed") {
    if (v == "learned")
      pos_embed = PosEmbed::learned;
    else if (v == "none")
      pos_embed = PosEmbed::none;
    else
      throw ConfigError("pos_embed: expected learned or none, got '" + v + "'");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void ModelConfig::validate() const {
  if (spatial_rank != 2 && spatial_rank != 3) throw ConfigError("spatial_rank must be 2 or 3");
  if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
  if (num_heads <= 0) throw ConfigError("num_heads must be positive");
  if (depth.empty() || std::any_of(depth.begin(), depth.end(), [](auto d) { return d < 0; }))
    throw ConfigError("depth entries must be non-negative");
  if (backbone == Backbone::vit) {
    if (patch_size != 4 && patch_size != 8 && patch_size != 16 && patch_size != 32)
      throw ConfigError("vit patch_size must be one of 4, 8, 16, 32 (got " + std::to_string(patch_size) + ")");
    if (depth.size() != 1) throw ConfigError("vit depth is a single block count");
    if (shift_enabled) throw ConfigError("shift_enabled applies to swin only");
  } else {
    if (patch_size != 2 && patch_size != 4)
      throw ConfigError("swin patch_size must be 2 or 4 (got " + std::to_string(patch_size) + ")");
    if (window_size != 4 && window_size != 8 && window_size != 16)
      throw ConfigError("swin window_size must be one of 4, 8, 16 (got " + std::to_string(window_size) + ")");
  }
  if (shift_enabled && mixer != MixerKind::attention)
    throw ConfigError(std::string("shifted windows are only defined for attention, not ") + mixer_name(mixer));
  if (mixer == MixerKind::attention) {
    // swin doubles heads per stage alongside channels, so divisibility carries over
    if (embed_dim % num_heads != 0) throw ConfigError("embed_dim must be divisible by num_heads");
  }
  if (mixer == MixerKind::mamba_vision && embed_dim % 2 != 0)
    throw ConfigError("mamba_vision needs an even embed_dim");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "backbone = " << backbone_name(backbone) << "\n";
  os << "mixer = " << mixer_name(mixer) << "\n";
  os << "spatial_rank = " << spatial_rank << "\n";
  os << "patch_size = " << patch_size << "\n";
  os << "window_size = " << window_size << "\n";
  os << "embed_dim = " << embed_dim << "\n";
  os << "depth = ";
  for (std::size_t i = 0; i < depth.size(); ++i) os << (i ? "," : "") << depth[i];
  os << "\n";
  os << "num_heads = " << num_heads << "\n";
  os << "shift_enabled = " << (shift_enabled ? "true" : "false") << "\n";
  os << "pos_embed = " << (pos_embed == PosEmbed::learned ? "learned" : "none") << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  bool depth_seen = false, pos_seen = false;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    c.set(key, line.substr(eq + 1));
    depth_seen = depth_seen || key == "depth";
    pos_seen = pos_seen || key == "pos_embed";
  }
  if (c.backbone == Backbone::swin) {
    if (!depth_seen) c.depth = default_swin_config().depth;
    if (!pos_seen) c.pos_embed = PosEmbed::none;
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t ModelConfig::hash() const { return fnv1a(to_text()); }

ModelConfig default_swin_config() {
  ModelConfig c;
  c.backbone = Backbone::swin;
  c.patch_size = 4;
  c.window_size = 4;
  c.embed_dim = 32;
  c.depth = {2, 2, 2, 2};
  c.pos_embed = PosEmbed::none;
  return c;
}

std::int64_t context_length(const ModelConfig& config, const Shape& extents) {
  std::int64_t n = 1;
  if (config.backbone == Backbone::vit) {
    for (auto e : extents) n *= e / config.patch_size;
  } else {
    for (std::size_t i = 0; i < extents.size(); ++i) n *= config.window_size;
  }
  return n;
}

}  // namespace mixerbench
