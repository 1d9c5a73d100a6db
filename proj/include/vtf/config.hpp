#pragma once

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "vtf/model.hpp"
#include "vtf/schema.hpp"
#include "vtf/train.hpp"

namespace vtf {

/// Everything a training run needs besides data: model shape and optimizer
/// settings. Built from defaults, then a YAML file, then command-line flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

namespace detail {

template <class V>
void yaml_read(const YAML::Node& node, const std::string& file, V& out) {
  try {
    out = node.as<V>();
  } catch (const YAML::Exception&) {
    throw ParseError(file, yaml_line(node), "bad value '" + (node.IsScalar() ? node.Scalar() : std::string("<node>")) + "'");
  }
}

using FieldSetters = std::map<std::string, std::function<void(const YAML::Node&)>>;

inline void yaml_section(const YAML::Node& node, const std::string& name, const std::string& file,
                         const FieldSetters& fields) {
  if (!node) return;
  if (!node.IsMap()) throw ParseError(file, yaml_line(node), "'" + name + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    const auto it = fields.find(key);
    if (it == fields.end()) throw ParseError(file, yaml_line(kv.first), "unknown key '" + name + "." + key + "'");
    it->second(kv.second);
  }
}

}  // namespace detail

/// Overlays a YAML document onto `base`. Unknown keys are errors.
inline RunConfig parse_run_config(const std::string& text, const std::string& file = "<config>",
                                  RunConfig base = {}) {
  const YAML::Node root = detail::yaml_parse(text, file);
  if (root.IsNull()) return base;
  if (!root.IsMap()) throw ParseError(file, 1, "config must be a mapping");
  auto& m = base.model;
  auto& t = base.train;
  auto set = [&](auto& field) { return [&field, &file](const YAML::Node& n) { detail::yaml_read(n, file, field); }; };

  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "seed" && key != "vision" && key != "text" && key != "fusion" && key != "train") {
      throw ParseError(file, detail::yaml_line(kv.first), "unknown key '" + key + "'");
    }
  }
  if (root["seed"]) detail::yaml_read(root["seed"], file, m.seed);
  detail::yaml_section(root["vision"], "vision", file,
                       {{"image_size", set(m.vision.image_size)},
                        {"patch_size", set(m.vision.patch_size)},
                        {"dim", set(m.vision.dim)},
                        {"depth", set(m.vision.depth)},
                        {"heads", set(m.vision.heads)},
                        {"mlp_ratio", set(m.vision.mlp_ratio)}});
  detail::yaml_section(root["text"], "text", file,
                       {{"context_length", set(m.text.context_length)},
                        {"depth", set(m.text.depth)},
                        {"heads", set(m.text.heads)},
                        {"mlp_ratio", set(m.text.mlp_ratio)}});
  detail::yaml_section(root["fusion"], "fusion", file,
                       {{"enabled", set(m.use_fusion)},
                        {"blocks", set(m.fusion.blocks)},
                        {"heads", set(m.fusion.heads)},
                        {"mlp_ratio", set(m.fusion.mlp_ratio)}});
  detail::yaml_section(root["train"], "train", file,
                       {{"lr", set(t.lr)},
                        {"weight_decay", set(t.weight_decay)},
                        {"epochs", set(t.epochs)},
                        {"batch_size", set(t.batch_size)},
                        {"seed", set(t.seed)},
                        {"frames", set(t.frames)},
                        {"freeze_encoders", set(t.freeze_encoders)}});
  return base;
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  return parse_run_config(detail::read_text(path), path.string(), base);
}

inline std::string run_config_yaml(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  YAML::Emitter out;
  out.SetDoublePrecision(12);
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << m.seed;
  out << YAML::Key << "vision" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "image_size" << YAML::Value << m.vision.image_size;
  out << YAML::Key << "patch_size" << YAML::Value << m.vision.patch_size;
  out << YAML::Key << "dim" << YAML::Value << m.vision.dim;
  out << YAML::Key << "depth" << YAML::Value << m.vision.depth;
  out << YAML::Key << "heads" << YAML::Value << m.vision.heads;
  out << YAML::Key << "mlp_ratio" << YAML::Value << m.vision.mlp_ratio << YAML::EndMap;
  out << YAML::Key << "text" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "context_length" << YAML::Value << m.text.context_length;
  out << YAML::Key << "depth" << YAML::Value << m.text.depth;
  out << YAML::Key << "heads" << YAML::Value << m.text.heads;
  out << YAML::Key << "mlp_ratio" << YAML::Value << m.text.mlp_ratio << YAML::EndMap;
  out << YAML::Key << "fusion" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << m.use_fusion;
  out << YAML::Key << "blocks" << YAML::Value << m.fusion.blocks;
  out << YAML::Key << "heads" << YAML::Value << m.fusion.heads;
  out << YAML::Key << "mlp_ratio" << YAML::Value << m.fusion.mlp_ratio << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lr" << YAML::Value << t.lr;
  out << YAML::Key << "weight_decay" << YAML::Value << t.weight_decay;
  out << YAML::Key << "epochs" << YAML::Value << t.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::Key << "frames" << YAML::Value << t.frames;
  out << YAML::Key << "freeze_encoders" << YAML::Value << t.freeze_encoders << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace vtf
