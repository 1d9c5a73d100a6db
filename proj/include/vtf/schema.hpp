#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vtf/error.hpp"
#include "vtf/prompt.hpp"

namespace vtf {

enum class GroupKind { Exclusive, Binary };

inline std::string_view kind_name(GroupKind k) { return k == GroupKind::Exclusive ? "exclusive" : "binary"; }

struct AttributeClass {
  std::string name;
  std::string raw;
};

/// Exclusive groups have exactly one positive class per tracklet; in binary
/// groups every class is an independent yes/no attribute.
struct AttributeGroup {
  std::string name;
  GroupKind kind = GroupKind::Binary;
  std::vector<AttributeClass> classes;
};

class AttributeSchema {
 public:
  AttributeSchema(std::vector<AttributeGroup> groups, PromptTemplate tpl = {})
      : groups_(std::move(groups)), template_(std::move(tpl)) {
    if (groups_.empty()) throw ContractError("schema has no groups");
    std::set<std::string> group_names;
    for (const auto& g : groups_) {
      if (g.name.empty()) throw ContractError("schema group with empty name");
      if (!group_names.insert(g.name).second) throw ContractError("duplicate group name '" + g.name + "'");
      if (g.classes.empty()) throw ContractError("group '" + g.name + "' has no classes");
      if (g.kind == GroupKind::Exclusive && g.classes.size() < 2) {
        throw ContractError("exclusive group '" + g.name + "' needs at least two classes");
      }
      std::set<std::string> class_names;
      offsets_.push_back(class_count_);
      for (const auto& c : g.classes) {
        if (c.name.empty()) throw ContractError("group '" + g.name + "' has a class with empty name");
        if (!class_names.insert(c.name).second) {
          throw ContractError("duplicate class '" + c.name + "' in group '" + g.name + "'");
        }
        if (c.raw.empty()) throw ContractError("class '" + c.name + "' in group '" + g.name + "' has no raw string");
        ++class_count_;
      }
    }
  }

  const std::vector<AttributeGroup>& groups() const { return groups_; }
  const PromptTemplate& prompt_template() const { return template_; }
  std::size_t class_count() const { return class_count_; }
  std::size_t group_offset(std::size_t g) const { return offsets_.at(g); }

  /// Raw attribute strings in class order.
  std::vector<std::string> raw_attributes() const {
    std::vector<std::string> out;
    for (const auto& g : groups_)
      for (const auto& c : g.classes) out.push_back(c.raw);
    return out;
  }

  /// split -> expand -> prompt for every class, in class order.
  std::vector<std::string> sentences() const {
    std::vector<std::string> out;
    for (const auto& raw : raw_attributes()) out.push_back(template_.apply(split_expand(raw)));
    return out;
  }

  /// Empty string when `labels` is a valid label vector, else a description of the problem.
  std::string label_problem(std::span<const std::uint8_t> labels) const {
    if (labels.size() != class_count_) {
      return "label vector has " + std::to_string(labels.size()) + " entries, schema has " +
             std::to_string(class_count_) + " classes";
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      std::size_t positives = 0;
      for (std::size_t c = 0; c < groups_[g].classes.size(); ++c) {
        const auto v = labels[offsets_[g] + c];
        if (v > 1) return "label values must be 0 or 1";
        positives += v;
      }
      if (groups_[g].kind == GroupKind::Exclusive && positives != 1) {
        return "exclusive group '" + groups_[g].name + "' has " + std::to_string(positives) + " positives";
      }
    }
    return {};
  }

 private:
  std::vector<AttributeGroup> groups_;
  PromptTemplate template_;
  std::vector<std::size_t> offsets_;
  std::size_t class_count_ = 0;
};

namespace detail {

inline int yaml_line(const YAML::Node& n) { return n.Mark().line + 1; }

inline std::string yaml_string(const YAML::Node& parent, const char* key, const std::string& file) {
  const auto n = parent[key];
  if (!n || !n.IsScalar()) throw ParseError(file, yaml_line(parent), std::string("missing string field '") + key + "'");
  return n.as<std::string>();
}

inline YAML::Node yaml_parse(const std::string& text, const std::string& file) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(file, e.mark.line + 1, e.msg);
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string() + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace detail

inline AttributeSchema parse_schema(const std::string& text, const std::string& file = "<schema>") {
  const YAML::Node root = detail::yaml_parse(text, file);
  if (!root.IsMap()) throw ParseError(file, 1, "schema must be a mapping");
  PromptTemplate tpl;
  if (root["template"]) {
    try {
      tpl = PromptTemplate(root["template"].as<std::string>());
    } catch (const ContractError& e) {
      throw ParseError(file, detail::yaml_line(root["template"]), e.what());
    }
  }
  const auto groups = root["groups"];
  if (!groups || !groups.IsSequence()) throw ParseError(file, detail::yaml_line(root), "missing 'groups' list");
  std::vector<AttributeGroup> out;
  std::set<std::string> seen_groups;
  for (const auto& g : groups) {
    AttributeGroup group;
    group.name = detail::yaml_string(g, "name", file);
    if (!seen_groups.insert(group.name).second) {
      throw ParseError(file, detail::yaml_line(g), "duplicate group name '" + group.name + "'");
    }
    const auto kind = detail::yaml_string(g, "kind", file);
    if (kind == "exclusive") {
      group.kind = GroupKind::Exclusive;
    } else if (kind == "binary") {
      group.kind = GroupKind::Binary;
    } else {
      throw ParseError(file, detail::yaml_line(g["kind"]), "group kind must be 'exclusive' or 'binary'");
    }
    const auto classes = g["classes"];
    if (!classes || !classes.IsSequence() || classes.size() == 0) {
      throw ParseError(file, detail::yaml_line(g), "group '" + group.name + "' needs a non-empty 'classes' list");
    }
    std::set<std::string> seen_classes;
    for (const auto& c : classes) {
      AttributeClass cls{detail::yaml_string(c, "name", file), detail::yaml_string(c, "raw", file)};
      if (!seen_classes.insert(cls.name).second) {
        throw ParseError(file, detail::yaml_line(c), "duplicate class '" + cls.name + "' in group '" + group.name + "'");
      }
      if (cls.raw.empty()) throw ParseError(file, detail::yaml_line(c), "empty raw attribute string");
      group.classes.push_back(std::move(cls));
    }
    if (group.kind == GroupKind::Exclusive && group.classes.size() < 2) {
      throw ParseError(file, detail::yaml_line(g), "exclusive group '" + group.name + "' needs at least two classes");
    }
    out.push_back(std::move(group));
  }
  if (root["classes"]) {
    std::size_t total = 0;
    for (const auto& g : out) total += g.classes.size();
    if (root["classes"].as<std::size_t>() != total) {
      throw ParseError(file, detail::yaml_line(root["classes"]),
                       "declared class count " + root["classes"].as<std::string>() + " but groups hold " +
                           std::to_string(total));
    }
  }
  try {
    return AttributeSchema(std::move(out), std::move(tpl));
  } catch (const ContractError& e) {
    throw ParseError(file, 1, e.what());
  }
}

inline AttributeSchema load_schema(const std::filesystem::path& path) {
  return parse_schema(detail::read_text(path), path.string());
}

inline std::string schema_to_yaml(const AttributeSchema& schema) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "template" << YAML::Value << YAML::DoubleQuoted << schema.prompt_template().text();
  out << YAML::Key << "classes" << YAML::Value << schema.class_count();
  out << YAML::Key << "groups" << YAML::Value << YAML::BeginSeq;
  for (const auto& g : schema.groups()) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << g.name;
    out << YAML::Key << "kind" << YAML::Value << std::string(kind_name(g.kind));
    out << YAML::Key << "classes" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : g.classes) {
      out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << c.name << YAML::Key << "raw"
          << YAML::Value << YAML::DoubleQuoted << c.raw << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

/// 14 groups, 43 classes.
inline const std::string& default_schema_text() {
  static const std::string text = R"(# Pedestrian attribute schema: 14 groups, 43 classes.
template: "the pedestrian has an attribute {}"
classes: 43
groups:
  - name: top length
    kind: exclusive
    classes:
      - {name: long, raw: "topLength_long"}
      - {name: short, raw: "topLength_short"}
  - name: bottom length
    kind: binary
    classes:
      - {name: short, raw: "bottomLength_short"}
  - name: shoulder bag
    kind: binary
    classes:
      - {name: yes, raw: "shoulderBag"}
  - name: backpack
    kind: binary
    classes:
      - {name: yes, raw: "backpack"}
  - name: hat
    kind: binary
    classes:
      - {name: yes, raw: "hat"}
  - name: hand bag
    kind: binary
    classes:
      - {name: yes, raw: "handBag"}
  - name: hair
    kind: exclusive
    classes:
      - {name: short, raw: "hair_short"}
      - {name: long, raw: "hair_long"}
  - name: gender
    kind: exclusive
    classes:
      - {name: male, raw: "gender_male"}
      - {name: female, raw: "gender_female"}
  - name: bottom type
    kind: exclusive
    classes:
      - {name: dress, raw: "bottomType_dress"}
      - {name: pants, raw: "bottomType_pants"}
  - name: pose
    kind: exclusive
    classes:
      - {name: frontal, raw: "pose_frontal"}
      - {name: lateral frontal, raw: "pose_lateralFrontal"}
      - {name: lateral back, raw: "pose_lateralBack"}
      - {name: back, raw: "pose_back"}
  - name: motion
    kind: exclusive
    classes:
      - {name: walking, raw: "motion_walking"}
      - {name: running, raw: "motion_running"}
      - {name: riding, raw: "motion_riding"}
      - {name: staying, raw: "motion_staying"}
      - {name: various, raw: "motion_various"}
  - name: top color
    kind: exclusive
    classes:
      - {name: black, raw: "topColor_black"}
      - {name: purple, raw: "topColor_purple"}
      - {name: green, raw: "topColor_green"}
      - {name: blue, raw: "topColor_blue"}
      - {name: gray, raw: "topColor_gray"}
      - {name: white, raw: "topColor_white"}
      - {name: yellow, raw: "topColor_yellow"}
      - {name: red, raw: "topColor_red"}
  - name: bottom color
    kind: exclusive
    classes:
      - {name: black, raw: "bottomColor_black"}
      - {name: white, raw: "bottomColor_white"}
      - {name: purple, raw: "bottomColor_purple"}
      - {name: gray, raw: "bottomColor_gray"}
      - {name: blue, raw: "bottomColor_blue"}
      - {name: green, raw: "bottomColor_green"}
      - {name: pink, raw: "bottomColor_pink"}
      - {name: yellow, raw: "bottomColor_yellow"}
      - {name: red, raw: "bottomColor_red"}
  - name: age
    kind: exclusive
    classes:
      - {name: up to 15, raw: "Age ≤ 15"}
      - {name: up to 30, raw: "Age ≤ 30"}
      - {name: up to 40, raw: "Age ≤ 40"}
      - {name: over 40, raw: "Age > 40"}
)";
  return text;
}

inline AttributeSchema default_schema() { return parse_schema(default_schema_text(), "<default schema>"); }

}  // namespace vtf
