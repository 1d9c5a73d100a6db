#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "vtf/schema.hpp"

namespace vtf {

using LabelVector = std::vector<std::uint8_t>;

/// Exclusive groups: one-hot argmax, ties to the lowest index. Binary groups: logit > 0.
template <class T>
LabelVector decide(std::span<const T> logits, const AttributeSchema& schema) {
  if (logits.size() != schema.class_count()) {
    throw DimensionError("decide: " + std::to_string(logits.size()) + " logits for " +
                         std::to_string(schema.class_count()) + " classes");
  }
  LabelVector out(logits.size(), 0);
  for (std::size_t g = 0; g < schema.groups().size(); ++g) {
    const auto& group = schema.groups()[g];
    const std::size_t off = schema.group_offset(g), n = group.classes.size();
    if (group.kind == GroupKind::Exclusive) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < n; ++c) {
        if (logits[off + c] > logits[off + best]) best = c;
      }
      out[off + best] = 1;
    } else {
      for (std::size_t c = 0; c < n; ++c) out[off + c] = logits[off + c] > T(0) ? 1 : 0;
    }
  }
  return out;
}

struct GroupScore {
  std::string group;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;  // positive ground-truth indicators
};

struct MetricReport {
  std::vector<GroupScore> groups;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t tracklets = 0;
};

/// Per-class precision/recall/F1 inside one group, averaged over classes.
/// A zero denominator scores 0 when the class occurs in truth or predictions;
/// a class that occurs in neither is left out of the average. A group in
/// which no class occurs at all scores 1.
inline GroupScore group_metrics(const std::vector<LabelVector>& preds, const std::vector<LabelVector>& truths,
                                const std::string& name, std::size_t classes) {
  if (preds.size() != truths.size()) {
    throw UsageError("group_metrics: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(truths.size()) + " ground truths");
  }
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  GroupScore out;
  out.group = name;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != classes || truths[i].size() != classes) {
      throw UsageError("group_metrics: indicator vector of wrong length for group '" + name + "'");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const bool p = preds[i][c] != 0, t = truths[i][c] != 0;
      tp[c] += p && t;
      fp[c] += p && !t;
      fn[c] += !p && t;
      out.support += t;
    }
  }
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    const double p = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    const double r = tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]) : 0.0;
    out.precision += p;
    out.recall += r;
    out.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    ++counted;
  }
  if (counted == 0) {
    out.precision = out.recall = out.f1 = 1.0;
  } else {
    out.precision /= static_cast<double>(counted);
    out.recall /= static_cast<double>(counted);
    out.f1 /= static_cast<double>(counted);
  }
  return out;
}

/// Unweighted means over groups. Macro F1 is the mean of group F1s, not the F1
/// of macro precision and recall.
inline MetricReport macro_report(std::vector<GroupScore> groups, std::size_t tracklets) {
  if (groups.empty()) throw ContractError("macro_report: no groups");
  MetricReport r;
  r.tracklets = tracklets;
  for (const auto& g : groups) {
    r.precision += g.precision;
    r.recall += g.recall;
    r.f1 += g.f1;
  }
  const auto n = static_cast<double>(groups.size());
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  r.groups = std::move(groups);
  return r;
}

/// Scores full label vectors group by group.
inline MetricReport evaluate(const std::vector<LabelVector>& preds, const std::vector<LabelVector>& truths,
                             const AttributeSchema& schema) {
  if (preds.size() != truths.size()) throw UsageError("evaluate: prediction and truth counts differ");
  std::vector<GroupScore> groups;
  for (std::size_t g = 0; g < schema.groups().size(); ++g) {
    const auto& group = schema.groups()[g];
    const std::size_t off = schema.group_offset(g), n = group.classes.size();
    std::vector<LabelVector> gp, gt;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].size() != schema.class_count() || truths[i].size() != schema.class_count()) {
        throw UsageError("evaluate: label vector length differs from schema class count");
      }
      gp.emplace_back(preds[i].begin() + static_cast<long>(off), preds[i].begin() + static_cast<long>(off + n));
      gt.emplace_back(truths[i].begin() + static_cast<long>(off), truths[i].begin() + static_cast<long>(off + n));
    }
    groups.push_back(group_metrics(gp, gt, group.name, n));
  }
  return macro_report(std::move(groups), preds.size());
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string report_tsv(const MetricReport& r) {
  std::string out = "group\tprecision\trecall\tf1\tsupport\n";
  for (const auto& g : r.groups) {
    out += g.group + "\t" + fixed4(g.precision) + "\t" + fixed4(g.recall) + "\t" + fixed4(g.f1) + "\t" +
           std::to_string(g.support) + "\n";
  }
  out += "MACRO\t" + fixed4(r.precision) + "\t" + fixed4(r.recall) + "\t" + fixed4(r.f1) + "\t" +
         std::to_string(r.tracklets) + "\n";
  return out;
}

inline std::string report_yaml(const MetricReport& r) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "tracklets" << YAML::Value << r.tracklets;
  out << YAML::Key << "macro" << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "precision" << YAML::Value << fixed4(r.precision);
  out << YAML::Key << "recall" << YAML::Value << fixed4(r.recall);
  out << YAML::Key << "f1" << YAML::Value << fixed4(r.f1) << YAML::EndMap;
  out << YAML::Key << "groups" << YAML::Value << YAML::BeginSeq;
  for (const auto& g : r.groups) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "group" << YAML::Value << g.group;
    out << YAML::Key << "precision" << YAML::Value << fixed4(g.precision);
    out << YAML::Key << "recall" << YAML::Value << fixed4(g.recall);
    out << YAML::Key << "f1" << YAML::Value << fixed4(g.f1);
    out << YAML::Key << "support" << YAML::Value << g.support << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace vtf
