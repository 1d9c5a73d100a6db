#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vtf/binary_io.hpp"
#include "vtf/metrics.hpp"
#include "vtf/parallel.hpp"
#include "vtf/schema.hpp"
#include "vtf/vision.hpp"

namespace vtf {

namespace fs = std::filesystem;

struct Tracklet {
  std::string id;
  std::string split;
  std::vector<Frame> frames;
  LabelVector labels;
  /// Generator metadata: 1 where a frame was replaced by noise.
  std::vector<std::uint8_t> occluded;
};

struct Dataset {
  AttributeSchema schema;
  std::vector<Tracklet> train;
  std::vector<Tracklet> test;

  const std::vector<Tracklet>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "test") return test;
    throw UsageError("unknown split '" + name + "' (expected train or test)");
  }
};

// ---- frame files ------------------------------------------------------------
// "VTFIMG01", i32 height, i32 width, then height*width*3 f32, all little-endian.

inline constexpr std::string_view kFrameMagic = "VTFIMG01";

inline std::vector<char> encode_frame(const Frame& f) {
  io::ByteWriter w;
  w.raw(kFrameMagic);
  w.i32(static_cast<std::int32_t>(f.height));
  w.i32(static_cast<std::int32_t>(f.width));
  for (float v : f.rgb) w.f32(v);
  return w.bytes();
}

inline void write_frame(const fs::path& path, const Frame& f) { io::write_file(path, encode_frame(f)); }

inline Frame decode_frame(const std::vector<char>& bytes, const std::string& name) {
  io::ByteReader r(bytes, name);
  if (bytes.size() < kFrameMagic.size() || r.raw(kFrameMagic.size()) != kFrameMagic) {
    throw CorruptFileError(name + ": bad frame header");
  }
  const std::int32_t h = r.i32(), w = r.i32();
  if (h <= 0 || w <= 0) throw CorruptFileError(name + ": bad frame dimensions");
  const auto n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3;
  if (r.remaining() != n * 4) {
    throw CorruptFileError(name + ": expected " + std::to_string(n * 4) + " pixel bytes, found " +
                           std::to_string(r.remaining()));
  }
  std::vector<float> px(n);
  for (auto& v : px) v = r.f32();
  try {
    return Frame(static_cast<std::size_t>(h), static_cast<std::size_t>(w), std::move(px));
  } catch (const Error& e) {
    throw CorruptFileError(name + ": " + e.what());
  }
}

inline Frame read_frame(const fs::path& path) { return decode_frame(io::read_file(path), path.string()); }

// ---- synthetic generator ----------------------------------------------------

struct SyntheticSpec {
  std::size_t count = 700;
  std::size_t frames = 6;
  std::size_t height = 32;
  std::size_t width = 16;
  double noise = 0.1;
  double occlusion = 0.3;
  double split = 500.0 / 700.0;
  std::uint64_t seed = 1;
  /// Side of the coarse grid cells the class prototypes are drawn on.
  std::size_t prototype_cell = 2;
  /// RMS of one class prototype.
  double amplitude = 0.1;

  std::size_t train_count() const { return static_cast<std::size_t>(std::llround(static_cast<double>(count) * split)); }

  void validate() const {
    if (count < 2) throw UsageError("tracklet count must be at least 2");
    if (frames < 1) throw UsageError("frames per tracklet must be at least 1");
    if (height < 1 || width < 1) throw UsageError("frame size must be positive");
    if (!(noise >= 0)) throw UsageError("noise sigma must be >= 0");
    if (!(occlusion >= 0 && occlusion < 1)) throw UsageError("occlusion probability must be in [0, 1)");
    if (!(split > 0 && split < 1)) throw UsageError("split fraction must be in (0, 1)");
    if (train_count() == 0 || train_count() == count) throw UsageError("split leaves one side empty");
    if (prototype_cell < 1) throw UsageError("prototype cell must be at least 1");
    if (!(amplitude > 0)) throw UsageError("prototype amplitude must be positive");
  }
};

namespace detail {

inline std::mt19937_64 derived_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Smooth random pattern: N(0,1) on a coarse grid, bilinearly upsampled,
// scaled to the requested RMS. [height][width][3]
inline std::vector<double> prototype(const SyntheticSpec& spec, std::size_t cls) {
  auto rng = derived_rng(spec.seed, 0x70726f74, cls);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t gh = (spec.height + spec.prototype_cell - 1) / spec.prototype_cell + 1;
  const std::size_t gw = (spec.width + spec.prototype_cell - 1) / spec.prototype_cell + 1;
  std::vector<double> grid(gh * gw * 3);
  for (auto& v : grid) v = normal(rng);
  std::vector<double> out(spec.height * spec.width * 3);
  const double cell = static_cast<double>(spec.prototype_cell);
  double energy = 0;
  for (std::size_t y = 0; y < spec.height; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / cell;
    const auto y0 = std::min(static_cast<std::size_t>(fy), gh - 2);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / cell;
      const auto x0 = std::min(static_cast<std::size_t>(fx), gw - 2);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        auto g = [&](std::size_t yy, std::size_t xx) { return grid[(yy * gw + xx) * 3 + c]; };
        const double v = (g(y0, x0) * (1 - wx) + g(y0, x0 + 1) * wx) * (1 - wy) +
                         (g(y0 + 1, x0) * (1 - wx) + g(y0 + 1, x0 + 1) * wx) * wy;
        out[(y * spec.width + x) * 3 + c] = v;
        energy += v * v;
      }
    }
  }
  const double k = spec.amplitude / std::sqrt(energy / static_cast<double>(out.size()));
  for (auto& v : out) v *= k;
  return out;
}

inline LabelVector sample_labels(const AttributeSchema& schema, std::mt19937_64& rng) {
  LabelVector labels(schema.class_count(), 0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t g = 0; g < schema.groups().size(); ++g) {
    const auto& group = schema.groups()[g];
    const std::size_t off = schema.group_offset(g), n = group.classes.size();
    if (group.kind == GroupKind::Exclusive) {
      labels[off + std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1;
    } else {
      for (std::size_t c = 0; c < n; ++c) labels[off + c] = coin(rng) ? 1 : 0;
    }
  }
  return labels;
}

}  // namespace detail

/// In-memory planted-signal tracklets. A frame is a mid-gray canvas plus the
/// prototypes of the active classes plus N(0, noise^2) pixel noise, clipped to
/// [0, 1]; with probability `occlusion` the prototypes are left out (the frame is
/// canvas plus noise only). The first
/// train_count() tracklets form the train split.
inline std::vector<Tracklet> synthesize(const SyntheticSpec& spec, const AttributeSchema& schema) {
  spec.validate();
  const std::size_t classes = schema.class_count();
  std::vector<std::vector<double>> protos(classes);
  parallel_for(classes, [&](std::size_t c) { protos[c] = detail::prototype(spec, c); });

  const std::size_t n_train = spec.train_count();
  std::vector<Tracklet> out(spec.count);
  parallel_for(spec.count, [&](std::size_t i) {
    auto rng = detail::derived_rng(spec.seed, 0x7472616b, i);
    Tracklet t;
    const bool train = i < n_train;
    const std::size_t local = train ? i : i - n_train;
    t.split = train ? "train" : "test";
    char id[32];
    std::snprintf(id, sizeof id, "%s_%06zu", t.split.c_str(), local);
    t.id = id;
    t.labels = detail::sample_labels(schema, rng);
    const std::size_t npx = spec.height * spec.width * 3;
    std::vector<double> content(npx, 0.5);
    for (std::size_t c = 0; c < classes; ++c) {
      if (!t.labels[c]) continue;
      for (std::size_t k = 0; k < npx; ++k) content[k] += protos[c][k];
    }
    std::bernoulli_distribution occlude(spec.occlusion);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t f = 0; f < spec.frames; ++f) {
      const bool occ = occlude(rng);
      std::vector<float> px(npx);
      for (std::size_t k = 0; k < npx; ++k) {
        const double v = (occ ? 0.5 : content[k]) + spec.noise * noise(rng);
        px[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      t.frames.emplace_back(spec.height, spec.width, std::move(px));
      t.occluded.push_back(occ ? 1 : 0);
    }
    out[i] = std::move(t);
  });
  return out;
}

// ---- on-disk dataset ----------------------------------------------------------

inline std::string labels_yaml(const Tracklet& t, const AttributeSchema& schema) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "id" << YAML::Value << t.id;
  out << YAML::Key << "split" << YAML::Value << t.split;
  out << YAML::Key << "labels" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto v : t.labels) out << static_cast<int>(v);
  out << YAML::EndSeq;
  out << YAML::Key << "active" << YAML::Value << YAML::BeginMap;
  for (std::size_t g = 0; g < schema.groups().size(); ++g) {
    const auto& group = schema.groups()[g];
    out << YAML::Key << group.name << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (std::size_t c = 0; c < group.classes.size(); ++c) {
      if (t.labels[schema.group_offset(g) + c]) out << group.classes[c].name;
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  out << YAML::Key << "occluded" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto v : t.occluded) out << static_cast<int>(v);
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

namespace detail {
inline void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline std::string frame_file_name(std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu.vtf", i);
  return name;
}
}  // namespace detail

/// Writes schema.yaml, manifest.yaml and data/<split>/<id>/ trees under `root`.
/// Returns the manifest path.
inline fs::path generate(const SyntheticSpec& spec, const AttributeSchema& schema, const fs::path& root) {
  const auto tracklets = synthesize(spec, schema);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw DataError(root.string() + ": cannot create directory");
  detail::write_text(root / "schema.yaml", schema_to_yaml(schema));

  YAML::Emitter m;
  m.SetDoublePrecision(12);
  m << YAML::BeginMap;
  m << YAML::Key << "format" << YAML::Value << "vtf-dataset/1";
  m << YAML::Key << "schema" << YAML::Value << "schema.yaml";
  m << YAML::Key << "generator" << YAML::Value << YAML::Flow << YAML::BeginMap;
  m << YAML::Key << "seed" << YAML::Value << spec.seed;
  m << YAML::Key << "count" << YAML::Value << spec.count;
  m << YAML::Key << "frames" << YAML::Value << spec.frames;
  m << YAML::Key << "height" << YAML::Value << spec.height;
  m << YAML::Key << "width" << YAML::Value << spec.width;
  m << YAML::Key << "noise" << YAML::Value << spec.noise;
  m << YAML::Key << "occlusion" << YAML::Value << spec.occlusion;
  m << YAML::Key << "split" << YAML::Value << spec.split;
  m << YAML::EndMap;
  m << YAML::Key << "tracklets" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : tracklets) {
    const fs::path rel = fs::path(t.split) / t.id;
    m << YAML::Flow << YAML::BeginMap << YAML::Key << "id" << YAML::Value << t.id << YAML::Key << "split"
      << YAML::Value << t.split << YAML::Key << "dir" << YAML::Value << rel.generic_string() << YAML::Key << "labels"
      << YAML::Value << (rel / "labels.yaml").generic_string() << YAML::EndMap;
  }
  m << YAML::EndSeq << YAML::EndMap;

  parallel_for(tracklets.size(), [&](std::size_t i) {
    const auto& t = tracklets[i];
    const fs::path dir = root / t.split / t.id;
    std::error_code e;
    fs::create_directories(dir, e);
    if (e) throw DataError(dir.string() + ": cannot create directory");
    for (std::size_t f = 0; f < t.frames.size(); ++f) write_frame(dir / detail::frame_file_name(f), t.frames[f]);
    detail::write_text(dir / "labels.yaml", labels_yaml(t, schema));
  });
  const fs::path manifest = root / "manifest.yaml";
  detail::write_text(manifest, std::string(m.c_str()) + "\n");
  return manifest;
}

namespace detail {
inline YAML::Node load_yaml_file(const fs::path& path) {
  return yaml_parse(read_text(path), path.string());
}

inline LabelVector parse_label_record(const fs::path& path, const AttributeSchema& schema, std::string& id_out) {
  const auto file = path.string();
  const YAML::Node root = load_yaml_file(path);
  if (!root.IsMap()) throw ParseError(file, 1, "label record must be a mapping");
  const auto labels = root["labels"];
  if (!labels || !labels.IsSequence()) throw ParseError(file, yaml_line(root), "missing 'labels' list");
  LabelVector out;
  for (const auto& v : labels) {
    int x = -1;
    try {
      x = v.as<int>();
    } catch (const YAML::Exception&) {
    }
    if (x != 0 && x != 1) throw ParseError(file, yaml_line(v), "label values must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(x));
  }
  if (const auto problem = schema.label_problem(out); !problem.empty()) {
    throw SchemaMismatchError(file + ":" + std::to_string(yaml_line(labels)) + ": " + problem);
  }
  if (root["id"]) id_out = root["id"].as<std::string>();
  return out;
}
}  // namespace detail

/// Reads a manifest and everything it references, validating as it goes.
inline Dataset load_dataset(const fs::path& manifest_path) {
  const auto file = manifest_path.string();
  const fs::path base = manifest_path.parent_path();
  const YAML::Node root = detail::load_yaml_file(manifest_path);
  if (!root.IsMap()) throw ParseError(file, 1, "manifest must be a mapping");
  const auto schema_rel = detail::yaml_string(root, "schema", file);
  Dataset ds{load_schema(base / schema_rel), {}, {}};
  const auto list = root["tracklets"];
  if (!list || !list.IsSequence()) throw ParseError(file, detail::yaml_line(root), "missing 'tracklets' list");
  std::vector<YAML::Node> entries(list.begin(), list.end());
  std::vector<Tracklet> loaded(entries.size());
  std::vector<fs::path> dirs(entries.size()), label_files(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    Tracklet& t = loaded[i];
    t.id = detail::yaml_string(e, "id", file);
    t.split = detail::yaml_string(e, "split", file);
    if (t.split != "train" && t.split != "test") {
      throw ParseError(file, detail::yaml_line(e), "split must be 'train' or 'test'");
    }
    const fs::path dir = base / detail::yaml_string(e, "dir", file);
    if (!fs::is_directory(dir)) throw MissingFileError(dir.string() + ": tracklet directory missing");
    dirs[i] = dir;
    label_files[i] = e["labels"] ? base / detail::yaml_string(e, "labels", file) : dir / "labels.yaml";
  }
  parallel_for(entries.size(), [&](std::size_t i) {
    Tracklet& t = loaded[i];
    const fs::path& dir = dirs[i];
    std::string id;
    t.labels = detail::parse_label_record(label_files[i], ds.schema, id);
    std::vector<fs::path> frames;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".vtf") frames.push_back(entry.path());
    }
    std::sort(frames.begin(), frames.end());
    if (frames.empty()) throw MissingFileError(dir.string() + ": no frame files");
    for (const auto& f : frames) t.frames.push_back(read_frame(f));
  });
  for (auto& t : loaded) (t.split == "train" ? ds.train : ds.test).push_back(std::move(t));
  return ds;
}

}  // namespace vtf
