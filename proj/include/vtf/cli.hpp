#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vtf/config.hpp"
#include "vtf/data.hpp"
#include "vtf/metrics.hpp"
#include "vtf/model.hpp"
#include "vtf/param.hpp"
#include "vtf/train.hpp"
#include "vtf/verify.hpp"

namespace vtf {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int data = 2;
inline constexpr int verification = 3;
}  // namespace exit_code

namespace cli {

namespace fs = std::filesystem;

/// Accepts a dataset directory or the manifest file itself.
inline fs::path resolve_manifest(const fs::path& p) {
  if (fs::is_directory(p)) return p / "manifest.yaml";
  return p;
}

inline AttributeSchema schema_from(const std::string& path) {
  return path.empty() ? default_schema() : load_schema(path);
}

/// Flags that override the config file. Unset flags leave the file or the
/// defaults alone.
struct RunOverrides {
  std::string config;
  std::optional<double> lr, weight_decay;
  std::optional<std::size_t> epochs, batch_size, frames;
  std::optional<std::uint64_t> seed, model_seed;
  bool no_fusion = false;
  bool unfreeze = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "model/training YAML");
    app.add_option("--lr", lr, "learning rate");
    app.add_option("--weight-decay", weight_decay, "decoupled weight decay");
    app.add_option("--epochs", epochs, "training epochs");
    app.add_option("--batch-size", batch_size, "tracklets per step");
    app.add_option("--frames", frames, "frames sampled per tracklet");
    app.add_option("--seed", seed, "shuffle seed");
    app.add_option("--model-seed", model_seed, "parameter init seed");
    app.add_flag("--no-fusion", no_fusion, "replace the fusion transformer by a per-token linear layer");
    app.add_flag("--unfreeze", unfreeze, "train the encoders too");
  }

  RunConfig resolve(RunConfig base = {}) const {
    RunConfig c = config.empty() ? base : load_run_config(config, base);
    if (lr) c.train.lr = *lr;
    if (weight_decay) c.train.weight_decay = *weight_decay;
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (frames) c.train.frames = *frames;
    if (seed) c.train.seed = *seed;
    if (model_seed) c.model.seed = *model_seed;
    if (no_fusion) c.model.use_fusion = false;
    if (unfreeze) c.train.freeze_encoders = false;
    c.model.validate();
    c.train.validate();
    return c;
  }
};

inline int cmd_gen_data(const std::string& out_dir, const std::string& schema_path, const SyntheticSpec& spec,
                        std::ostream& out) {
  const auto schema = schema_from(schema_path);
  out << generate(spec, schema, out_dir).string() << "\n";
  return exit_code::ok;
}

inline int cmd_train(const std::string& data, const RunOverrides& o, const std::string& out_dir,
                     std::size_t checkpoint_every, std::ostream& out) {
  const auto cfg = o.resolve();
  const auto ds = load_dataset(resolve_manifest(data));
  VtfModel<float> model(ds.schema, cfg.model);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  out << "epoch\tmean_loss\theldout_macro_f1\n";
  const auto result = train(model, ds.train, ds.schema, cfg.train, &ds.test, [&](const EpochLog& row) {
    out << row.epoch << "\t" << fixed4(row.mean_loss) << "\t" << fixed4(row.heldout_f1) << "\n" << std::flush;
    if (checkpoint_every && row.epoch % checkpoint_every == 0 && row.epoch < cfg.train.epochs) {
      save_checkpoint(model.params(), dir / ("model_epoch" + std::to_string(row.epoch) + ".vtfp"));
    }
  });
  save_checkpoint(model.params(), dir / "model.vtfp");
  detail::write_text(dir / "train_log.tsv", log_tsv(result.log));
  detail::write_text(dir / "config.yaml", run_config_yaml(cfg));
  out << "checkpoint\t" << (dir / "model.vtfp").string() << "\n";
  return exit_code::ok;
}

/// Builds the model for evaluation: the checkpoint's weights, or a fresh
/// random initialization when `init_seed` is given instead.
inline VtfModel<float> eval_model(const AttributeSchema& schema, RunConfig cfg, const std::string& checkpoint,
                                  std::optional<std::uint64_t> init_seed) {
  if (init_seed) {
    cfg.model.seed = *init_seed;
    return VtfModel<float>(schema, cfg.model);
  }
  const auto state = load_checkpoint(checkpoint);
  if (state.count("fusion_fc.weight")) cfg.model.use_fusion = false;
  VtfModel<float> model(schema, cfg.model);
  load_state(model.params(), state);
  return model;
}

inline int cmd_eval(const std::string& data, const std::string& checkpoint, std::optional<std::uint64_t> init_seed,
                    const RunOverrides& o, const std::string& split, std::string report, std::ostream& out) {
  if (checkpoint.empty() == !init_seed) throw UsageError("eval needs exactly one of --checkpoint or --init-seed");
  RunConfig base;
  if (o.config.empty() && !checkpoint.empty()) {
    const auto sidecar = fs::path(checkpoint).parent_path() / "config.yaml";
    if (fs::exists(sidecar)) base = load_run_config(sidecar);
  }
  const auto cfg = o.resolve(base);
  const auto ds = load_dataset(resolve_manifest(data));
  const auto& tracklets = ds.split(split);
  const auto model = eval_model(ds.schema, cfg, checkpoint, init_seed);
  const auto r = evaluate_model(model, tracklets, ds.schema, cfg.train.frames);
  if (report.empty()) {
    const auto dir = checkpoint.empty() ? fs::path(".") : fs::path(checkpoint).parent_path();
    report = (dir / ("eval_" + split + ".tsv")).string();
  }
  out << report_tsv(r);
  detail::write_text(report, report_tsv(r));
  detail::write_text(fs::path(report).replace_extension(".yaml"), report_yaml(r));
  return exit_code::ok;
}

struct FrameAblationRow {
  std::size_t frames = 0;
  MetricReport report;
};

/// Trains and scores one model per frame budget, all from the same seeds.
inline std::vector<FrameAblationRow> ablate_frames(const Dataset& ds, const RunConfig& cfg,
                                                   const std::vector<std::size_t>& counts) {
  std::vector<FrameAblationRow> rows;
  for (auto n : counts) {
    auto c = cfg;
    c.train.frames = n;
    VtfModel<float> model(ds.schema, c.model);
    train(model, ds.train, ds.schema, c.train);
    rows.push_back({n, evaluate_model(model, ds.test, ds.schema, n)});
  }
  return rows;
}

inline std::string ablation_tsv(const std::vector<FrameAblationRow>& rows) {
  std::string s = "frames\tprecision\trecall\tf1\n";
  for (const auto& r : rows) {
    s += std::to_string(r.frames) + "\t" + fixed4(r.report.precision) + "\t" + fixed4(r.report.recall) + "\t" +
         fixed4(r.report.f1) + "\n";
  }
  return s;
}

inline int cmd_ablate_frames(const std::string& data, const RunOverrides& o, const std::vector<std::size_t>& counts,
                             const std::string& out_path, std::ostream& out) {
  if (counts.empty()) throw UsageError("ablate-frames needs at least one frame count");
  for (auto n : counts)
    if (n < 1) throw UsageError("frame counts must be at least 1");
  const auto cfg = o.resolve();
  const auto ds = load_dataset(resolve_manifest(data));
  const auto tsv = ablation_tsv(ablate_frames(ds, cfg, counts));
  out << tsv;
  detail::write_text(out_path, tsv);
  return exit_code::ok;
}

inline std::optional<OpKind> op_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(OpKind::Gather); ++k) {
    if (op_name(static_cast<OpKind>(k)) == name) return static_cast<OpKind>(k);
  }
  return std::nullopt;
}

inline int cmd_gradcheck(const std::string& corrupt, std::ostream& out) {
  struct FaultGuard {
    ~FaultGuard() { testing::backward_fault().reset(); }
  } guard;
  if (!corrupt.empty()) {
    const auto kind = op_from_name(corrupt);
    if (!kind || *kind == OpKind::Leaf) throw UsageError("--corrupt: unknown op kind '" + corrupt + "'");
    testing::backward_fault() = *kind;
  }
  const auto report = run_gradcheck();
  out << gradcheck_tsv(report);
  out << "gradcheck\t" << (report.passed() ? "PASS" : "FAIL") << "\n";
  return report.passed() ? exit_code::ok : exit_code::verification;
}

inline int cmd_dump_prompts(const std::string& schema_path, std::ostream& out) {
  const auto schema = schema_from(schema_path);
  for (const auto& raw : schema.raw_attributes()) {
    const auto phrase = split_expand(raw);
    out << raw << "\t" << phrase << "\t" << schema.prompt_template().apply(phrase) << "\n";
  }
  return exit_code::ok;
}

}  // namespace cli

/// Entry point of the vtfpar tool. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Video-based pedestrian attribute recognition with a fusion transformer", "vtfpar"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "write a synthetic tracklet dataset");
  std::string gen_out = "data", gen_schema;
  SyntheticSpec spec;
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--schema", gen_schema, "schema YAML (default: built-in 43-class schema)");
  gen->add_option("--count", spec.count, "number of tracklets")->capture_default_str();
  gen->add_option("--frames", spec.frames, "frames per tracklet")->capture_default_str();
  gen->add_option("--height", spec.height, "frame height")->capture_default_str();
  gen->add_option("--width", spec.width, "frame width")->capture_default_str();
  gen->add_option("--noise", spec.noise, "pixel noise sigma")->capture_default_str();
  gen->add_option("--occlusion", spec.occlusion, "per-frame occlusion probability")->capture_default_str();
  gen->add_option("--split", spec.split, "train fraction")->capture_default_str();
  gen->add_option("--amplitude", spec.amplitude, "prototype RMS")->capture_default_str();
  gen->add_option("--seed", spec.seed, "master seed")->capture_default_str();

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint and log");
  std::string tr_data = "data", tr_out = "run";
  std::size_t tr_every = 0;
  cli::RunOverrides tr_over;
  tr->add_option("--data", tr_data, "dataset directory or manifest")->capture_default_str();
  tr->add_option("--out", tr_out, "run directory")->capture_default_str();
  tr->add_option("--checkpoint-every", tr_every, "also checkpoint every k epochs");
  tr_over.attach(*tr);

  auto* ev = app.add_subcommand("eval", "score a checkpoint on one split");
  std::string ev_data = "data", ev_ckpt, ev_split = "test", ev_report;
  std::optional<std::uint64_t> ev_init;
  cli::RunOverrides ev_over;
  ev->add_option("--data", ev_data, "dataset directory or manifest")->capture_default_str();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file");
  ev->add_option("--init-seed", ev_init, "score an untrained model with this init seed instead");
  ev->add_option("--split", ev_split, "train or test")->capture_default_str();
  ev->add_option("--report", ev_report, "TSV report path (YAML mirror next to it)");
  ev_over.attach(*ev);

  auto* ab = app.add_subcommand("ablate-frames", "train and score once per frame budget");
  std::string ab_data = "data", ab_out = "ablate_frames.tsv";
  std::vector<std::size_t> ab_counts{1, 2, 4, 6};
  cli::RunOverrides ab_over;
  ab->add_option("--data", ab_data, "dataset directory or manifest")->capture_default_str();
  ab->add_option("--frame-counts", ab_counts, "comma-separated frame budgets")->delimiter(',')->capture_default_str();
  ab->add_option("--out", ab_out, "summary TSV")->capture_default_str();
  ab_over.attach(*ab);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward rule and a full model");
  std::string gc_corrupt;
  gc->add_option("--corrupt", gc_corrupt, "perturb one op's backward rule (harness self-test)");

  auto* dp = app.add_subcommand("dump-prompts", "print raw attribute, phrase and sentence per class");
  std::string dp_schema;
  dp->add_option("--schema", dp_schema, "schema YAML (default: built-in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::usage;
  }

  try {
    if (*gen) return cli::cmd_gen_data(gen_out, gen_schema, spec, out);
    if (*tr) return cli::cmd_train(tr_data, tr_over, tr_out, tr_every, out);
    if (*ev) return cli::cmd_eval(ev_data, ev_ckpt, ev_init, ev_over, ev_split, ev_report, out);
    if (*ab) return cli::cmd_ablate_frames(ab_data, ab_over, ab_counts, ab_out, out);
    if (*gc) return cli::cmd_gradcheck(gc_corrupt, out);
    if (*dp) return cli::cmd_dump_prompts(dp_schema, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return exit_code::data;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::data;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return exit_code::data;
  }
  return exit_code::usage;
}

}  // namespace vtf
