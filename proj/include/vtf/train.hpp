#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vtf/data.hpp"
#include "vtf/metrics.hpp"
#include "vtf/model.hpp"
#include "vtf/parallel.hpp"

namespace vtf {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t frames = 6;
  bool freeze_encoders = true;
  /// Stop after this many optimizer steps; 0 means run every epoch fully.
  std::size_t max_steps = 0;

  void validate() const {
    if (!(lr >= 0)) throw UsageError("learning rate must be >= 0");
    if (!(weight_decay >= 0)) throw UsageError("weight decay must be >= 0");
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (batch_size < 1) throw UsageError("batch size must be at least 1");
    if (frames < 1) throw UsageError("frames per tracklet must be at least 1");
  }
};

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

/// Mean over every entry of -[y log s(z) + (1 - y) log(1 - s(z))], written as
/// softplus(z) - y z so large |z| cannot overflow.
template <class T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("bce_loss: logits " + to_string(logits.shape()) + " vs targets " +
                         to_string(targets.shape()));
  }
  for (T y : targets.data()) {
    if (y != T(0) && y != T(1)) throw ContractError("bce_loss: targets must be 0 or 1");
  }
  const auto per_entry = sub(softplus(logits), mul(targets, logits));
  return scale(sum_all(per_entry), T(1) / T(logits.numel()));
}

/// One bias-corrected Adam update with decoupled weight decay
/// (theta -= lr * wd * theta first). Frozen parameters are never touched.
template <class T>
void adam_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, AdamState<T>& state,
               double lr, double weight_decay) {
  for (const auto& [name, g] : grads) {
    if (!params.at(name).trainable) throw ContractError("gradient supplied for frozen parameter '" + name + "'");
  }
  std::vector<std::string> trainable;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    if (!grads.count(name)) throw ContractError("missing gradient for trainable parameter '" + name + "'");
    trainable.push_back(name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& name : trainable) {
    const auto& p = params.at(name);
    const auto g = grads.at(name).data();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(g.size(), T(0));
      v.assign(g.size(), T(0));
    }
    std::vector<T> theta(p.value.values());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= static_cast<T>(lr * weight_decay) * theta[i];
      m[i] = static_cast<T>(state.beta1) * m[i] + static_cast<T>(1 - state.beta1) * g[i];
      v[i] = static_cast<T>(state.beta2) * v[i] + static_cast<T>(1 - state.beta2) * g[i] * g[i];
      const T mhat = m[i] / static_cast<T>(c1);
      const T vhat = v[i] / static_cast<T>(c2);
      theta[i] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + static_cast<T>(state.eps));
    }
    params.set_value(name, Tensor<T>(p.value.shape(), std::move(theta)));
  }
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;
  /// Macro F1 on the held-out split; NaN when no held-out split was given.
  double heldout_f1 = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

inline std::vector<Frame> sampled_frames(const Tracklet& t, std::size_t budget) {
  std::vector<Frame> out;
  for (auto i : sample_frames(t.frames.size(), budget)) out.push_back(t.frames[i]);
  return out;
}

template <class T>
Tensor<T> target_matrix(const std::vector<const Tracklet*>& batch, std::size_t classes) {
  std::vector<T> y;
  for (const auto* t : batch) {
    if (t->labels.size() != classes) throw SchemaMismatchError("tracklet " + t->id + " label length mismatch");
    for (auto v : t->labels) y.push_back(static_cast<T>(v));
  }
  return Tensor<T>({batch.size(), classes}, std::move(y));
}

/// Encoder outputs for every tracklet, computed without a tape. Valid as long
/// as the encoders stay frozen.
template <class T>
std::vector<Tensor<T>> cache_visual_tokens(const VtfModel<T>& model, const std::vector<Tracklet>& data,
                                           std::size_t frames) {
  std::vector<Tensor<T>> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    Binder<T> p(model.params());
    out[i] = model.visual_tokens(p, sampled_frames(data[i], frames));
  });
  return out;
}

/// Logits [tracklets, classes] for a whole split, evaluated in fixed-size chunks.
template <class T>
std::vector<std::vector<T>> predict_logits(const VtfModel<T>& model, const std::vector<Tracklet>& data,
                                           std::size_t frames, const std::vector<Tensor<T>>* cached = nullptr) {
  std::vector<Tensor<T>> local;
  if (!cached) {
    local = cache_visual_tokens(model, data, frames);
    cached = &local;
  }
  Binder<T> p0(model.params());
  const auto text = model.text_tokens(p0);
  std::vector<std::vector<T>> out(data.size());
  constexpr std::size_t chunk = 16;
  const std::size_t chunks = (data.size() + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    Binder<T> p(model.params());
    const std::size_t begin = c * chunk, end = std::min(data.size(), begin + chunk);
    std::vector<Tensor<T>> vis(cached->begin() + static_cast<long>(begin), cached->begin() + static_cast<long>(end));
    const auto logits = model.logits_from_tokens(p, vis, text);
    const std::size_t k = model.classes();
    for (std::size_t i = begin; i < end; ++i) {
      out[i].assign(logits.data().begin() + static_cast<long>((i - begin) * k),
                    logits.data().begin() + static_cast<long>((i - begin + 1) * k));
    }
  });
  return out;
}

template <class T>
MetricReport evaluate_model(const VtfModel<T>& model, const std::vector<Tracklet>& data, const AttributeSchema& schema,
                            std::size_t frames, const std::vector<Tensor<T>>* cached = nullptr) {
  if (data.empty()) throw UsageError("evaluate: empty split");
  const auto logits = predict_logits(model, data, frames, cached);
  std::vector<LabelVector> preds, truths;
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds.push_back(decide<T>(logits[i], schema));
    truths.push_back(data[i].labels);
  }
  return evaluate(preds, truths, schema);
}

/// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

/// Supervised training with BCE and Adam. With frozen encoders the visual and
/// text tokens are computed once up front; otherwise every step runs the
/// whole pipeline on the tape.
template <class T>
TrainResult train(VtfModel<T>& model, const std::vector<Tracklet>& data, const AttributeSchema& schema,
                  const TrainConfig& cfg, const std::vector<Tracklet>* heldout = nullptr,
                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw UsageError("train: empty dataset");
  if (schema.class_count() != model.classes()) {
    throw SchemaMismatchError("schema has " + std::to_string(schema.class_count()) + " classes, model has " +
                              std::to_string(model.classes()));
  }
  model.set_encoders_trainable(!cfg.freeze_encoders);

  std::vector<Tensor<T>> visual_cache, heldout_cache;
  std::optional<Tensor<T>> text_cache;
  if (cfg.freeze_encoders) {
    visual_cache = cache_visual_tokens(model, data, cfg.frames);
    Binder<T> p(model.params());
    text_cache = model.text_tokens(p);
    if (heldout && !heldout->empty()) heldout_cache = cache_visual_tokens(model, *heldout, cfg.frames);
  }

  std::mt19937_64 rng(cfg.seed);
  AdamState<T> adam;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(data.size(), rng);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Tracklet*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);

      Tape<T> tape;
      Binder<T> p(model.params(), &tape);
      std::vector<Tensor<T>> visual;
      Tensor<T> text;
      if (cfg.freeze_encoders) {
        for (std::size_t i = start; i < end; ++i) visual.push_back(visual_cache[order[i]]);
        text = *text_cache;
      } else {
        for (const auto* t : batch) visual.push_back(model.visual_tokens(p, sampled_frames(*t, cfg.frames)));
        text = model.text_tokens(p);
      }
      const auto logits = model.logits_from_tokens(p, visual, text);
      const auto loss = bce_loss(logits, target_matrix<T>(batch, model.classes()));
      tape.backward(loss);
      adam_step(model.params(), p.gradients(), adam, cfg.lr, cfg.weight_decay);
      ++result.steps;
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
      seen += batch.size();
    }
    if (seen == 0) break;
    EpochLog row;
    row.epoch = epoch;
    row.mean_loss = loss_sum / static_cast<double>(seen);
    if (heldout && !heldout->empty()) {
      row.heldout_f1 =
          evaluate_model(model, *heldout, schema, cfg.frames, cfg.freeze_encoders ? &heldout_cache : nullptr).f1;
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

inline std::string log_tsv(const std::vector<EpochLog>& log) {
  std::string out = "epoch\tmean_loss\theldout_macro_f1\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "\t" + fixed4(r.mean_loss) + "\t" +
           (std::isnan(r.heldout_f1) ? std::string("-") : fixed4(r.heldout_f1)) + "\n";
  }
  return out;
}

}  // namespace vtf
