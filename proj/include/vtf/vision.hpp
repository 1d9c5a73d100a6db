#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vtf/nn.hpp"

namespace vtf {

/// RGB image, row-major [height][width][3], values in [0, 1].
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> rgb;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, std::vector<float> pixels) : height(h), width(w), rgb(std::move(pixels)) {
    if (rgb.size() != h * w * 3) {
      throw DimensionError("frame " + std::to_string(h) + "x" + std::to_string(w) + " needs " +
                           std::to_string(h * w * 3) + " values, got " + std::to_string(rgb.size()));
    }
    for (float v : rgb) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("frame pixel outside [0, 1]");
    }
  }

  static Frame filled(std::size_t h, std::size_t w, float value) { return Frame(h, w, std::vector<float>(h * w * 3, value)); }

  float at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
  bool operator==(const Frame&) const = default;
};

struct VitConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t patches() const { return grid() * grid(); }
  std::size_t tokens() const { return patches() + 1; }
  std::size_t patch_values() const { return patch_size * patch_size * 3; }

  void validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
      throw UsageError("image size " + std::to_string(image_size) + " must be a multiple of patch size " +
                       std::to_string(patch_size));
    }
    nn::BlockConfig{dim, heads, mlp_ratio}.validate();
  }
};

namespace detail {
// Half-pixel-centre bilinear resampling of one frame.
inline Frame resize_bilinear(const Frame& in, std::size_t out_h, std::size_t out_w) {
  if (out_h == in.height && out_w == in.width) return in;
  std::vector<float> px(out_h * out_w * 3);
  const double sy = static_cast<double>(in.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = in.at(y0, x0, c) * (1 - wx) + in.at(y0, x1, c) * wx;
        const double bot = in.at(y1, x0, c) * (1 - wx) + in.at(y1, x1, c) * wx;
        px[(y * out_w + x) * 3 + c] = std::clamp(static_cast<float>(top * (1 - wy) + bot * wy), 0.0f, 1.0f);
      }
    }
  }
  return Frame(out_h, out_w, std::move(px));
}
}  // namespace detail

/// Resize so the longer side is `side` (aspect preserved), then centre the
/// content on a zero canvas; an odd leftover pixel goes right/bottom.
inline Frame pad_to_square(const Frame& frame, std::size_t side) {
  if (frame.height == 0 || frame.width == 0) throw ContractError("pad_to_square: zero-area frame");
  if (side == 0) throw ContractError("pad_to_square: zero target size");
  const double s = static_cast<double>(side) / static_cast<double>(std::max(frame.height, frame.width));
  const auto fit = [&](std::size_t v) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(static_cast<double>(v) * s)), 1, side);
  };
  const std::size_t h = frame.height >= frame.width ? side : fit(frame.height);
  const std::size_t w = frame.width >= frame.height ? side : fit(frame.width);
  const Frame content = detail::resize_bilinear(frame, h, w);
  if (h == side && w == side) return content;
  const std::size_t top = (side - h) / 2, left = (side - w) / 2;
  std::vector<float> px(side * side * 3, 0.0f);
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(content.rgb.data() + y * w * 3, w * 3, px.data() + ((y + top) * side + left) * 3);
  return Frame(side, side, std::move(px));
}

/// Non-overlapping patches of a square frame, raster order, each flattened as
/// (row, column, channel): [patches, patch_size^2 * 3].
inline std::vector<float> patchify(const Frame& frame, std::size_t patch) {
  if (frame.height != frame.width || frame.height % patch != 0) {
    throw DimensionError("patchify: frame " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                         " is not a square multiple of patch " + std::to_string(patch));
  }
  const std::size_t g = frame.height / patch;
  std::vector<float> out;
  out.reserve(frame.rgb.size());
  for (std::size_t py = 0; py < g; ++py)
    for (std::size_t px = 0; px < g; ++px)
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          for (std::size_t c = 0; c < 3; ++c) out.push_back(frame.at(py * patch + y, px * patch + x, c));
  return out;
}

/// Indices of `budget` frames out of `total`, uniform stride, phase 0.
inline std::vector<std::size_t> sample_frames(std::size_t total, std::size_t budget) {
  if (total == 0) throw ContractError("tracklet has no frames");
  if (budget == 0) throw ContractError("frame budget must be at least 1");
  std::vector<std::size_t> idx;
  if (budget >= total) {
    for (std::size_t i = 0; i < total; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t i = 0; i < budget; ++i) idx.push_back(i * total / budget);
  return idx;
}

/// Per-channel RGB statistics subtracted and divided out before patch projection.
inline constexpr double kPixelMean[3] = {0.48145466, 0.4578275, 0.40821073};
inline constexpr double kPixelStd[3] = {0.26862954, 0.26130258, 0.27577711};

/// ViT-style frame encoder: pixel normalization, patch projection, class token, learned positions,
/// input norm, pre-norm blocks, final norm. Parameters live under "vision.".
template <class T>
class VisionEncoder {
 public:
  explicit VisionEncoder(VitConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const VitConfig& config() const { return cfg_; }

  void register_params(ParamStore<T>& store, Initializer<T>& init, bool trainable) const {
    const std::size_t d = cfg_.dim;
    nn::add_linear(store, init, "vision.patch_embed", cfg_.patch_values(), d, trainable,
                   1.0 / std::sqrt(static_cast<double>(cfg_.patch_values())));
    store.add("vision.cls_token", init.normal({d}, 1.0 / std::sqrt(static_cast<double>(d))), trainable);
    store.add("vision.pos_embed", init.normal({cfg_.tokens(), d}, 1.0), trainable);
    nn::add_layer_norm(store, init, "vision.ln_pre", d, trainable);
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      nn::add_block(store, init, block(i), {d, cfg_.heads, cfg_.mlp_ratio}, trainable, 0.02);
    }
    nn::add_layer_norm(store, init, "vision.ln_final", d, trainable);
  }

  /// Frames must already be image_size x image_size. Returns [frames, tokens, dim].
  Tensor<T> encode(Binder<T>& p, const std::vector<Frame>& frames) const {
    if (frames.empty()) throw ContractError("encode: no frames");
    const std::size_t n = frames.size(), np = cfg_.patches(), pv = cfg_.patch_values(), d = cfg_.dim;
    std::vector<T> patches;
    patches.reserve(n * np * pv);
    for (const auto& f : frames) {
      if (f.height != cfg_.image_size || f.width != cfg_.image_size) {
        throw DimensionError("encode: frame " + std::to_string(f.height) + "x" + std::to_string(f.width) +
                             " is not " + std::to_string(cfg_.image_size) + " square; pad it first");
      }
      const auto raw = patchify(f, cfg_.patch_size);
      for (std::size_t i = 0; i < raw.size(); ++i) {
        patches.push_back((static_cast<T>(raw[i]) - T(kPixelMean[i % 3])) / T(kPixelStd[i % 3]));
      }
    }
    auto x = nn::linear(p, "vision.patch_embed", Tensor<T>({n, np, pv}, std::move(patches)));
    const auto cls = reshape(p("vision.cls_token"), {1, 1, d});
    x = concat<T>({concat(std::vector<Tensor<T>>(n, cls), 0), x}, 1);
    x = nn::norm(p, "vision.ln_pre", add(x, p("vision.pos_embed")));
    for (std::size_t i = 0; i < cfg_.depth; ++i) x = nn::transformer_block(p, block(i), x, cfg_.heads);
    return nn::norm(p, "vision.ln_final", x);
  }

  /// One square frame -> [tokens, dim].
  Tensor<T> encode_frame(Binder<T>& p, const Frame& frame) const {
    return reshape(encode(p, {frame}), {cfg_.tokens(), cfg_.dim});
  }

 private:
  static std::string block(std::size_t i) { return "vision.blocks." + std::to_string(i); }

  VitConfig cfg_;
};

/// Mean over the frame axis of [frames, tokens, dim]; frames are summed in index order.
template <class T>
Tensor<T> temporal_average(const Tensor<T>& per_frame) {
  if (per_frame.rank() != 3) throw DimensionError("temporal_average expects [T, N, D], got " + to_string(per_frame.shape()));
  return mean(per_frame, 0);
}

}  // namespace vtf
