#include "octad/preprocess.hpp"

#include <cmath>

namespace octad::preprocess {

using phantom::kNumBoundaries;
using phantom::kNumLayers;

BScan rectify(const BScan& b) {
  const int H = b.height(), W = b.width();
  const int bottom = kNumBoundaries - 1;
  int target = 0;
  for (int c = 0; c < W; ++c)
    target = std::max(target, static_cast<int>(std::lround(b.seg.rows(bottom, c))));

  BScan out;
  out.pixels = MatU16::Zero(H, W);
  out.seg.rows.resize(kNumBoundaries, W);
  for (int c = 0; c < W; ++c) {
    const int shift = static_cast<int>(std::lround(b.seg.rows(bottom, c))) - target;  // <= 0
    for (int r = 0; r < H; ++r) {
      const int src = r + shift;
      if (src >= 0 && src < H) out.pixels(r, c) = b.pixels(src, c);
    }
    for (int j = 0; j < kNumBoundaries; ++j)
      out.seg.rows(j, c) = b.seg.rows(j, c) - static_cast<float>(shift);
  }
  return out;
}

BScan strip_background(const BScan& b) {
  const int H = b.height(), W = b.width();
  BScan out = b;
  for (int c = 0; c < W; ++c) {
    const float top = b.seg.rows(0, c);
    const float bot = b.seg.rows(kNumBoundaries - 1, c);
    for (int r = 0; r < H; ++r)
      if (static_cast<float>(r) < top || static_cast<float>(r) > bot) out.pixels(r, c) = 0;
  }
  return out;
}

BScan crop_center(const BScan& b, int out_h, int out_w) {
  const int H = b.height(), W = b.width();
  if (H < out_h || W < out_w)
    throw Error(Errc::invalid_argument, "input " + std::to_string(H) + "x" + std::to_string(W) +
                                            " smaller than crop " + std::to_string(out_h) + "x" +
                                            std::to_string(out_w));
  const int r0 = (H - out_h) / 2;
  const int c0 = (W - out_w) / 2;
  BScan out;
  out.pixels = b.pixels.block(r0, c0, out_h, out_w);
  out.seg.rows = b.seg.rows.middleCols(c0, out_w);
  out.seg.rows.array() -= static_cast<float>(r0);
  return out;
}

std::array<double, kNumLayers> default_mask_gains() {
  std::array<double, kNumLayers> g;
  for (int k = 0; k < kNumLayers; ++k) g[k] = 1.0 + k / 10.0;
  return g;
}

MatF make_layer_mask(const BScan& b, const std::array<double, kNumLayers>& gains) {
  const int H = b.height(), W = b.width();
  MatF mask = MatF::Zero(H, W);
  for (int c = 0; c < W; ++c) {
    const auto bc = [&](int j) { return b.seg.rows(j, c); };
    int band = 0;
    for (int r = 0; r < H; ++r) {
      const float rf = static_cast<float>(r);
      if (rf < bc(0) || rf > bc(kNumBoundaries - 1)) continue;
      while (band + 1 < kNumLayers && rf >= bc(band + 1)) ++band;
      mask(r, c) = static_cast<float>(b.pixels(r, c) * gains[band]);
    }
  }
  const float mx = mask.maxCoeff();
  if (mx > 0) mask /= mx;
  return mask;
}

MatF make_contour_channel(const BScan& b) {
  const int H = b.height(), W = b.width();
  MatF ch = MatF::Zero(H, W);
  for (int c = 0; c < W; ++c)
    for (int j = 0; j < kNumBoundaries; ++j) {
      const long r = std::lround(b.seg.rows(j, c));
      if (r >= 0 && r < H) ch(static_cast<int>(r), c) = 1.0f;
    }
  return ch;
}

namespace {

MatF minmax_normalize(const MatU16& px) {
  const float lo = static_cast<float>(px.minCoeff());
  const float hi = static_cast<float>(px.maxCoeff());
  MatF out(px.rows(), px.cols());
  if (hi <= lo) {
    out.setZero();  // constant image maps to all-zero
    return out;
  }
  const float scale = 1.0f / (hi - lo);
  for (Eigen::Index c = 0; c < px.cols(); ++c)
    for (Eigen::Index r = 0; r < px.rows(); ++r)
      out(r, c) = (static_cast<float>(px(r, c)) - lo) * scale;
  return out;
}

}  // namespace

Composite assemble(const BScan& b, ChannelMode mode,
                   const std::array<double, kNumLayers>& gains) {
  Composite out;
  out.seg = b.seg;
  switch (mode) {
    case ChannelMode::composite:
      out.ch = {minmax_normalize(b.pixels), make_layer_mask(b, gains), make_contour_channel(b)};
      break;
    case ChannelMode::raw3: {
      MatF raw = minmax_normalize(b.pixels);
      out.ch = {raw, raw, raw};
      break;
    }
    case ChannelMode::mask3: {
      MatF mask = make_layer_mask(b, gains);
      out.ch = {mask, mask, mask};
      break;
    }
    case ChannelMode::contour3: {
      MatF ct = make_contour_channel(b);
      out.ch = {ct, ct, ct};
      break;
    }
  }
  return out;
}

Composite run_pipeline(const BScan& b, int out_h, int out_w, ChannelMode mode,
                       const std::array<double, kNumLayers>& gains) {
  return assemble(crop_center(strip_background(rectify(b)), out_h, out_w), mode, gains);
}

TensorFile composite_to_tensor(const Composite& c) {
  return TensorFile::from_f32_stack({c.ch[0], c.ch[1], c.ch[2]});
}

Composite composite_from_tensors(const TensorFile& channels, const TensorFile& seg) {
  std::vector<MatF> stack = channels.to_f32_stack();
  if (stack.size() != 3) throw Error(Errc::bad_header, "composite tensor must have 3 channels");
  Composite out;
  out.ch = {std::move(stack[0]), std::move(stack[1]), std::move(stack[2])};
  out.seg = Segmentation::from_tensor(seg);
  return out;
}

}  // namespace octad::preprocess
