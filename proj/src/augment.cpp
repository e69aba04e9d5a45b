#include "octad/augment.hpp"

#include <cmath>

namespace octad::augment {

const char* to_string(AugKind k) {
  switch (k) {
    case AugKind::identity: return "identity";
    case AugKind::hflip: return "hflip";
    case AugKind::translate: return "translate";
    case AugKind::scale: return "scale";
    case AugKind::occlude: return "occlude";
    case AugKind::contrast: return "contrast";
    case AugKind::vessel_shadow: return "vessel_shadow";
    case AugKind::noise: return "noise";
  }
  return "?";
}

bool raw_only(AugKind k) {
  return k == AugKind::occlude || k == AugKind::contrast || k == AugKind::vessel_shadow ||
         k == AugKind::noise;
}

Ranges Ranges::from_config(const Config& c) {
  Ranges r;
  r.identity_prob = c.get_f64("augment.identity_prob", r.identity_prob);
  r.translate_max = c.get_f64("augment.translate_max", r.translate_max);
  r.scale_min = c.get_f64("augment.scale_min", r.scale_min);
  r.scale_max = c.get_f64("augment.scale_max", r.scale_max);
  r.occlude_area_min = c.get_f64("augment.occlude_area_min", r.occlude_area_min);
  r.occlude_area_max = c.get_f64("augment.occlude_area_max", r.occlude_area_max);
  r.contrast_min = c.get_f64("augment.contrast_min", r.contrast_min);
  r.contrast_max = c.get_f64("augment.contrast_max", r.contrast_max);
  r.vessel_count_min = static_cast<int>(c.get_i64("augment.vessel_count_min", r.vessel_count_min));
  r.vessel_count_max = static_cast<int>(c.get_i64("augment.vessel_count_max", r.vessel_count_max));
  r.vessel_width_min = c.get_f64("augment.vessel_width_min", r.vessel_width_min);
  r.vessel_width_max = c.get_f64("augment.vessel_width_max", r.vessel_width_max);
  r.vessel_factor_min = c.get_f64("augment.vessel_factor_min", r.vessel_factor_min);
  r.vessel_factor_max = c.get_f64("augment.vessel_factor_max", r.vessel_factor_max);
  r.noise_sigma_max = c.get_f64("augment.noise_sigma_max", r.noise_sigma_max);
  return r;
}

AugmentOp sample_op(const Ranges& rg, Rng& rng) {
  AugmentOp op;
  if (rng.next_f64() < rg.identity_prob) {
    op.kind = AugKind::identity;
    return op;
  }
  op.kind = static_cast<AugKind>(1 + rng.next_int(kNumKinds - 1));
  switch (op.kind) {
    case AugKind::identity:
    case AugKind::hflip:
      break;
    case AugKind::translate: {
      const int t = static_cast<int>(rg.translate_max);
      op.tx = rng.next_int(2 * t + 1) - t;
      op.ty = rng.next_int(2 * t + 1) - t;
      break;
    }
    case AugKind::scale:
      op.scale = rng.uniform(rg.scale_min, rg.scale_max);
      break;
    case AugKind::occlude: {
      const double area = rng.uniform(rg.occlude_area_min, rg.occlude_area_max);
      const double aspect = rng.uniform(0.5, 2.0);
      op.occ_w = std::min(1.0, std::sqrt(area * aspect));
      op.occ_h = std::min(1.0, area / op.occ_w);
      op.occ_x = rng.next_f64() * (1.0 - op.occ_w);
      op.occ_y = rng.next_f64() * (1.0 - op.occ_h);
      break;
    }
    case AugKind::contrast:
      op.gamma = rng.uniform(rg.contrast_min, rg.contrast_max);
      break;
    case AugKind::vessel_shadow: {
      const int n =
          rg.vessel_count_min + rng.next_int(rg.vessel_count_max - rg.vessel_count_min + 1);
      for (int i = 0; i < n; ++i) {
        VesselBand v;
        v.center_frac = rng.next_f64();
        v.width_px = rng.uniform(rg.vessel_width_min, rg.vessel_width_max);
        v.factor = rng.uniform(rg.vessel_factor_min, rg.vessel_factor_max);
        op.vessels.push_back(v);
      }
      break;
    }
    case AugKind::noise:
      op.noise_sigma = rng.next_f64() * rg.noise_sigma_max;
      break;
  }
  return op;
}

namespace {

void clamp01(MatF& m) { m = m.cwiseMax(0.0f).cwiseMin(1.0f); }

MatF translate_plane(const MatF& in, int tx, int ty) {
  const int H = static_cast<int>(in.rows()), W = static_cast<int>(in.cols());
  MatF out = MatF::Zero(H, W);
  for (int c = 0; c < W; ++c) {
    const int sc = c - tx;
    if (sc < 0 || sc >= W) continue;
    for (int r = 0; r < H; ++r) {
      const int sr = r - ty;
      if (sr >= 0 && sr < H) out(r, c) = in(sr, sc);
    }
  }
  return out;
}

// Bilinear resample about the image center; zero outside.
MatF scale_plane(const MatF& in, double s) {
  const int H = static_cast<int>(in.rows()), W = static_cast<int>(in.cols());
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  MatF out(H, W);
  for (int c = 0; c < W; ++c) {
    const double sx = (c - cx) / s + cx;
    for (int r = 0; r < H; ++r) {
      const double sy = (r - cy) / s + cy;
      if (sx < 0 || sy < 0 || sx > W - 1 || sy > H - 1) {
        out(r, c) = 0;
        continue;
      }
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - x0, fy = sy - y0;
      out(r, c) = static_cast<float>((1 - fy) * ((1 - fx) * in(y0, x0) + fx * in(y0, x1)) +
                                     fy * ((1 - fx) * in(y1, x0) + fx * in(y1, x1)));
    }
  }
  return out;
}

}  // namespace

Composite apply(const AugmentOp& op, const Composite& comp, Rng& rng) {
  Composite out = comp;
  const int H = comp.height(), W = comp.width();
  switch (op.kind) {
    case AugKind::identity:
      break;
    case AugKind::hflip:
      for (MatF& ch : out.ch) ch = ch.rowwise().reverse().eval();
      break;
    case AugKind::translate:
      for (MatF& ch : out.ch) ch = translate_plane(ch, op.tx, op.ty);
      break;
    case AugKind::scale:
      for (MatF& ch : out.ch) ch = scale_plane(ch, op.scale);
      break;
    case AugKind::occlude: {
      const int x0 = static_cast<int>(op.occ_x * W), y0 = static_cast<int>(op.occ_y * H);
      const int w = std::min(W - x0, std::max(1, static_cast<int>(op.occ_w * W)));
      const int h = std::min(H - y0, std::max(1, static_cast<int>(op.occ_h * H)));
      out.ch[0].block(y0, x0, h, w).setZero();
      break;
    }
    case AugKind::contrast:
      out.ch[0] = out.ch[0].array().max(0.0f).pow(static_cast<float>(op.gamma)).matrix();
      break;
    case AugKind::vessel_shadow:
      for (const VesselBand& v : op.vessels) {
        const int center = static_cast<int>(v.center_frac * (W - 1));
        const int half = std::max(1, static_cast<int>(v.width_px)) / 2;
        const int c0 = std::max(0, center - half);
        const int c1 = std::min(W - 1, center + std::max(1, static_cast<int>(v.width_px)) - half - 1);
        for (int c = c0; c <= c1; ++c)
          out.ch[0].col(c) *= static_cast<float>(v.factor);
      }
      break;
    case AugKind::noise:
      for (int c = 0; c < W; ++c)
        for (int r = 0; r < H; ++r)
          out.ch[0](r, c) += static_cast<float>(op.noise_sigma * rng.next_normal());
      break;
  }
  if (op.raw_only()) {
    clamp01(out.ch[0]);  // channels 2-3 stay bit-identical
  } else {
    for (MatF& ch : out.ch) clamp01(ch);
  }
  return out;
}

}  // namespace octad::augment
