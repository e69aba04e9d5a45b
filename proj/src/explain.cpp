#include "octad/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace octad::explain {

using model::ForwardCache;
using model::Mx;
using model::Vec;

std::array<const char*, kNumRegions> region_names() {
  std::array<const char*, kNumRegions> names;
  for (int k = 0; k < phantom::kNumLayers; ++k) names[k] = phantom::kBoundaryNames[k + 1];
  names[kMaculaIndex] = "Macula";
  return names;
}

namespace {

// Bilinear upsample with half-pixel centers; sources clamped to the map.
MatF upsample_bilinear(const MatF& in, int out_h, int out_w) {
  const int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
  MatF out(out_h, out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int c = 0; c < out_w; ++c) {
    const double xs = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
    const int x0 = static_cast<int>(xs);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fx = xs - x0;
    for (int r = 0; r < out_h; ++r) {
      const double ys = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(ys);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fy = ys - y0;
      out(r, c) = static_cast<float>((1 - fy) * ((1 - fx) * in(y0, x0) + fx * in(y0, x1)) +
                                     fy * ((1 - fx) * in(y1, x0) + fx * in(y1, x1)));
    }
  }
  return out;
}

}  // namespace

SaliencyMap grad_cam(const model::ParamSet<float>& p, const Composite& comp, int class_index) {
  if (class_index < 0 || class_index >= p.shape.n_classes)
    throw Error(Errc::invalid_argument, "class index out of range");
  ForwardCache<float> cache;
  model::forward(p, model::composite_input(comp), comp.height(), comp.width(),
                 /*train_mode=*/false, nullptr, cache);

  Vec<float> dlogits = Vec<float>::Zero(p.shape.n_classes);
  dlogits(class_index) = 1.0f;
  Vec<float> dgap =
      model::head_backward(p, cache, dlogits, static_cast<model::ParamSet<float>*>(nullptr));
  if (!dgap.allFinite()) throw Error(Errc::nonfinite, "non-finite saliency gradients");

  const int hm = cache.hs.back(), wm = cache.ws.back();
  const long n = static_cast<long>(hm) * wm;
  // d(logit)/d(A_k) is spatially uniform behind a global pool, so the
  // channel weight is dgap_k / n.
  Vec<float> alpha = dgap / static_cast<float>(n);
  Eigen::RowVectorXf cam_flat = alpha.transpose() * cache.a_final;
  cam_flat = cam_flat.cwiseMax(0.0f);

  MatF cam = Eigen::Map<const MatF>(cam_flat.data(), hm, wm);
  MatF up = upsample_bilinear(cam, comp.height(), comp.width());
  const float mx = up.maxCoeff();
  if (mx > 0) up /= mx;
  SaliencyMap s;
  s.values = std::move(up);
  s.class_index = class_index;
  return s;
}

BinGrid threshold_mask(const SaliencyMap& s, double tau) {
  return (s.values.array() >= static_cast<float>(tau)).cast<uint8_t>();
}

std::array<BinGrid, kNumRegions> layer_regions(const Segmentation& seg, int h, int w,
                                               int subfield_halfwidth) {
  if (seg.width() != w) throw Error(Errc::invalid_argument, "segmentation width mismatch");
  std::array<BinGrid, kNumRegions> out;
  for (BinGrid& g : out) g = BinGrid::Zero(h, w);
  const int center = w / 2;
  for (int c = 0; c < w; ++c) {
    const bool in_subfield = std::abs(c - center) <= subfield_halfwidth;
    for (int k = 0; k < phantom::kNumLayers; ++k) {
      const float top = seg.rows(k, c), bot = seg.rows(k + 1, c);
      const int r0 = std::max(0, static_cast<int>(std::ceil(top)));
      for (int r = r0; r < h && static_cast<float>(r) < bot; ++r) {
        out[k](r, c) = 1;
        if (in_subfield) out[kMaculaIndex](r, c) = 1;
      }
    }
    // The retina band is closed at the bottom contour; keep the macular
    // column consistent with strip_background's [ILM, OB_RPE] window.
    if (in_subfield) {
      const float bot = seg.rows(phantom::kNumBoundaries - 1, c);
      const int rb = static_cast<int>(std::floor(bot));
      if (rb >= 0 && rb < h && static_cast<float>(rb) >= seg.rows(0, c))
        out[kMaculaIndex](rb, c) = 1;
    }
  }
  return out;
}

LayerOverlap overlap(const BinGrid& mask, const std::array<BinGrid, kNumRegions>& regions) {
  LayerOverlap out;
  const long mask_count = static_cast<long>(mask.cast<long>().sum());
  for (int k = 0; k < kNumRegions; ++k) {
    const BinGrid& region = regions[k];
    if (mask.rows() != region.rows() || mask.cols() != region.cols())
      throw Error(Errc::invalid_argument, "mask/region extent mismatch");
    const long region_count = static_cast<long>(region.cast<long>().sum());
    const long inter = static_cast<long>((mask * region).cast<long>().sum());
    const long uni = mask_count + region_count - inter;
    OverlapStats& s = out.region[k];
    if (region_count == 0) {
      s.empty_region = true;
      continue;
    }
    s.iou = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
    s.dice = (mask_count + region_count) > 0
                 ? 2.0 * inter / static_cast<double>(mask_count + region_count)
                 : 0.0;
    s.fill = static_cast<double>(inter) / region_count;
  }
  return out;
}

MatF aggregate_top_fraction(const std::vector<MatF>& maps, double top_frac) {
  if (maps.empty()) throw Error(Errc::invalid_argument, "no saliency maps");
  const int h = static_cast<int>(maps[0].rows()), w = static_cast<int>(maps[0].cols());
  const long total = static_cast<long>(h) * w;
  const long k = static_cast<long>(std::ceil(top_frac * static_cast<double>(total)));
  MatF agg = MatF::Zero(h, w);
  std::vector<long> order(total);
  for (const MatF& m : maps) {
    if (m.rows() != h || m.cols() != w) throw Error(Errc::invalid_argument, "ragged maps");
    std::iota(order.begin(), order.end(), 0);
    // Row-major index breaks ties after value.
    const auto rm = [&](long idx) {
      const long r = idx % h, c = idx / h;
      return r * w + c;
    };
    std::nth_element(order.begin(), order.begin() + k, order.end(), [&](long a, long b) {
      const float va = m.data()[a], vb = m.data()[b];
      if (va != vb) return va > vb;
      return rm(a) < rm(b);
    });
    for (long i = 0; i < k; ++i) agg.data()[order[i]] += 1.0f;
  }
  agg /= static_cast<float>(maps.size());
  return agg;
}

ClassOverlapTable class_overlap_table(const std::vector<LayerOverlap>& per_sample,
                                      const std::vector<int>& labels) {
  if (per_sample.size() != labels.size() || per_sample.empty())
    throw Error(Errc::invalid_argument, "need aligned, nonempty overlap/label lists");
  ClassOverlapTable t;
  for (size_t i = 0; i < per_sample.size(); ++i) {
    LayerOverlap& acc = labels[i] == 1 ? t.ad : t.cn;
    int& n = labels[i] == 1 ? t.n_ad : t.n_cn;
    for (int k = 0; k < kNumRegions; ++k) {
      acc.region[k].iou += per_sample[i].region[k].iou;
      acc.region[k].dice += per_sample[i].region[k].dice;
      acc.region[k].fill += per_sample[i].region[k].fill;
    }
    ++n;
  }
  for (int k = 0; k < kNumRegions; ++k) {
    if (t.n_cn > 0) {
      t.cn.region[k].iou /= t.n_cn;
      t.cn.region[k].dice /= t.n_cn;
      t.cn.region[k].fill /= t.n_cn;
    }
    if (t.n_ad > 0) {
      t.ad.region[k].iou /= t.n_ad;
      t.ad.region[k].dice /= t.n_ad;
      t.ad.region[k].fill /= t.n_ad;
    }
  }
  return t;
}

ClassOverlapTable class_overlap_table_pooled(
    const std::vector<BinGrid>& masks,
    const std::vector<std::array<BinGrid, kNumRegions>>& regions,
    const std::vector<int>& labels) {
  if (masks.size() != regions.size() || masks.size() != labels.size() || masks.empty())
    throw Error(Errc::invalid_argument, "need aligned, nonempty inputs");
  ClassOverlapTable t;
  for (int cls = 0; cls < 2; ++cls) {
    std::array<long, kNumRegions> inter{}, uni{}, s_count{}, l_count{};
    int n = 0;
    for (size_t i = 0; i < masks.size(); ++i) {
      if (labels[i] != cls) continue;
      ++n;
      const long mc = static_cast<long>(masks[i].cast<long>().sum());
      for (int k = 0; k < kNumRegions; ++k) {
        const long lc = static_cast<long>(regions[i][k].cast<long>().sum());
        const long ic = static_cast<long>((masks[i] * regions[i][k]).cast<long>().sum());
        inter[k] += ic;
        uni[k] += mc + lc - ic;
        s_count[k] += mc;
        l_count[k] += lc;
      }
    }
    LayerOverlap& acc = cls == 1 ? t.ad : t.cn;
    (cls == 1 ? t.n_ad : t.n_cn) = n;
    for (int k = 0; k < kNumRegions; ++k) {
      OverlapStats& s = acc.region[k];
      if (l_count[k] == 0) {
        s.empty_region = true;
        continue;
      }
      s.iou = uni[k] > 0 ? static_cast<double>(inter[k]) / uni[k] : 0.0;
      s.dice = (s_count[k] + l_count[k]) > 0
                   ? 2.0 * inter[k] / static_cast<double>(s_count[k] + l_count[k])
                   : 0.0;
      s.fill = static_cast<double>(inter[k]) / l_count[k];
    }
  }
  return t;
}

std::string render_overlap_table(const ClassOverlapTable& t) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s %8s %9s %9s\n", "Layer", "IoU CN", "IoU AD",
                "Dice CN", "Dice AD", "Fill% CN", "Fill% AD");
  out << line;
  const auto names = region_names();
  for (int k = 0; k < kNumRegions; ++k) {
    if (k == kMaculaIndex) out << std::string(64, '-') << '\n';
    std::snprintf(line, sizeof(line), "%-10s %8.3f %8.3f %8.3f %8.3f %9.1f %9.1f\n", names[k],
                  t.cn.region[k].iou, t.ad.region[k].iou, t.cn.region[k].dice, t.ad.region[k].dice,
                  100.0 * t.cn.region[k].fill, 100.0 * t.ad.region[k].fill);
    out << line;
  }
  return out.str();
}

}  // namespace octad::explain
