#pragma once

#include <array>
#include <vector>

#include "octad/model.hpp"

namespace octad::explain {

using preprocess::Composite;
using phantom::Segmentation;

using BinGrid = Eigen::Array<uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// 10 layer bands plus the central macular subfield. Band k lies between
// boundaries k and k+1 and is reported under the name of its lower (deeper)
// boundary, so the first row is the ILM..RNFL-GCL band.
inline constexpr int kNumRegions = phantom::kNumLayers + 1;
inline constexpr int kMaculaIndex = phantom::kNumLayers;

std::array<const char*, kNumRegions> region_names();

struct SaliencyMap {
  MatF values;  // same extents as the model input, max-normalized to [0,1]
  int class_index = 0;
};

// Grad-CAM on the final conv feature map: channel weights are the spatial
// means of d(logit)/d(activation), the map is ReLU of the weighted channel
// sum, bilinearly upsampled and divided by its max (all-zero stays zero).
SaliencyMap grad_cam(const model::ParamSet<float>& p, const Composite& comp, int class_index);

BinGrid threshold_mask(const SaliencyMap& s, double tau);

// Region k = pixels with boundary_k <= row < boundary_{k+1} per column;
// the macular subfield = retinal pixels within +-subfield_halfwidth columns
// of the image center.
std::array<BinGrid, kNumRegions> layer_regions(const Segmentation& seg, int h, int w,
                                               int subfield_halfwidth);

struct OverlapStats {
  double iou = 0, dice = 0, fill = 0;
  bool empty_region = false;
};

struct LayerOverlap {
  std::array<OverlapStats, kNumRegions> region;
};

LayerOverlap overlap(const BinGrid& mask, const std::array<BinGrid, kNumRegions>& regions);

// Per image, marks the ceil(top_frac * pixels) most salient pixels (ties:
// higher value first, then row-major index); returns the per-pixel fraction
// of images marking it.
MatF aggregate_top_fraction(const std::vector<MatF>& maps, double top_frac = 0.05);

// Mean per-sample overlap per class (CN column then AD column), or pooled
// pixel counting across samples when `pooled` is set.
struct ClassOverlapTable {
  LayerOverlap cn;
  LayerOverlap ad;
  int n_cn = 0, n_ad = 0;
};

ClassOverlapTable class_overlap_table(const std::vector<LayerOverlap>& per_sample,
                                      const std::vector<int>& labels);

// Pooled variant: pixel counts accumulated across a class's samples before
// the ratios are taken.
ClassOverlapTable class_overlap_table_pooled(
    const std::vector<BinGrid>& masks,
    const std::vector<std::array<BinGrid, kNumRegions>>& regions, const std::vector<int>& labels);

std::string render_overlap_table(const ClassOverlapTable& t);

}  // namespace octad::explain
