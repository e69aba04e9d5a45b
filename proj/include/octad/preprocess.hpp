#pragma once

#include <array>

#include "octad/config.hpp"
#include "octad/phantom.hpp"

namespace octad::preprocess {

using phantom::BScan;
using phantom::Segmentation;

// 3-channel model input in composite coordinates. Channel semantics depend
// on the mode used at assembly: composite = (raw, layer mask, contour
// rasterization); the replicated modes carry three copies of one channel.
struct Composite {
  std::array<MatF, 3> ch;
  Segmentation seg;  // contours transformed into composite coordinates

  int height() const { return static_cast<int>(ch[0].rows()); }
  int width() const { return static_cast<int>(ch[0].cols()); }
};

// Per-column vertical shift so the bottom contour (OB_RPE) lands on one
// constant row (its deepest rounded position; shifts are downward-only).
// Contours move with the pixels; rows shifted in from outside are zero.
BScan rectify(const BScan& b);

// Zeroes pixels above the ILM and below the OB_RPE, per column.
BScan strip_background(const BScan& b);

// Centered crop. The row offset is floor((H - out_h)/2); contours are
// re-indexed by the offsets. Errors when the input is smaller than the
// target.
BScan crop_center(const BScan& b, int out_h = 512, int out_w = 512);

// Default per-layer mask gains: 1 + k/10 for band k.
std::array<double, phantom::kNumLayers> default_mask_gains();

// Intensity rescaled by a per-layer gain inside each of the 10 bands,
// renormalized to [0,1]; zero outside the retina.
MatF make_layer_mask(const BScan& b, const std::array<double, phantom::kNumLayers>& gains);

// One-pixel-thick rasterization of all 11 boundaries (union).
MatF make_contour_channel(const BScan& b);

Composite assemble(const BScan& b, ChannelMode mode,
                   const std::array<double, phantom::kNumLayers>& gains = default_mask_gains());

// rectify -> strip_background -> crop_center -> assemble.
Composite run_pipeline(const BScan& b, int out_h, int out_w, ChannelMode mode,
                       const std::array<double, phantom::kNumLayers>& gains = default_mask_gains());

TensorFile composite_to_tensor(const Composite& c);
Composite composite_from_tensors(const TensorFile& channels, const TensorFile& seg);

}  // namespace octad::preprocess
