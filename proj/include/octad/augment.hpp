#pragma once

#include <vector>

#include "octad/config.hpp"
#include "octad/preprocess.hpp"
#include "octad/rng.hpp"

namespace octad::augment {

using preprocess::Composite;

enum class AugKind : uint8_t {
  identity,
  hflip,
  translate,
  scale,
  occlude,
  contrast,
  vessel_shadow,
  noise,
};
inline constexpr int kNumKinds = 8;

const char* to_string(AugKind k);

// Geometric transforms touch every channel identically; the OCT-specific
// ones (occlusion, contrast, vessel shadows, noise) touch only channel 1.
bool raw_only(AugKind k);

// Parameter ranges. Values are pipeline decisions, overridable through
// augment.* config keys.
struct Ranges {
  double identity_prob = 0.125;   // chance of the no-op draw; 1/8 keeps all kinds uniform
  double translate_max = 16;      // px, each axis
  double scale_min = 0.9, scale_max = 1.1;
  double occlude_area_min = 0.05, occlude_area_max = 0.15;  // fraction of area
  double contrast_min = 0.7, contrast_max = 1.4;            // gamma
  int vessel_count_min = 1, vessel_count_max = 4;
  double vessel_width_min = 4, vessel_width_max = 12;       // px
  double vessel_factor_min = 0.3, vessel_factor_max = 0.7;
  double noise_sigma_max = 0.05;  // of the [0,1] dynamic range

  static Ranges from_config(const Config& c);
};

struct VesselBand {
  double center_frac;  // of width
  double width_px;
  double factor;
};

struct AugmentOp {
  AugKind kind = AugKind::identity;
  int tx = 0, ty = 0;     // translate, px (x = columns, y = rows)
  double scale = 1.0;
  double occ_x = 0, occ_y = 0, occ_w = 0, occ_h = 0;  // fractions
  double gamma = 1.0;
  std::vector<VesselBand> vessels;
  double noise_sigma = 0;

  bool raw_only() const { return augment::raw_only(kind); }
};

// One op per sample: uniform over the 8 kinds, parameters from `ranges`.
AugmentOp sample_op(const Ranges& ranges, Rng& rng);

// Applies the op. rng is consumed only by the noise op (per-pixel draws).
// Channel values are clamped to [0,1].
Composite apply(const AugmentOp& op, const Composite& comp, Rng& rng);

}  // namespace octad::augment
