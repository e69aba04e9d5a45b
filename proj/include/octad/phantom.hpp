#pragma once

#include <array>
#include <string>

#include "octad/manifest.hpp"
#include "octad/rng.hpp"
#include "octad/tensor_io.hpp"

namespace octad::phantom {

// The 11 anatomical boundaries, ordered inner (shallow) to outer (deep).
// Boundary j and j+1 delimit layer band j (10 bands).
inline constexpr std::array<const char*, 11> kBoundaryNames = {
    "ILM",    "RNFL-GCL", "GCL-IPL", "IPL-INL", "INL-OPL", "OPL-HFL",
    "BMEIS",  "IS/OSJ",   "IB_OPR",  "IB_RPE",  "OB_RPE"};
inline constexpr int kNumBoundaries = 11;
inline constexpr int kNumLayers = 10;

// Per-column, real-valued row index of each boundary. Row j of `rows` is
// boundary j over all lateral positions.
struct Segmentation {
  MatF rows;  // 11 x W

  int width() const { return static_cast<int>(rows.cols()); }
  bool monotonic() const;

  TensorFile to_tensor() const { return TensorFile::from_f32(rows); }
  static Segmentation from_tensor(const TensorFile& t);
};

// One grayscale B-scan (rows = depth, cols = lateral) and its contours.
struct BScan {
  MatU16 pixels;
  Segmentation seg;

  int height() const { return static_cast<int>(pixels.rows()); }
  int width() const { return static_cast<int>(pixels.cols()); }
};

enum class SignalRegion : uint8_t { global, central_subfield };

// Class-dependent structural signal: the named layer band is thinned by
// `thinning_fraction` (boundaries below it shift up), only for AD scans.
struct PhantomSignal {
  int target_layer = 6;             // band index; 6 = BMEIS..IS/OSJ gap
  double thinning_fraction = 0.0;   // in [0, 1)
  SignalRegion region = SignalRegion::central_subfield;
};

struct PhantomSpec {
  int height = 650;
  int width = 512;
  std::array<double, kNumLayers> layer_base_intensity{};  // u16 units
  std::array<double, kNumLayers> layer_base_thickness{};  // px
  double foveal_pit_depth = 0;     // px, total inner-band thinning at center
  double foveal_pit_width = 0;     // px, FWHM of the pit
  double speckle_sigma = 0.25;     // log-normal multiplicative speckle
  double contour_amplitude = 0;    // px, low-frequency undulation of contours
  double thickness_jitter = 0.10;  // per-scan relative thickness scale range
  double bottom_depth_frac = 0.62; // mean OB_RPE depth as a fraction of height
  double background_level = 1200;  // u16, peak of the out-of-retina noise
  int subfield_halfwidth = 42;     // px, half-width of the central subfield
  PhantomSignal signal;
  Label cls = Label::CN;

  static PhantomSpec defaults(int h = 650, int w = 512);
  void validate() const;
};

BScan generate_bscan(const PhantomSpec& spec, Rng& rng);

// Mean thickness of band `layer` (boundary layer..layer+1) over columns
// [c0, c1]; measured directly from the contours.
double mean_band_thickness(const Segmentation& seg, int layer, int c0, int c1);

struct CohortOptions {
  double year_cap = 4.0;
  double two_eye_prob = 0.45;
  int age_min = 55;
  int age_max = 85;
};

// Emits n_ad_scans + n_cn_scans phantom scans under out_dir (image tensors
// plus ".seg" contour sidecars) and returns the manifest, which is also
// written to out_dir/manifest.csv. Subjects carry 1 or 2 eyes; for every AD
// subject a demographically identical CN subject is created while the CN
// scan budget allows, so exact control matching is feasible downstream.
Manifest generate_cohort(int n_ad_scans, int n_cn_scans, const PhantomSpec& spec_template,
                         const CohortOptions& opt, Rng& rng, const std::string& out_dir);

}  // namespace octad::phantom
