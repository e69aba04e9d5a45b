#include "octad/phantom.hpp"

#include <cmath>
#include <filesystem>

namespace octad::phantom {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Low-frequency undulation: constant offset plus up to 4 cosine terms with
// 1/k amplitude decay. |value| <= ~1.65 * amplitude.
struct CosineSeries {
  double a0 = 0;
  std::array<double, 4> amp{};
  std::array<double, 4> phase{};

  static CosineSeries draw(double amplitude, Rng& rng) {
    CosineSeries s;
    s.a0 = amplitude * 0.4 * (2.0 * rng.next_f64() - 1.0);
    for (int k = 0; k < 4; ++k) {
      s.amp[k] = amplitude * (0.6 / (k + 1)) * (2.0 * rng.next_f64() - 1.0);
      s.phase[k] = 2.0 * kPi * rng.next_f64();
    }
    return s;
  }

  double at(double x) const {  // x in [0,1]
    double v = a0;
    for (int k = 0; k < 4; ++k) v += amp[k] * std::cos(kPi * (k + 1) * x + phase[k]);
    return v;
  }
};

// 1 inside |c-center| <= hw, cosine rolloff to 0 at 2*hw.
double subfield_window(int c, double center, int hw) {
  const double d = std::abs(c - center);
  if (d <= hw) return 1.0;
  if (d >= 2.0 * hw) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * (d - hw) / hw));
}

// Fraction of the foveal pit depth taken out of each inner band.
constexpr std::array<double, 5> kPitShare = {0.30, 0.25, 0.20, 0.15, 0.10};

}  // namespace

bool Segmentation::monotonic() const {
  if (rows.rows() != kNumBoundaries) return false;
  if (!rows.allFinite()) return false;
  for (int c = 0; c < rows.cols(); ++c)
    for (int j = 0; j + 1 < kNumBoundaries; ++j)
      if (rows(j + 1, c) < rows(j, c)) return false;
  return true;
}

Segmentation Segmentation::from_tensor(const TensorFile& t) {
  Segmentation s;
  s.rows = t.to_f32();
  if (s.rows.rows() != kNumBoundaries)
    throw Error(Errc::bad_header, "segmentation tensor must have 11 rows");
  return s;
}

PhantomSpec PhantomSpec::defaults(int h, int w) {
  PhantomSpec s;
  s.height = h;
  s.width = w;
  const double hs = static_cast<double>(h);
  // Band order: RNFL, GCL, IPL, INL, OPL, HFL+ONL, IS, OS, OPR, RPE.
  const std::array<double, kNumLayers> thick_frac = {0.045, 0.038, 0.035, 0.032, 0.025,
                                                     0.075, 0.035, 0.022, 0.020, 0.033};
  for (int k = 0; k < kNumLayers; ++k) s.layer_base_thickness[k] = thick_frac[k] * hs;
  s.layer_base_intensity = {40000, 20000, 26000, 14000, 26000, 12000, 42000, 18000, 30000, 48000};
  s.foveal_pit_depth = 0.10 * hs;
  s.foveal_pit_width = 0.18 * w;
  s.contour_amplitude = 0.015 * hs;
  s.subfield_halfwidth = std::max(2, static_cast<int>(std::lround(42.0 * w / 512.0)));
  return s;
}

void PhantomSpec::validate() const {
  if (height < 16 || width < 16) throw Error(Errc::invalid_spec, "extent too small");
  double total_thick = 0;
  for (int k = 0; k < kNumLayers; ++k) {
    if (!(layer_base_thickness[k] > 0)) throw Error(Errc::invalid_spec, "non-positive thickness");
    if (layer_base_intensity[k] < 0 || layer_base_intensity[k] > 65535)
      throw Error(Errc::invalid_spec, "intensity outside u16 range");
    total_thick += layer_base_thickness[k];
  }
  if (!(bottom_depth_frac > 0 && bottom_depth_frac < 1))
    throw Error(Errc::invalid_spec, "bottom_depth_frac outside (0,1)");
  const double slack = 1.65 * contour_amplitude + 2.0;
  if (bottom_depth_frac * height + slack >= height)
    throw Error(Errc::invalid_spec, "bottom contour can leave the image");
  if (bottom_depth_frac * height - total_thick * (1.0 + thickness_jitter + 0.2) - slack <= 1.0)
    throw Error(Errc::invalid_spec, "retina does not fit above the bottom contour");
  if (signal.thinning_fraction < 0 || signal.thinning_fraction >= 1)
    throw Error(Errc::invalid_spec, "thinning_fraction must be in [0,1)");
  if (signal.target_layer < 0 || signal.target_layer >= kNumLayers)
    throw Error(Errc::invalid_spec, "target_layer must be in 0..9");
  if (foveal_pit_depth < 0 || foveal_pit_width < 0 || speckle_sigma < 0 ||
      contour_amplitude < 0 || thickness_jitter < 0 || background_level < 0)
    throw Error(Errc::invalid_spec, "negative parameter");
  if (subfield_halfwidth < 1 || subfield_halfwidth > width / 2)
    throw Error(Errc::invalid_spec, "subfield_halfwidth outside 1..width/2");
}

BScan generate_bscan(const PhantomSpec& spec, Rng& rng) {
  spec.validate();
  const int H = spec.height, W = spec.width;
  const double center = (W - 1) / 2.0;

  // Draw order is fixed: scale jitter, bottom contour, per-band wobble.
  const double jit = 1.0 + spec.thickness_jitter * (2.0 * rng.next_f64() - 1.0);
  const CosineSeries bottom = CosineSeries::draw(spec.contour_amplitude, rng);
  const double wobble_rel = std::min(0.2, spec.contour_amplitude / 40.0);
  std::array<CosineSeries, kNumLayers> wobble;
  for (int k = 0; k < kNumLayers; ++k) wobble[k] = CosineSeries::draw(wobble_rel, rng);

  const double pit_sigma =
      spec.foveal_pit_width > 0 ? spec.foveal_pit_width / 2.3548200450309493 : 0.0;

  BScan b;
  b.seg.rows.resize(kNumBoundaries, W);
  for (int c = 0; c < W; ++c) {
    const double x = W > 1 ? static_cast<double>(c) / (W - 1) : 0.0;
    const double pit =
        pit_sigma > 0 ? std::exp(-0.5 * std::pow((c - center) / pit_sigma, 2)) : 0.0;

    std::array<double, kNumLayers> t;
    for (int k = 0; k < kNumLayers; ++k) {
      double tk = spec.layer_base_thickness[k] * jit * (1.0 + wobble[k].at(x));
      if (k < static_cast<int>(kPitShare.size()))
        tk -= spec.foveal_pit_depth * kPitShare[k] * pit;
      t[k] = std::max(tk, 0.25);
    }

    if (spec.cls == Label::AD && spec.signal.thinning_fraction > 0) {
      const double win = spec.signal.region == SignalRegion::global
                             ? 1.0
                             : subfield_window(c, center, spec.subfield_halfwidth);
      t[spec.signal.target_layer] *= 1.0 - spec.signal.thinning_fraction * win;
    }

    double depth = spec.bottom_depth_frac * H + bottom.at(x);
    b.seg.rows(kNumBoundaries - 1, c) = static_cast<float>(depth);
    for (int j = kNumBoundaries - 2; j >= 0; --j) {
      depth -= t[j];
      b.seg.rows(j, c) = static_cast<float>(depth);
    }
  }

  for (int c = 0; c < W; ++c) {
    if (b.seg.rows(0, c) < 0.0f || b.seg.rows(kNumBoundaries - 1, c) >= static_cast<float>(H))
      throw Error(Errc::invalid_spec, "contours leave the image");
  }
  if (!b.seg.monotonic()) throw Error(Errc::invalid_spec, "thinning violates contour order");

  // Pixels: layer bands filled with base intensity times multiplicative
  // speckle; everything above ILM / below OB_RPE is dim background noise.
  b.pixels.resize(H, W);
  for (int c = 0; c < W; ++c) {
    const auto bc = [&](int j) { return static_cast<double>(b.seg.rows(j, c)); };
    int band = 0;
    for (int r = 0; r < H; ++r) {
      double v;
      if (r < bc(0) || r > bc(kNumBoundaries - 1)) {
        v = spec.background_level * rng.next_f64();
      } else {
        while (band + 1 < kNumLayers && r >= bc(band + 1)) ++band;
        double speckle =
            spec.speckle_sigma > 0 ? std::exp(spec.speckle_sigma * rng.next_normal()) : 1.0;
        v = spec.layer_base_intensity[band] * speckle;
      }
      b.pixels(r, c) = static_cast<uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
  }
  return b;
}

double mean_band_thickness(const Segmentation& seg, int layer, int c0, int c1) {
  if (layer < 0 || layer >= kNumLayers) throw Error(Errc::invalid_argument, "layer out of range");
  c0 = std::max(c0, 0);
  c1 = std::min(c1, seg.width() - 1);
  if (c1 < c0) throw Error(Errc::invalid_argument, "empty column range");
  double sum = 0;
  for (int c = c0; c <= c1; ++c) sum += seg.rows(layer + 1, c) - seg.rows(layer, c);
  return sum / (c1 - c0 + 1);
}

namespace {

struct SubjectPlan {
  std::string id;
  int age;
  Sex sex;
  int instance;
  std::optional<double> years;
  Label label;
  std::vector<Eye> eyes;
};

}  // namespace

Manifest generate_cohort(int n_ad_scans, int n_cn_scans, const PhantomSpec& spec_template,
                         const CohortOptions& opt, Rng& rng, const std::string& out_dir) {
  if (n_ad_scans < 1 || n_cn_scans < 1)
    throw Error(Errc::invalid_argument, "need at least one scan per class");
  std::filesystem::create_directories(out_dir);

  std::vector<SubjectPlan> subjects;
  int next_id = 1;
  const auto make_id = [&next_id]() {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%04d", next_id++);
    return std::string(buf);
  };

  int remaining = n_ad_scans;
  std::vector<size_t> ad_index;
  while (remaining > 0) {
    SubjectPlan s;
    s.id = make_id();
    s.age = opt.age_min + rng.next_int(opt.age_max - opt.age_min + 1);
    s.sex = rng.next_f64() < 0.5 ? Sex::F : Sex::M;
    s.instance = rng.next_f64() < 0.5 ? 0 : 1;
    s.years = rng.next_f64() * opt.year_cap;
    s.label = Label::AD;
    const bool two = remaining >= 2 && rng.next_f64() < opt.two_eye_prob;
    if (two) s.eyes = {Eye::L, Eye::R};
    else s.eyes = {rng.next_f64() < 0.5 ? Eye::L : Eye::R};
    remaining -= static_cast<int>(s.eyes.size());
    ad_index.push_back(subjects.size());
    subjects.push_back(std::move(s));
  }

  // One demographically identical control per AD subject while the scan
  // budget allows, then random controls.
  remaining = n_cn_scans;
  for (size_t i = 0; i < ad_index.size() && remaining > 0; ++i) {
    const SubjectPlan& ad = subjects[ad_index[i]];
    SubjectPlan s;
    s.id = make_id();
    s.age = ad.age;
    s.sex = ad.sex;
    s.instance = ad.instance;
    s.label = Label::CN;
    s.eyes = {rng.next_f64() < 0.5 ? Eye::L : Eye::R};
    remaining -= 1;
    subjects.push_back(std::move(s));
  }
  while (remaining > 0) {
    SubjectPlan s;
    s.id = make_id();
    s.age = opt.age_min + rng.next_int(opt.age_max - opt.age_min + 1);
    s.sex = rng.next_f64() < 0.5 ? Sex::F : Sex::M;
    s.instance = rng.next_f64() < 0.5 ? 0 : 1;
    s.label = Label::CN;
    const bool two = remaining >= 2 && rng.next_f64() < opt.two_eye_prob;
    if (two) s.eyes = {Eye::L, Eye::R};
    else s.eyes = {rng.next_f64() < 0.5 ? Eye::L : Eye::R};
    remaining -= static_cast<int>(s.eyes.size());
    subjects.push_back(std::move(s));
  }

  Manifest m;
  uint64_t scan_index = 0;
  for (const SubjectPlan& s : subjects) {
    for (Eye eye : s.eyes) {
      PhantomSpec spec = spec_template;
      spec.cls = s.label;
      Rng scan_rng = rng.fork(scan_index++);
      BScan b = generate_bscan(spec, scan_rng);

      SubjectRecord r;
      r.subject_id = s.id;
      r.eye = eye;
      r.age = s.age;
      r.sex = s.sex;
      r.instance = s.instance;
      r.years_to_diagnosis = s.years;
      r.label = s.label;
      r.image_path = s.id + std::string("_") + to_string(eye) + std::to_string(s.instance) + ".oct1";
      write_tensor(out_dir + "/" + r.image_path, TensorFile::from_u16(b.pixels));
      write_tensor(out_dir + "/" + r.image_path + ".seg", b.seg.to_tensor());
      m.rows.push_back(std::move(r));
    }
  }
  m.save(out_dir + "/manifest.csv");
  return m;
}

}  // namespace octad::phantom
