#include <doctest.h>

#include <filesystem>

#include "octad/phantom.hpp"

using namespace octad;
using namespace octad::phantom;

namespace {

PhantomSpec flat_spec(int h = 120, int w = 40) {
  PhantomSpec s = PhantomSpec::defaults(h, w);
  s.speckle_sigma = 0;
  s.contour_amplitude = 0;
  s.thickness_jitter = 0;
  s.foveal_pit_depth = 0;
  s.background_level = 0;
  return s;
}

}  // namespace

TEST_CASE("noise-free flat phantom matches the analytic layer spec") {
  const PhantomSpec s = flat_spec();
  Rng rng(1);
  const BScan b = generate_bscan(s, rng);
  REQUIRE(b.seg.monotonic());
  for (int k = 0; k < kNumLayers; ++k) {
    const double t = mean_band_thickness(b.seg, k, 0, s.width - 1);
    CHECK(t == doctest::Approx(s.layer_base_thickness[k]).epsilon(1e-6));
  }
  // Piecewise-constant image: inside band k every pixel equals the band's
  // base intensity.
  for (int c = 0; c < s.width; c += 7) {
    for (int k = 0; k < kNumLayers; ++k) {
      const int r = static_cast<int>(std::ceil(b.seg.rows(k, c)));
      if (static_cast<float>(r) < b.seg.rows(k + 1, c))
        CHECK(b.pixels(r, c) == static_cast<uint16_t>(s.layer_base_intensity[k]));
    }
  }
}

TEST_CASE("subfield thinning reduces mean thickness by the configured fraction") {
  PhantomSpec s = PhantomSpec::defaults(650, 512);
  s.signal.target_layer = 6;
  s.signal.thinning_fraction = 0.3;
  s.signal.region = SignalRegion::central_subfield;

  PhantomSpec s_cn = s;
  s_cn.cls = Label::CN;
  PhantomSpec s_ad = s;
  s_ad.cls = Label::AD;

  Rng rng_cn(99), rng_ad(99);
  const BScan cn = generate_bscan(s_cn, rng_cn);
  const BScan ad = generate_bscan(s_ad, rng_ad);

  const int center = (s.width - 1) / 2;
  const int hw = s.subfield_halfwidth;
  const double t_cn = mean_band_thickness(cn.seg, 6, center - hw, center + hw);
  const double t_ad = mean_band_thickness(ad.seg, 6, center - hw, center + hw);
  CHECK(std::abs(t_ad - 0.7 * t_cn) < 0.5);

  // Far from the subfield the two classes coincide.
  const double far_cn = mean_band_thickness(cn.seg, 6, 0, 10);
  const double far_ad = mean_band_thickness(ad.seg, 6, 0, 10);
  CHECK(far_ad == doctest::Approx(far_cn).epsilon(1e-6));
}

TEST_CASE("same spec and seed give identical scans") {
  PhantomSpec s = PhantomSpec::defaults(160, 64);
  Rng a(7), b(7);
  const BScan x = generate_bscan(s, a);
  const BScan y = generate_bscan(s, b);
  CHECK(x.pixels == y.pixels);
  CHECK(x.seg.rows == y.seg.rows);
}

TEST_CASE("thinning 0 makes AD and CN generators identical") {
  PhantomSpec s = PhantomSpec::defaults(160, 64);
  s.signal.thinning_fraction = 0;
  PhantomSpec s_ad = s;
  s_ad.cls = Label::AD;
  Rng a(3), b(3);
  const BScan cn = generate_bscan(s, a);
  const BScan ad = generate_bscan(s_ad, b);
  CHECK(cn.pixels == ad.pixels);
  CHECK(cn.seg.rows == ad.seg.rows);
}

TEST_CASE("contour monotonicity holds over 100 random specs") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    PhantomSpec s = PhantomSpec::defaults(100 + rng.next_int(200), 32 + rng.next_int(96));
    s.speckle_sigma = rng.next_f64() * 0.5;
    s.thickness_jitter = rng.next_f64() * 0.2;
    s.contour_amplitude = rng.next_f64() * 0.01 * s.height;
    s.signal.thinning_fraction = rng.next_f64() * 0.6;
    s.signal.target_layer = rng.next_int(kNumLayers);
    s.signal.region =
        rng.next_f64() < 0.5 ? SignalRegion::central_subfield : SignalRegion::global;
    s.cls = rng.next_f64() < 0.5 ? Label::AD : Label::CN;
    Rng scan_rng(rng.next_u64());
    const BScan b = generate_bscan(s, scan_rng);
    REQUIRE(b.seg.monotonic());
    REQUIRE(b.seg.rows.minCoeff() >= 0.0f);
    REQUIRE(b.seg.rows.maxCoeff() < static_cast<float>(s.height));
  }
}

TEST_CASE("invalid specs are rejected") {
  PhantomSpec s = PhantomSpec::defaults(120, 40);
  s.signal.thinning_fraction = 1.0;
  Rng rng(1);
  CHECK_THROWS_AS(generate_bscan(s, rng), Error);
  s.signal.thinning_fraction = 0.2;
  s.signal.target_layer = 12;
  CHECK_THROWS_AS(generate_bscan(s, rng), Error);
}

TEST_CASE("generate_cohort emits the requested scan counts and a valid manifest") {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "octad_phantom_cohort").string();
  std::filesystem::remove_all(dir);
  PhantomSpec s = PhantomSpec::defaults(100, 32);
  CohortOptions opt;
  Rng rng(11);
  const Manifest m = generate_cohort(28, 30, s, opt, rng, dir);
  CHECK(m.rows.size() == 58);
  int n_ad = 0, n_cn = 0;
  for (const SubjectRecord& r : m.rows) (r.label == Label::AD ? n_ad : n_cn)++;
  CHECK(n_ad == 28);
  CHECK(n_cn == 30);

  // The written manifest passes validation on reload (closure property).
  const Manifest reloaded = Manifest::load(dir + "/manifest.csv");
  CHECK(reloaded.rows.size() == 58);

  // Image and contour tensors exist for each row.
  for (const SubjectRecord& r : reloaded.rows) {
    const TensorFile img = read_tensor(dir + "/" + r.image_path);
    CHECK(img.dims == std::vector<uint32_t>{100, 32});
    const TensorFile seg = read_tensor(dir + "/" + r.image_path + ".seg");
    CHECK(seg.dims == std::vector<uint32_t>{11, 32});
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("generate_cohort with one scan per class") {
  const std::string dir = (std::filesystem::temp_directory_path() / "octad_phantom_two").string();
  std::filesystem::remove_all(dir);
  PhantomSpec s = PhantomSpec::defaults(100, 32);
  CohortOptions opt;
  Rng rng(5);
  const Manifest m = generate_cohort(1, 1, s, opt, rng, dir);
  REQUIRE(m.rows.size() == 2);
  CHECK(m.rows[0].label == Label::AD);
  CHECK(m.rows[1].label == Label::CN);
  // Matching feasibility: the control mirrors the case demographics.
  CHECK(m.rows[0].age == m.rows[1].age);
  CHECK(m.rows[0].sex == m.rows[1].sex);
  CHECK(m.rows[0].instance == m.rows[1].instance);
  std::filesystem::remove_all(dir);
}
