#include <doctest.h>

#include "octad/preprocess.hpp"

using namespace octad;
using namespace octad::preprocess;
using phantom::kNumBoundaries;
using phantom::kNumLayers;

namespace {

// Tiny handmade scan with explicit contours.
BScan make_scan(int h, int w, const std::array<float, kNumBoundaries>& flat) {
  BScan b;
  b.pixels = MatU16::Zero(h, w);
  b.seg.rows.resize(kNumBoundaries, w);
  for (int c = 0; c < w; ++c)
    for (int j = 0; j < kNumBoundaries; ++j) b.seg.rows(j, c) = flat[j];
  return b;
}

std::array<float, kNumBoundaries> spread(float top, float step) {
  std::array<float, kNumBoundaries> a;
  for (int j = 0; j < kNumBoundaries; ++j) a[j] = top + step * j;
  return a;
}

bool equal_scan(const BScan& a, const BScan& b) {
  return a.pixels == b.pixels && a.seg.rows == b.seg.rows;
}

}  // namespace

TEST_CASE("rectify is the identity when the bottom contour is already flat") {
  BScan b = make_scan(40, 6, spread(5, 3));  // OB_RPE at 35 everywhere
  b.pixels.setConstant(7);
  const BScan r = rectify(b);
  CHECK(equal_scan(r, b));
}

TEST_CASE("rectify: hand-traced two-column shift") {
  BScan b = make_scan(20, 2, spread(0, 1));
  b.seg.rows(kNumBoundaries - 1, 0) = 10;
  b.seg.rows(kNumBoundaries - 1, 1) = 12;
  b.pixels(10, 0) = 100;
  b.pixels(12, 1) = 100;
  const BScan r = rectify(b);
  CHECK(r.pixels(12, 0) == 100);
  CHECK(r.pixels(12, 1) == 100);
  CHECK(r.seg.rows(kNumBoundaries - 1, 0) == 12.0f);
  CHECK(r.seg.rows(kNumBoundaries - 1, 1) == 12.0f);
}

TEST_CASE("rectify is idempotent") {
  Rng rng(3);
  phantom::PhantomSpec s = phantom::PhantomSpec::defaults(160, 48);
  const BScan b = phantom::generate_bscan(s, rng);
  const BScan once = rectify(b);
  const BScan twice = rectify(once);
  CHECK(equal_scan(once, twice));
}

TEST_CASE("rectified bottom contour spread is at most one pixel (100 random phantoms)") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    phantom::PhantomSpec s = phantom::PhantomSpec::defaults(120 + rng.next_int(100), 40);
    s.contour_amplitude = 0.5 + rng.next_f64() * 0.015 * s.height;
    Rng scan_rng(rng.next_u64());
    const BScan b = rectify(phantom::generate_bscan(s, scan_rng));
    const auto bottom = b.seg.rows.row(kNumBoundaries - 1);
    CHECK(bottom.maxCoeff() - bottom.minCoeff() <= 1.0f);
  }
}

TEST_CASE("rectify preserves in-bounds intensity (shifts, never scales)") {
  Rng rng(5);
  phantom::PhantomSpec s = phantom::PhantomSpec::defaults(160, 48);
  s.background_level = 0;  // keep all mass inside the retina band
  const BScan b = phantom::generate_bscan(s, rng);
  const BScan r = rectify(b);
  long long sum_in = 0, sum_out = 0;
  for (int c = 0; c < b.width(); ++c)
    for (int row = 0; row < b.height(); ++row) {
      sum_in += b.pixels(row, c);
      sum_out += r.pixels(row, c);
    }
  CHECK(sum_in == sum_out);
}

TEST_CASE("strip_background keeps exactly the [ILM, OB_RPE] rows") {
  BScan b = make_scan(20, 4, spread(5, 0.5f));  // ILM=5, OB_RPE=10
  b.pixels.setConstant(1);
  const BScan s = strip_background(b);
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 20; ++r)
      CHECK(s.pixels(r, c) == ((r >= 5 && r <= 10) ? 1 : 0));
}

TEST_CASE("strip_background with contours spanning the full height is the identity") {
  std::array<float, kNumBoundaries> a = spread(0, 1.9f);
  BScan b = make_scan(20, 3, a);
  b.seg.rows.row(kNumBoundaries - 1).setConstant(19.0f);
  b.pixels.setConstant(9);
  const BScan s = strip_background(b);
  CHECK(equal_scan(s, b));
  // Idempotence.
  CHECK(equal_scan(strip_background(s), s));
}

TEST_CASE("crop_center: 650 rows crop to 512 with offset 69") {
  BScan b = make_scan(650, 8, spread(100, 20));
  b.pixels(69, 0) = 42;   // first kept row
  b.pixels(580, 1) = 43;  // last kept row
  const BScan c = crop_center(b, 512, 8);
  CHECK(c.height() == 512);
  CHECK(c.width() == 8);
  CHECK(c.pixels(0, 0) == 42);
  CHECK(c.pixels(511, 1) == 43);
  CHECK(c.seg.rows(0, 0) == 100.0f - 69.0f);
}

TEST_CASE("crop_center of an already-matching input is the identity") {
  BScan b = make_scan(512, 16, spread(50, 30));
  b.pixels.setConstant(3);
  const BScan c = crop_center(b, 512, 16);
  CHECK(equal_scan(c, b));
}

TEST_CASE("crop_center rejects too-small inputs") {
  BScan b = make_scan(300, 16, spread(10, 5));
  CHECK_THROWS_AS(crop_center(b, 512, 16), Error);
}

TEST_CASE("layer mask: uniform image and equal gains are proportional to the strip") {
  BScan b = make_scan(40, 6, spread(5, 3));
  b.pixels.setConstant(1000);
  std::array<double, kNumLayers> gains;
  gains.fill(1.0);
  const MatF mask = make_layer_mask(b, gains);
  const BScan stripped = strip_background(b);
  for (int c = 0; c < 6; ++c)
    for (int r = 0; r < 40; ++r) {
      // The retina band is closed: the OB_RPE row belongs to the last band.
      if (r >= 5 && r <= 35)
        CHECK(mask(r, c) == 1.0f);
      else
        CHECK(mask(r, c) == 0.0f);
    }
  // Zero wherever strip_background zeroes.
  for (int c = 0; c < 6; ++c)
    for (int r = 0; r < 40; ++r)
      if (stripped.pixels(r, c) == 0) CHECK(mask(r, c) == 0.0f);
}

TEST_CASE("layer mask gain doubles one band's mean before renormalization") {
  BScan b = make_scan(40, 6, spread(5, 3));
  b.pixels.setConstant(1000);
  std::array<double, kNumLayers> gains;
  gains.fill(1.0);
  gains[4] = 2.0;
  const MatF mask = make_layer_mask(b, gains);
  // Band 4 spans rows 17..19; band 5 spans 20..22. Max is 2000 so the
  // boosted band lands at 1.0 and the others at 0.5.
  CHECK(mask(17, 2) == 1.0f);
  CHECK(mask(20, 2) == 0.5f);
}

TEST_CASE("contour channel: flat distinct contours rasterize to 11 rows of ones") {
  BScan b = make_scan(40, 12, spread(5, 3));
  const MatF ch = make_contour_channel(b);
  CHECK(ch.sum() == doctest::Approx(11.0f * 12));
  for (int j = 0; j < kNumBoundaries; ++j)
    for (int c = 0; c < 12; ++c) CHECK(ch(5 + 3 * j, c) == 1.0f);
}

TEST_CASE("contour channel: coincident boundaries set a pixel once") {
  std::array<float, kNumBoundaries> a = spread(5, 2);
  a[3] = a[2];  // two boundaries share a row
  BScan b = make_scan(40, 4, a);
  const MatF ch = make_contour_channel(b);
  CHECK(ch.maxCoeff() == 1.0f);
  CHECK(ch.sum() == doctest::Approx(10.0f * 4));
}

TEST_CASE("contour channel: out-of-range contours leave an all-zero channel") {
  BScan b = make_scan(20, 4, spread(100, 3));
  CHECK(make_contour_channel(b).sum() == 0.0f);
}

TEST_CASE("assemble modes") {
  Rng rng(9);
  phantom::PhantomSpec s = phantom::PhantomSpec::defaults(160, 48);
  const BScan b = crop_center(strip_background(rectify(phantom::generate_bscan(s, rng))), 128, 48);

  SUBCASE("raw3 replicates the raw channel") {
    const Composite c = assemble(b, ChannelMode::raw3);
    CHECK(c.ch[0] == c.ch[1]);
    CHECK(c.ch[1] == c.ch[2]);
  }
  SUBCASE("composite's third channel matches the contour rasterization count") {
    const Composite c = assemble(b, ChannelMode::composite);
    CHECK(c.ch[2].sum() == make_contour_channel(b).sum());
    CHECK(c.ch[0].minCoeff() >= 0.0f);
    CHECK(c.ch[0].maxCoeff() <= 1.0f);
    CHECK(c.ch[1].minCoeff() >= 0.0f);
    CHECK(c.ch[1].maxCoeff() <= 1.0f);
  }
  SUBCASE("constant image maps to an all-zero raw channel") {
    BScan flat = b;
    flat.pixels.setConstant(500);
    const Composite c = assemble(flat, ChannelMode::raw3);
    CHECK(c.ch[0].maxCoeff() == 0.0f);
  }
}

TEST_CASE("full pipeline is deterministic") {
  Rng a(31), b(31);
  phantom::PhantomSpec s = phantom::PhantomSpec::defaults(160, 48);
  const BScan x = phantom::generate_bscan(s, a);
  const BScan y = phantom::generate_bscan(s, b);
  const Composite cx = run_pipeline(x, 128, 48, ChannelMode::composite);
  const Composite cy = run_pipeline(y, 128, 48, ChannelMode::composite);
  for (int k = 0; k < 3; ++k) CHECK(cx.ch[k] == cy.ch[k]);
  CHECK(cx.seg.rows == cy.seg.rows);
}

TEST_CASE("composite tensor round-trip") {
  Rng rng(13);
  phantom::PhantomSpec s = phantom::PhantomSpec::defaults(160, 48);
  const Composite c =
      run_pipeline(phantom::generate_bscan(s, rng), 128, 48, ChannelMode::composite);
  const TensorFile t = composite_to_tensor(c);
  CHECK(t.dims == std::vector<uint32_t>{3, 128, 48});
  const Composite back = composite_from_tensors(t, c.seg.to_tensor());
  for (int k = 0; k < 3; ++k) CHECK(back.ch[k] == c.ch[k]);
}
