#include <doctest.h>

#include "octad/augment.hpp"

using namespace octad;
using namespace octad::augment;

namespace {

Composite phantom_composite(uint64_t seed, int h = 128, int w = 48) {
  Rng rng(seed);
  phantom::PhantomSpec s = phantom::PhantomSpec::defaults(h + 32, w);
  return preprocess::run_pipeline(phantom::generate_bscan(s, rng), h, w,
                                  ChannelMode::composite);
}

bool channels_equal(const Composite& a, const Composite& b, int k) {
  return a.ch[k] == b.ch[k];
}

}  // namespace

TEST_CASE("op kinds draw uniformly and never include rotation or shear") {
  Ranges rg;
  Rng rng(101);
  std::array<int, kNumKinds> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const AugmentOp op = sample_op(rg, rng);
    counts[static_cast<int>(op.kind)]++;
  }
  for (int k = 0; k < kNumKinds; ++k)
    CHECK(std::abs(counts[k] / static_cast<double>(n) - 0.125) <= 0.02);
}

TEST_CASE("sampled parameters stay inside the documented ranges") {
  Ranges rg;
  Rng rng(55);
  for (int i = 0; i < 2000; ++i) {
    const AugmentOp op = sample_op(rg, rng);
    switch (op.kind) {
      case AugKind::translate:
        CHECK(std::abs(op.tx) <= rg.translate_max);
        CHECK(std::abs(op.ty) <= rg.translate_max);
        break;
      case AugKind::scale:
        CHECK(op.scale >= rg.scale_min);
        CHECK(op.scale <= rg.scale_max);
        break;
      case AugKind::occlude:
        CHECK(op.occ_w * op.occ_h <= rg.occlude_area_max + 1e-9);
        break;
      case AugKind::contrast:
        CHECK(op.gamma >= rg.contrast_min);
        CHECK(op.gamma <= rg.contrast_max);
        break;
      case AugKind::vessel_shadow:
        CHECK(op.vessels.size() >= static_cast<size_t>(rg.vessel_count_min));
        CHECK(op.vessels.size() <= static_cast<size_t>(rg.vessel_count_max));
        for (const VesselBand& v : op.vessels) {
          CHECK(v.width_px >= rg.vessel_width_min);
          CHECK(v.width_px <= rg.vessel_width_max);
          CHECK(v.factor >= rg.vessel_factor_min);
          CHECK(v.factor <= rg.vessel_factor_max);
        }
        break;
      case AugKind::noise:
        CHECK(op.noise_sigma <= rg.noise_sigma_max);
        break;
      default:
        break;
    }
  }
}

TEST_CASE("identity probability is configurable") {
  Ranges rg;
  Rng rng(12);
  rg.identity_prob = 1.0;
  for (int i = 0; i < 50; ++i) CHECK(sample_op(rg, rng).kind == AugKind::identity);
  rg.identity_prob = 0.0;
  for (int i = 0; i < 200; ++i) CHECK(sample_op(rg, rng).kind != AugKind::identity);
}

TEST_CASE("deterministic seed gives a fixed op sequence") {
  Ranges rg;
  Rng a(7), b(7);
  for (int i = 0; i < 50; ++i) {
    const AugmentOp x = sample_op(rg, a);
    const AugmentOp y = sample_op(rg, b);
    CHECK(x.kind == y.kind);
    CHECK(x.tx == y.tx);
    CHECK(x.scale == y.scale);
    CHECK(x.gamma == y.gamma);
  }
}

TEST_CASE("identity op returns the input unchanged") {
  const Composite c = phantom_composite(1);
  AugmentOp op;
  op.kind = AugKind::identity;
  Rng rng(0);
  const Composite out = apply(op, c, rng);
  for (int k = 0; k < 3; ++k) CHECK(channels_equal(out, c, k));
}

TEST_CASE("hflip is an involution") {
  const Composite c = phantom_composite(2);
  AugmentOp op;
  op.kind = AugKind::hflip;
  Rng rng(0);
  const Composite once = apply(op, c, rng);
  const Composite twice = apply(op, once, rng);
  for (int k = 0; k < 3; ++k) CHECK(channels_equal(twice, c, k));
}

TEST_CASE("vessel shadows change only the shadow columns of channel 1") {
  const Composite c = phantom_composite(3);
  AugmentOp op;
  op.kind = AugKind::vessel_shadow;
  op.vessels = {{0.25, 6, 0.5}, {0.75, 4, 0.4}};
  Rng rng(0);
  const Composite out = apply(op, c, rng);
  CHECK(channels_equal(out, c, 1));
  CHECK(channels_equal(out, c, 2));

  std::vector<bool> shadowed(c.width(), false);
  for (const VesselBand& v : op.vessels) {
    const int center = static_cast<int>(v.center_frac * (c.width() - 1));
    const int w = std::max(1, static_cast<int>(v.width_px));
    for (int col = std::max(0, center - w / 2);
         col <= std::min(c.width() - 1, center + w - w / 2 - 1); ++col)
      shadowed[col] = true;
  }
  for (int col = 0; col < c.width(); ++col) {
    const bool differs = (out.ch[0].col(col).array() != c.ch[0].col(col).array()).any();
    if (!shadowed[col]) CHECK_FALSE(differs);
  }
}

TEST_CASE("raw-only ops leave channels 2-3 bit-identical (1000 random draws)") {
  const Composite c = phantom_composite(4);
  Ranges rg;
  Rng rng(909);
  int raw_only_seen = 0;
  for (int i = 0; i < 1000; ++i) {
    AugmentOp op = sample_op(rg, rng);
    if (!op.raw_only()) continue;
    ++raw_only_seen;
    const Composite out = apply(op, c, rng);
    CHECK(channels_equal(out, c, 1));
    CHECK(channels_equal(out, c, 2));
  }
  CHECK(raw_only_seen > 300);
}

TEST_CASE("geometric ops move every channel identically") {
  // Coordinate-index images: if the same resampling hits all channels, the
  // displaced fields stay equal across channels.
  const int h = 32, w = 24;
  Composite c;
  for (int k = 0; k < 3; ++k) {
    c.ch[k].resize(h, w);
    for (int col = 0; col < w; ++col)
      for (int row = 0; row < h; ++row)
        c.ch[k](row, col) = static_cast<float>(row * w + col) / (h * w);
  }
  c.seg.rows = MatF::Zero(phantom::kNumBoundaries, w);

  Ranges rg;
  rg.translate_max = 5;
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    AugmentOp op = sample_op(rg, rng);
    if (op.raw_only()) continue;
    const Composite out = apply(op, c, rng);
    CHECK(out.ch[0] == out.ch[1]);
    CHECK(out.ch[1] == out.ch[2]);
  }
}

TEST_CASE("augmented values stay in [0,1]") {
  const Composite c = phantom_composite(5);
  Ranges rg;
  Rng rng(31);
  for (int i = 0; i < 300; ++i) {
    const AugmentOp op = sample_op(rg, rng);
    const Composite out = apply(op, c, rng);
    for (int k = 0; k < 3; ++k) {
      CHECK(out.ch[k].minCoeff() >= 0.0f);
      CHECK(out.ch[k].maxCoeff() <= 1.0f);
    }
  }
}
