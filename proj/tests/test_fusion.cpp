#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rsfuse/error.hpp"
#include "rsfuse/fusion.hpp"
#include "rsfuse/metrics.hpp"
#include "rsfuse/synth.hpp"

using namespace rsfuse;

namespace {

Grid texture_grid(int w, int h, std::uint64_t seed) {
  Grid g(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g(y, x) = procedural_texture(x, y, seed);
  return g;
}

double field_aepe(const FlowField& a, const FlowField& b) {
  return ((a.u - b.u).square() + (a.v - b.v).square()).sqrt().mean();
}

SynthSpec small_rotation_spec() {
  SynthSpec spec;
  spec.intrinsics = {220, 220, 80, 64, 160, 128};
  spec.rolling_shutter.patch_count = 4;
  spec.trajectory.push_back({1.0, Vec3(0, 0, 0.4)});
  spec.frame_count = 2;
  spec.seed = 5;
  return spec;
}

}  // namespace

TEST_CASE("beta ladder validation enforces the ordering chain") {
  BetaLadder ok;
  CHECK_NOTHROW(ok.validate());

  BetaLadder strict_tail{{1.0, 0.9, 0.7, 0.3, 0.3}};
  CHECK_THROWS_AS(strict_tail.validate(), Error);  // beta5 must be < beta4

  BetaLadder unordered{{1.0, 0.7, 0.9, 0.5, 0.3}};
  CHECK_THROWS_AS(unordered.validate(), Error);

  BetaLadder out_of_range{{1.2, 0.9, 0.7, 0.5, 0.3}};
  CHECK_THROWS_AS(out_of_range.validate(), Error);

  BetaLadder ties{{0.9, 0.9, 0.9, 0.9, 0.3}};
  CHECK_NOTHROW(ties.validate());  // non-strict chain is allowed above beta5
}

TEST_CASE("constrain_map midpoint, limits, and a worked value") {
  BetaLadder ladder;
  Grid h(4, 4);

  h.setZero();
  FusionMap mid = constrain_map(h, 2, ladder);
  CHECK((mid.m - 0.5 * (0.9 + 0.7)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(mid.lower == doctest::Approx(0.7));
  CHECK(mid.upper == doctest::Approx(0.9));

  h.setConstant(80.0);
  CHECK((constrain_map(h, 2, ladder).m - 0.7).cwiseAbs().maxCoeff() < 1e-12);
  h.setConstant(-80.0);
  CHECK((constrain_map(h, 2, ladder).m - 0.9).cwiseAbs().maxCoeff() < 1e-12);

  h.setConstant(std::log(3.0));
  // sigmoid(ln 3) = 0.75
  CHECK((constrain_map(h, 2, ladder).m - 0.75).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constrain_map rejects levels without a beta pair") {
  Grid h = Grid::Zero(2, 2);
  BetaLadder ladder;
  CHECK_THROWS_AS(constrain_map(h, 0, ladder), Error);
  CHECK_THROWS_AS(constrain_map(h, 5, ladder), Error);
}

TEST_CASE("constrain_map respects the per-level ordering on identical input") {
  BetaLadder ladder;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 3.0);
  Grid h(6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) h(y, x) = n(rng);

  Grid prev;
  for (int level = 1; level <= 4; ++level) {
    const FusionMap m = constrain_map(h, level, ladder);
    CHECK(m.m.maxCoeff() <= ladder.upper(level));
    CHECK(m.m.minCoeff() > ladder.lower(level));
    // deeper levels always yield a lower residual weight on the same score
    if (level > 1) CHECK((m.m - prev).maxCoeff() < 0.0);
    prev = m.m;
  }
}

TEST_CASE("estimate_fusion_map sits at the gyro bound for aligned input") {
  const Grid img = texture_grid(48, 32, 41);
  BetaLadder ladder;
  const FusionMap m =
      estimate_fusion_map(img, img, FlowField(48, 32), 2, ladder);
  // residual 0 everywhere: the whole map hugs the minimum of its range
  CHECK(m.m.maxCoeff() < m.lower + 0.05 * (m.upper - m.lower));
  CHECK(m.m.minCoeff() >= m.lower);
}

TEST_CASE("estimate_fusion_map is aligned under an exact constant flow") {
  const int w = 64, h = 40;
  Grid a(h, w), b(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      a(y, x) = procedural_texture(x, y, 42);
      b(y, x) = procedural_texture(x - 3, y - 2, 42);  // scene shifted by (3,2)
    }
  FlowField g(w, h);
  g.u.setConstant(3.0);
  g.v.setConstant(2.0);
  BetaLadder ladder;
  const FusionMap m = estimate_fusion_map(a, b, g, 1, ladder);
  // away from warp-invalid borders the map hugs the gyro bound
  const Grid inner = m.m.block(4, 4, h - 8, w - 8);
  CHECK(inner.maxCoeff() < m.lower + 0.1 * (m.upper - m.lower));
}

TEST_CASE("estimate_fusion_map flags a moving square") {
  const int w = 96, h = 64;
  Grid a = texture_grid(w, h, 43);
  Grid b = a;
  for (int y = 20; y < 44; ++y)
    for (int x = 30; x < 62; ++x)
      b(y, x) = procedural_texture(x + 50, y + 70, 99);  // unrelated content
  BetaLadder ladder;
  const FusionMap m = estimate_fusion_map(a, b, FlowField(w, h), 1, ladder);
  double inside = 0.0, outside = 0.0;
  int n_in = 0, n_out = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool in = y >= 20 && y < 44 && x >= 30 && x < 62;
      (in ? inside : outside) += m.m(y, x);
      (in ? n_in : n_out) += 1;
    }
  CHECK(inside / n_in > outside / n_out);
}

TEST_CASE("refine_fusion_map leaves identical masked images untouched") {
  const Grid img = texture_grid(32, 24, 44);
  BetaLadder ladder;
  FusionMap m = constrain_map(Grid::Zero(24, 32), 1, ladder);
  const FusionMap r = refine_fusion_map(m, img, img, -0.2, 0.2);
  CHECK((r.m - m.m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("refine_fusion_map with a collapsed gamma range is a no-op") {
  const Grid a = texture_grid(32, 24, 45);
  const Grid b = texture_grid(32, 24, 46);
  BetaLadder ladder;
  FusionMap m = constrain_map(Grid::Zero(24, 32), 1, ladder);
  const FusionMap r = refine_fusion_map(m, a, b, 0.0, 0.0);
  CHECK((r.m - m.m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("refine_fusion_map rejects an inverted gamma pair") {
  const Grid img = texture_grid(8, 8, 47);
  FusionMap m;
  m.m = Grid::Zero(8, 8);
  CHECK_THROWS_AS(refine_fusion_map(m, img, img, 0.2, -0.2), Error);
}

TEST_CASE("refine_fusion_map raises foreground weight within bounds") {
  const int w = 96, h = 64;
  Grid a = texture_grid(w, h, 48);
  Grid b = a;
  for (int y = 20; y < 44; ++y)
    for (int x = 30; x < 62; ++x) b(y, x) = procedural_texture(x + 31, y, 77);
  BetaLadder ladder;
  FusionMap m = constrain_map(Grid::Zero(h, w), 1, ladder);
  const FusionMap r = refine_fusion_map(m, a, b, -0.2, 0.2);
  CHECK((r.m - m.m).maxCoeff() <= 0.2 + 1e-12);
  CHECK((r.m - m.m).minCoeff() >= -0.2 - 1e-12);
  CHECK(r.m.maxCoeff() <= 1.0);
  CHECK(r.m.minCoeff() >= 0.0);
  double fg = 0.0, bg = 0.0;
  int n_fg = 0, n_bg = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool in = y >= 20 && y < 44 && x >= 30 && x < 62;
      (in ? fg : bg) += r.m(y, x) - m.m(y, x);
      (in ? n_fg : n_bg) += 1;
    }
  CHECK(fg / n_fg > bg / n_bg);
}

TEST_CASE("estimate_residual_flow is zero for identical images") {
  const Grid img = texture_grid(64, 48, 51);
  const FlowField out =
      estimate_residual_flow(img, img, FlowField(64, 48));
  CHECK(out.u.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(out.v.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("estimate_residual_flow recovers a 3 px translation") {
  const int w = 128, h = 96;
  Grid a(h, w), b(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      a(y, x) = procedural_texture(x, y, 52);
      b(y, x) = procedural_texture(x - 3, y, 52);
    }
  const FlowField out = estimate_residual_flow(a, b, FlowField(w, h));
  std::vector<double> us, vs;
  for (int y = 8; y < h - 8; ++y)
    for (int x = 8; x < w - 8; ++x) {
      us.push_back(out.u(y, x));
      vs.push_back(out.v(y, x));
    }
  std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
  std::nth_element(vs.begin(), vs.begin() + vs.size() / 2, vs.end());
  CHECK(us[us.size() / 2] > 2.5);
  CHECK(us[us.size() / 2] < 3.5);
  CHECK(std::abs(vs[vs.size() / 2]) < 0.5);
}

TEST_CASE("estimate_residual_flow keeps a correct init intact") {
  const SynthSpec spec = small_rotation_spec();
  const SynthProject proj = synth_sequence(spec);
  const FlowField& gt = proj.gt_flow[0];
  const FlowField out =
      estimate_residual_flow(proj.images[0], proj.images[1], gt);
  CHECK(field_aepe(out, gt) <= field_aepe(gt, gt) + 0.05);
}

TEST_CASE("fuse selects endpoints and blends arithmetically") {
  const int w = 8, h = 6;
  FlowField o(w, h), g(w, h);
  o.u.setConstant(2.0);
  o.v.setConstant(2.0);
  g.u.setConstant(4.0);
  g.v.setConstant(0.0);

  FusionMap m;
  m.m = Grid::Constant(h, w, 1.0);
  FlowField f = fuse(o, g, m);
  CHECK((f.u - o.u).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.v - o.v).cwiseAbs().maxCoeff() == 0.0);

  m.m.setZero();
  f = fuse(o, g, m);
  CHECK((f.u - g.u).cwiseAbs().maxCoeff() == 0.0);

  m.m.setConstant(0.5);
  f = fuse(o, g, m);
  CHECK((f.u - 3.0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((f.v - 1.0).cwiseAbs().maxCoeff() < 1e-15);

  FlowField wrong(w + 1, h);
  CHECK_THROWS_AS(fuse(o, wrong, m), Error);
}

TEST_CASE("fuse output lies between its inputs at every pixel") {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> n(0.0, 4.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int w = 13, h = 9;
  for (int trial = 0; trial < 100; ++trial) {
    FlowField o(w, h), g(w, h);
    FusionMap m;
    m.m = Grid(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        o.u(y, x) = n(rng);
        o.v(y, x) = n(rng);
        g.u(y, x) = n(rng);
        g.v(y, x) = n(rng);
        m.m(y, x) = u01(rng);
      }
    const FlowField f = fuse(o, g, m);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        CHECK(f.u(y, x) >= std::min(o.u(y, x), g.u(y, x)) - 1e-12);
        CHECK(f.u(y, x) <= std::max(o.u(y, x), g.u(y, x)) + 1e-12);
        CHECK(f.v(y, x) >= std::min(o.v(y, x), g.v(y, x)) - 1e-12);
        CHECK(f.v(y, x) <= std::max(o.v(y, x), g.v(y, x)) + 1e-12);
      }
  }
}

TEST_CASE("run_fusion_pyramid on a static scene stays near zero") {
  const Grid img = texture_grid(96, 64, 54);
  CameraIntrinsics k{150, 150, 48, 32, 96, 64};
  HomographyArray gyro;
  gyro.width = 96;
  gyro.height = 64;
  for (int n = 0; n < 4; ++n) gyro.h.push_back(Mat3::Identity());
  BetaLadder ladder;
  const PyramidResult res = run_fusion_pyramid(img, img, gyro, k, ladder, 4);
  CHECK(field_aepe(res.flow, FlowField(96, 64)) < 0.1);
  CHECK(static_cast<int>(res.maps.size()) == 4);
}

TEST_CASE("run_fusion_pyramid does not degrade a rotation-only pair") {
  const SynthSpec spec = small_rotation_spec();
  const SynthProject proj = synth_sequence(spec);
  BetaLadder ladder;
  const HomographyArray& gyro = proj.gt_homography[0];
  const FlowField gyro_field = homography_array_to_field(
      gyro, spec.intrinsics, spec.intrinsics.width, spec.intrinsics.height);
  const PyramidResult res = run_fusion_pyramid(
      proj.images[0], proj.images[1], gyro, spec.intrinsics, ladder, 4);
  CHECK(field_aepe(res.flow, proj.gt_flow[0]) <=
        field_aepe(gyro_field, proj.gt_flow[0]) + 0.05);
}

TEST_CASE("run_fusion_pyramid rejects indivisible dimensions") {
  const Grid img = texture_grid(90, 64, 55);
  CameraIntrinsics k{150, 150, 45, 32, 90, 64};
  HomographyArray gyro;
  gyro.width = 90;
  gyro.height = 64;
  gyro.h.push_back(Mat3::Identity());
  BetaLadder ladder;
  CHECK_THROWS_AS(run_fusion_pyramid(img, img, gyro, k, ladder, 4), Error);
}

TEST_CASE("run_fusion_pyramid is bit-deterministic across runs") {
  const SynthSpec spec = small_rotation_spec();
  const SynthProject proj = synth_sequence(spec);
  BetaLadder ladder;
  const PyramidResult a = run_fusion_pyramid(
      proj.images[0], proj.images[1], proj.gt_homography[0], spec.intrinsics,
      ladder, 4);
  const PyramidResult b = run_fusion_pyramid(
      proj.images[0], proj.images[1], proj.gt_homography[0], spec.intrinsics,
      ladder, 4);
  CHECK((a.flow.u - b.flow.u).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.flow.v - b.flow.v).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < a.maps.size(); ++i)
    CHECK((a.maps[i].m - b.maps[i].m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gyro dominance tightens toward coarse levels") {
  BetaLadder ladder;
  // max attainable residual weight shrinks from level 1 to level 4
  CHECK(ladder.upper(4) < ladder.upper(1));
  Grid h = Grid::Constant(2, 2, -50.0);  // pushes toward the upper bound
  const double fine = constrain_map(h, 1, ladder).m(0, 0);
  const double coarse = constrain_map(h, 4, ladder).m(0, 0);
  CHECK(coarse < fine);
}

TEST_CASE("downsample_image_2x is a block mean") {
  Grid img(4, 4);
  img << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15;
  const Grid d = downsample_image_2x(img);
  REQUIRE(d.rows() == 2);
  REQUIRE(d.cols() == 2);
  CHECK(d(0, 0) == doctest::Approx(2.5));
  CHECK(d(0, 1) == doctest::Approx(4.5));
  CHECK(d(1, 0) == doctest::Approx(10.5));
  CHECK(d(1, 1) == doctest::Approx(12.5));
}
