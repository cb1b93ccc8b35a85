#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "rsfuse/error.hpp"
#include "rsfuse/metrics.hpp"

using namespace rsfuse;

namespace {

struct RandomInstance {
  FlowField est, gt;
  MaskGrid valid;
};

RandomInstance random_instance(std::mt19937_64& rng, int w, int h) {
  std::normal_distribution<double> n(0.0, 3.0);
  std::bernoulli_distribution keep(0.85);
  RandomInstance inst{FlowField(w, h), FlowField(w, h), MaskGrid(h, w)};
  bool any = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      inst.est.u(y, x) = n(rng);
      inst.est.v(y, x) = n(rng);
      inst.gt.u(y, x) = n(rng);
      inst.gt.v(y, x) = n(rng);
      inst.valid(y, x) = keep(rng);
      any = any || inst.valid(y, x);
    }
  if (!any) inst.valid(0, 0) = true;
  return inst;
}

double naive_aepe(const RandomInstance& i) {
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < i.valid.rows(); ++y)
    for (int x = 0; x < i.valid.cols(); ++x) {
      if (!i.valid(y, x)) continue;
      const double du = i.est.u(y, x) - i.gt.u(y, x);
      const double dv = i.est.v(y, x) - i.gt.v(y, x);
      sum += std::sqrt(du * du + dv * dv);
      ++count;
    }
  return sum / count;
}

double naive_pck(const RandomInstance& i, double tau) {
  long hit = 0, count = 0;
  for (int y = 0; y < i.valid.rows(); ++y)
    for (int x = 0; x < i.valid.cols(); ++x) {
      if (!i.valid(y, x)) continue;
      const double du = i.est.u(y, x) - i.gt.u(y, x);
      const double dv = i.est.v(y, x) - i.gt.v(y, x);
      if (std::sqrt(du * du + dv * dv) < tau) ++hit;
      ++count;
    }
  return 100.0 * hit / count;
}

}  // namespace

TEST_CASE("pairwise_sum agrees with simple accumulation") {
  std::vector<double> exact;
  for (int i = 1; i <= 1000; ++i) exact.push_back(i);
  CHECK(pairwise_sum(exact) == 500500.0);

  std::vector<double> empty;
  CHECK(pairwise_sum(empty) == 0.0);

  std::mt19937_64 rng(81);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> vals(777);
  for (auto& v : vals) v = n(rng);
  const double naive = std::accumulate(vals.begin(), vals.end(), 0.0);
  CHECK(pairwise_sum(vals) == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("aepe basics") {
  const int w = 12, h = 8;
  FlowField a(w, h), b(w, h);
  MaskGrid valid = MaskGrid::Constant(h, w, true);
  CHECK(aepe(a, b, valid) == 0.0);

  b.u.setConstant(1.0);
  CHECK(aepe(a, b, valid) == doctest::Approx(1.0));

  valid.setConstant(false);
  CHECK_THROWS_AS(aepe(a, b, valid), Error);

  FlowField wrong(w + 1, h);
  valid.setConstant(true);
  CHECK_THROWS_AS(aepe(a, wrong, valid), Error);
}

TEST_CASE("pck basics") {
  const int w = 12, h = 8;
  FlowField a(w, h), b(w, h);
  MaskGrid valid = MaskGrid::Constant(h, w, true);
  CHECK(pck(a, b, valid, 1.0) == 100.0);
  CHECK(pck(a, b, valid, 0.5) == 100.0);

  b.u.setConstant(3.0);
  CHECK(pck(a, b, valid, 1.0) == 0.0);
  CHECK(pck(a, b, valid, 5.0) == 100.0);
  // strict comparison: an error exactly at tau does not count
  CHECK(pck(a, b, valid, 3.0) == 0.0);
}

TEST_CASE("aepe and pck match naive double-loop oracles") {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 50; ++trial) {
    const RandomInstance inst = random_instance(rng, 17, 11);
    CHECK(std::abs(aepe(inst.est, inst.gt, inst.valid) - naive_aepe(inst)) <
          1e-9);
    for (const double tau : {0.5, 2.0, 5.0})
      CHECK(pck(inst.est, inst.gt, inst.valid, tau) ==
            doctest::Approx(naive_pck(inst, tau)).epsilon(1e-12));
  }
}

TEST_CASE("pck is monotone in tau") {
  std::mt19937_64 rng(83);
  const RandomInstance inst = random_instance(rng, 23, 19);
  double prev = -1.0;
  for (double tau = 0.25; tau <= 16.0; tau *= 2) {
    const double p = pck(inst.est, inst.gt, inst.valid, tau);
    CHECK(p >= prev);
    CHECK(p >= 0.0);
    CHECK(p <= 100.0);
    prev = p;
  }
}

TEST_CASE("aepe satisfies the triangle bound") {
  std::mt19937_64 rng(84);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomInstance ab = random_instance(rng, 9, 7);
    RandomInstance bc = ab;
    std::normal_distribution<double> n(0.0, 2.0);
    FlowField c(9, 7);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) {
        c.u(y, x) = n(rng);
        c.v(y, x) = n(rng);
      }
    const double ac = aepe(ab.est, c, ab.valid);
    const double abv = aepe(ab.est, ab.gt, ab.valid);
    const double bcv = aepe(ab.gt, c, ab.valid);
    CHECK(ac <= abv + bcv + 1e-12);
  }
}

TEST_CASE("pme basics") {
  Homography h = Mat3::Identity();
  h(0, 2) = 3.0;
  std::vector<Correspondence> pairs;
  for (int i = 0; i < 6; ++i)
    pairs.push_back({Vec2(i * 7, i * 5), Vec2(i * 7 + 3, i * 5), 1.0});
  CHECK(pme(h, pairs) < 1e-12);

  std::vector<Correspondence> offset;
  for (int i = 0; i < 6; ++i)
    offset.push_back({Vec2(i * 7, i * 5), Vec2(i * 7, i * 5 + 2), 1.0});
  CHECK(pme(Mat3::Identity(), offset) == doctest::Approx(2.0));

  std::vector<Correspondence> none;
  CHECK_THROWS_AS(pme(Mat3::Identity(), none), Error);
}

TEST_CASE("pme matches a scalar oracle on random instances") {
  std::mt19937_64 rng(85);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int trial = 0; trial < 50; ++trial) {
    Homography h;
    h << 1 + 0.01 * n(rng) / 20, 0.002 * n(rng) / 20, n(rng),
        0.002 * n(rng) / 20, 1 + 0.01 * n(rng) / 20, n(rng), 1e-6 * n(rng) / 20,
        1e-6 * n(rng) / 20, 1.0;
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 25; ++i)
      pairs.push_back({Vec2(n(rng) + 50, n(rng) + 50), Vec2(n(rng), n(rng)), 1});
    double sum = 0.0;
    for (const auto& c : pairs) {
      const Vec3 r = h * Vec3(c.p.x(), c.p.y(), 1.0);
      sum += (Vec2(r.x() / r.z(), r.y() / r.z()) - c.q).norm();
    }
    CHECK(std::abs(pme(h, pairs) - sum / pairs.size()) < 1e-9);
  }
}

TEST_CASE("pme excludes degenerate projections with a count") {
  Homography h = Mat3::Identity();
  h(2, 0) = -0.1;  // w = 0 along x = 10
  std::vector<Correspondence> pairs{{Vec2(10.0, 3.0), Vec2(0, 0), 1.0},
                                    {Vec2(0.0, 0.0), Vec2(0, 0), 1.0},
                                    {Vec2(5.0, 1.0), Vec2(10, 2), 1.0}};
  int excluded = 0;
  const double v = pme(h, pairs, &excluded);
  CHECK(excluded == 1);
  CHECK(std::isfinite(v));
}

TEST_CASE("pme array variant picks the patch of the source row") {
  HomographyArray arr;
  arr.width = 100;
  arr.height = 100;
  Mat3 top = Mat3::Identity();
  top(0, 2) = 1.0;
  Mat3 bottom = Mat3::Identity();
  bottom(0, 2) = 5.0;
  arr.h.push_back(top);
  arr.h.push_back(bottom);
  std::vector<Correspondence> pairs{{Vec2(10, 10), Vec2(11, 10), 1.0},
                                    {Vec2(10, 90), Vec2(15, 90), 1.0}};
  CHECK(pme(arr, pairs) < 1e-12);
  // swapping the patches misattributes both points
  std::swap(arr.h[0], arr.h[1]);
  CHECK(pme(arr, pairs) == doctest::Approx(4.0));
}

TEST_CASE("error_heatmap per-pixel errors") {
  const int w = 10, h = 6;
  FlowField a(w, h), b(w, h);
  Grid zero = error_heatmap(a, b);
  CHECK(zero.maxCoeff() == 0.0);

  b.u(3, 4) = 3.0;
  b.v(3, 4) = 4.0;
  const Grid one = error_heatmap(a, b);
  CHECK(one(3, 4) == doctest::Approx(5.0));
  CHECK(one.sum() == doctest::Approx(5.0));

  FlowField wrong(w, h + 2);
  CHECK_THROWS_AS(error_heatmap(a, wrong), Error);
}

TEST_CASE("error_heatmap matches a scalar oracle") {
  std::mt19937_64 rng(86);
  const RandomInstance inst = random_instance(rng, 14, 9);
  const Grid g = error_heatmap(inst.est, inst.gt);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 14; ++x) {
      const double du = inst.est.u(y, x) - inst.gt.u(y, x);
      const double dv = inst.est.v(y, x) - inst.gt.v(y, x);
      CHECK(g(y, x) == doctest::Approx(std::hypot(du, dv)).epsilon(1e-12));
    }
}
