#include "rsfuse/homography_fit.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "rsfuse/error.hpp"

namespace rsfuse {

namespace {

constexpr double kWeightFloor = 1e-3;

struct Normalization {
  Vec2 centroid = Vec2::Zero();
  double scale = 1.0;

  Mat3 matrix() const {
    Mat3 t;
    t << scale, 0, -scale * centroid.x(), 0, scale, -scale * centroid.y(), 0, 0,
        1;
    return t;
  }
  Vec2 apply(const Vec2& p) const { return scale * (p - centroid); }
};

// Hartley-style: weighted centroid to origin, weighted mean distance sqrt(2).
Normalization normalize_points(std::span<const Correspondence> c,
                               std::span<const double> w, bool second) {
  Normalization n;
  double wsum = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (w[i] <= kWeightFloor) continue;
    n.centroid += w[i] * (second ? c[i].q : c[i].p);
    wsum += w[i];
  }
  n.centroid /= wsum;
  double dist = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (w[i] <= kWeightFloor) continue;
    dist += w[i] * ((second ? c[i].q : c[i].p) - n.centroid).norm();
  }
  dist /= wsum;
  n.scale = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  return n;
}

Homography dlt(std::span<const Correspondence> c, std::span<const double> w) {
  double wsum = 0;
  int effective = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (w[i] > kWeightFloor) {
      wsum += w[i];
      ++effective;
    }
  }
  if (effective < 4)
    throw_numerical("fit_weighted_homography: fewer than 4 effective points");
  const double wmean = wsum / effective;

  const Normalization np = normalize_points(c, w, false);
  const Normalization nq = normalize_points(c, w, true);

  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (w[i] <= kWeightFloor) continue;
    const Vec2 p = np.apply(c[i].p);
    const Vec2 q = nq.apply(c[i].q);
    const double s = w[i] / wmean;
    Eigen::Matrix<double, 9, 1> r1, r2;
    r1 << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
    r2 << 0, 0, 0, p.x(), p.y(), 1, -q.y() * p.x(), -q.y() * p.y(), -q.y();
    ata += s * (r1 * r1.transpose() + r2 * r2.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(ata);
  const auto& ev = es.eigenvalues();
  if (ev(1) < 1e-10 * std::max(ev(8), 1e-300))
    throw_numerical("fit_weighted_homography: rank-deficient configuration");
  const Eigen::Matrix<double, 9, 1> hvec = es.eigenvectors().col(0);
  Mat3 hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7),
      hvec(8);
  Mat3 h = nq.matrix().inverse() * hn * np.matrix();
  if (h(2, 2) < 0) h = -h;
  return normalize_homography(h);
}

}  // namespace

Vec2 apply_homography(const Homography& h, const Vec2& p) {
  const Vec3 r = h * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(r.z()) < 1e-12)
    throw_numerical("apply_homography: degenerate projective divide");
  return Vec2(r.x() / r.z(), r.y() / r.z());
}

std::vector<Correspondence> flow_to_correspondences(const FlowField& f,
                                                    const FusionMap& m,
                                                    int stride) {
  if (stride < 1) throw_validation("flow_to_correspondences: stride must be >= 1");
  if (f.width() != static_cast<int>(m.m.cols()) ||
      f.height() != static_cast<int>(m.m.rows()))
    throw_validation("flow_to_correspondences: dimension mismatch");
  std::vector<Correspondence> out;
  for (int y = 0; y < f.height(); y += stride) {
    for (int x = 0; x < f.width(); x += stride) {
      Correspondence c;
      c.p = Vec2(x, y);
      c.q = Vec2(x + f.u(y, x), y + f.v(y, x));
      c.weight = 1.0 - m.m(y, x);
      out.push_back(c);
    }
  }
  return out;
}

HomographyEstimate fit_weighted_homography(std::span<const Correspondence> c) {
  std::vector<double> w(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!(c[i].weight >= 0) || !c[i].p.allFinite() || !c[i].q.allFinite())
      throw_validation("fit_weighted_homography: invalid correspondence");
    w[i] = c[i].weight;
  }
  Homography h = dlt(c, w);
  // Reweight by clamped inverse reprojection residual and refit.
  for (int pass = 0; pass < 3; ++pass) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i].weight <= kWeightFloor) {
        w[i] = 0;
        continue;
      }
      const double res = (apply_homography(h, c[i].p) - c[i].q).norm();
      w[i] = c[i].weight / std::max(res, 1e-6);
    }
    h = dlt(c, w);
  }
  HomographyEstimate est;
  est.h = h;
  double num = 0, den = 0;
  for (const auto& cc : c) {
    if (cc.weight <= kWeightFloor) continue;
    const double res = (apply_homography(h, cc.p) - cc.q).norm();
    num += cc.weight * res * res;
    den += cc.weight;
  }
  est.support = den;
  est.inlier_rms = den > 0 ? std::sqrt(num / den) : 0.0;
  return est;
}

namespace {

using Params8 = Eigen::Matrix<double, 8, 1>;

Params8 homography_params(const Homography& h) {
  const Homography n = normalize_homography(h);
  Params8 p;
  p << n(0, 0), n(0, 1), n(0, 2), n(1, 0), n(1, 1), n(1, 2), n(2, 0), n(2, 1);
  return p;
}

Homography params_to_homography(const Params8& p) {
  Homography h;
  h << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), 1.0;
  return h;
}

}  // namespace

HomographyArray fit_rs_homography_array(const FlowField& f, const FusionMap& m,
                                        const HomographyArray& gyro,
                                        double lambda, RsFitReport* report,
                                        int stride) {
  if (lambda < 0) throw_validation("fit_rs_homography_array: lambda must be >= 0");
  if (f.width() != gyro.width || f.height() != gyro.height)
    throw_validation("fit_rs_homography_array: field does not match gyro array size");
  if (f.width() != static_cast<int>(m.m.cols()) ||
      f.height() != static_cast<int>(m.m.rows()))
    throw_validation("fit_rs_homography_array: map dimension mismatch");
  const int n = gyro.patch_count();
  const int height = gyro.height;

  // Per patch: residual homography D_n fit on (gyro_n(p), p + flow(p)).
  std::vector<Params8> d_fit(n, homography_params(Homography::Identity()));
  Eigen::VectorXd support = Eigen::VectorXd::Zero(n);
  int inherited = 0;
  for (int pn = 0; pn < n; ++pn) {
    const int y0 = pn * height / n;
    const int y1 = (pn + 1) * height / n;
    std::vector<Correspondence> c;
    for (int y = y0; y < y1; y += stride) {
      for (int x = 0; x < f.width(); x += stride) {
        Correspondence cc;
        cc.p = apply_homography(gyro.h[pn], Vec2(x, y));
        cc.q = Vec2(x + f.u(y, x), y + f.v(y, x));
        cc.weight = 1.0 - m.m(y, x);
        c.push_back(cc);
      }
    }
    int effective = 0;
    for (const auto& cc : c)
      if (cc.weight > kWeightFloor) ++effective;
    if (effective < 4) {
      ++inherited;
      continue;
    }
    try {
      const HomographyEstimate est = fit_weighted_homography(c);
      d_fit[pn] = homography_params(est.h);
      support(pn) = est.support;
    } catch (const Error&) {
      ++inherited;
    }
  }
  if (report) report->inherited_patches = inherited;

  // Quadratic smoothing along the patch axis, with a tiny prior toward the
  // identity residual so unsupported patches inherit their gyro homography.
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    lap(i, i) += 1;
    lap(i + 1, i + 1) += 1;
    lap(i, i + 1) -= 1;
    lap(i + 1, i) -= 1;
  }
  const double eps = 1e-12;
  Eigen::MatrixXd a = lambda * lap + eps * Eigen::MatrixXd::Identity(n, n);
  a.diagonal() += support;
  const Params8 id_params = homography_params(Homography::Identity());
  Eigen::MatrixXd rhs(n, 8);
  for (int i = 0; i < n; ++i)
    rhs.row(i) = (support(i) * d_fit[i] + eps * id_params).transpose();
  const Eigen::MatrixXd smoothed = a.ldlt().solve(rhs);

  HomographyArray out;
  out.width = gyro.width;
  out.height = gyro.height;
  out.h.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Homography d = params_to_homography(smoothed.row(i).transpose());
    out.h.push_back(normalize_homography(d * gyro.h[i]));
  }
  return out;
}

PyramidResult replace_gyro_with_homography(const Grid& img_a, const Grid& img_b,
                                           const HomographyArray& fitted,
                                           const CameraIntrinsics& k,
                                           const BetaLadder& ladder, int levels,
                                           const ResidualFlowParams& params) {
  return run_fusion_pyramid(img_a, img_b, fitted, k, ladder, levels, params);
}

}  // namespace rsfuse
