#include "rsfuse/fusion.hpp"

#include <cmath>

#include "rsfuse/error.hpp"

namespace rsfuse {

void BetaLadder::validate() const {
  for (double b : beta) {
    if (!(b >= 0.0 && b <= 1.0))
      throw_validation("beta ladder: entries must lie in [0, 1]");
  }
  if (!(beta[4] < beta[3]))
    throw_validation("beta ladder: beta5 must be strictly below beta4");
  for (int i = 0; i < 4; ++i) {
    if (!(beta[i + 1] <= beta[i]))
      throw_validation("beta ladder: ordering beta5 < beta4 <= ... <= beta1 violated");
  }
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Separable box sum over a (2r+1)^2 window, truncated at borders.
Grid box_sum(const Grid& g, int radius) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  Grid rows(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    double acc = 0;
    for (int x = 0; x < std::min(radius + 1, w); ++x) acc += g(y, x);
    for (int x = 0; x < w; ++x) {
      rows(y, x) = acc;
      if (x + radius + 1 < w) acc += g(y, x + radius + 1);
      if (x - radius >= 0) acc -= g(y, x - radius);
    }
  }
  for (int x = 0; x < w; ++x) {
    double acc = 0;
    for (int y = 0; y < std::min(radius + 1, h); ++y) acc += rows(y, x);
    for (int y = 0; y < h; ++y) {
      out(y, x) = acc;
      if (y + radius + 1 < h) acc += rows(y + radius + 1, x);
      if (y - radius >= 0) acc -= rows(y - radius, x);
    }
  }
  return out;
}

Grid box_mean(const Grid& g, int radius) {
  Grid ones = Grid::Ones(g.rows(), g.cols());
  return box_sum(g, radius) / box_sum(ones, radius);
}

void require_same_dims(const Grid& a, const Grid& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw_validation(std::string(what) + ": dimension mismatch");
}

}  // namespace

FusionMap constrain_map(const Grid& h, int level, const BetaLadder& ladder) {
  ladder.validate();
  if (level < 1 || level > 4)
    throw_validation("constrain_map: level must lie in 1..4");
  if (!h.allFinite()) throw_validation("constrain_map: non-finite scores");
  const double bi = ladder.upper(level);
  const double bn = ladder.lower(level);
  FusionMap out;
  out.level = level;
  out.lower = bn;
  out.upper = bi;
  out.m = h.unaryExpr([bi, bn](double x) { return bi + (bn - bi) * sigmoid(x); });
  return out;
}

Grid alignment_score(const Grid& img_a, const Grid& img_b, const FlowField& g) {
  require_same_dims(img_a, img_b, "alignment_score");
  if (img_a.rows() != g.height() || img_a.cols() != g.width())
    throw_validation("alignment_score: field dimension mismatch");
  const WarpResult wb = warp_image(img_b, g);
  Grid r = (wb.image - img_a).abs();
  r = wb.valid.select(r, Grid::Zero(r.rows(), r.cols()));
  const Grid mu = box_mean(r, 3);
  const Grid var = box_mean(r.square(), 3) - mu.square();
  const Grid sigma = var.max(0.0).sqrt();
  // Aligned pixels (r = 0) score +4 (residual weight pinned at its minimum);
  // large residuals push the score strongly negative.
  return 4.0 - 40.0 * r - (r - mu) / (sigma + 0.01);
}

FusionMap estimate_fusion_map(const Grid& img_a, const Grid& img_b,
                              const FlowField& g, int level,
                              const BetaLadder& ladder) {
  return constrain_map(alignment_score(img_a, img_b, g), level, ladder);
}

FusionMap refine_fusion_map(const FusionMap& m, const Grid& img_a_masked,
                            const Grid& img_b_masked, double gamma_neg,
                            double gamma_pos) {
  if (gamma_neg > gamma_pos)
    throw_validation("refine_fusion_map: gamma- must be <= gamma+");
  if (!(gamma_neg <= 0.0 && gamma_pos >= 0.0))
    throw_validation("refine_fusion_map: gamma range must contain 0");
  require_same_dims(img_a_masked, img_b_masked, "refine_fusion_map");
  if (img_a_masked.rows() != m.m.rows() || img_a_masked.cols() != m.m.cols())
    throw_validation("refine_fusion_map: map dimension mismatch");
  const Grid r = (img_a_masked - img_b_masked).abs();
  const Grid residual =
      (gamma_pos * (r / 0.1).tanh()).max(gamma_neg).min(gamma_pos);
  FusionMap out;
  out.level = m.level;
  out.lower = 0.0;
  out.upper = 1.0;
  out.m = (m.m + residual).max(0.0).min(1.0);
  return out;
}

namespace {

Grid gradient_x(const Grid& g) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  Grid out = Grid::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 1; x + 1 < w; ++x) out(y, x) = 0.5 * (g(y, x + 1) - g(y, x - 1));
  return out;
}

Grid gradient_y(const Grid& g) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  Grid out = Grid::Zero(h, w);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = 0.5 * (g(y + 1, x) - g(y - 1, x));
  return out;
}

void lk_refine_level(const Grid& a, const Grid& b, FlowField& flow,
                     const ResidualFlowParams& params) {
  const int h = static_cast<int>(a.rows()), w = static_cast<int>(a.cols());
  const int radius = params.window / 2;
  const Grid ix = gradient_x(a);
  const Grid iy = gradient_y(a);
  const Grid zeros = Grid::Zero(h, w);
  const Grid sxx = box_sum(ix.square(), radius);
  const Grid sxy = box_sum((ix * iy).eval(), radius);
  const Grid syy = box_sum(iy.square(), radius);
  const double max_step = radius;
  for (int it = 0; it < params.iterations; ++it) {
    const WarpResult wb = warp_image(b, flow);
    Grid et = wb.valid.select(Grid(wb.image - a), zeros);
    const Grid sxt = box_sum((ix * et).eval(), radius);
    const Grid syt = box_sum((iy * et).eval(), radius);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gxx = sxx(y, x), gxy = sxy(y, x), gyy = syy(y, x);
        const double tr = gxx + gyy;
        const double det = gxx * gyy - gxy * gxy;
        if (det <= 1e-12) continue;  // keep current value
        const double disc = std::sqrt(std::max(tr * tr - 4.0 * det, 0.0));
        const double lmin = 0.5 * (tr - disc);
        const double lmax = 0.5 * (tr + disc);
        if (lmin <= 0 || lmax / lmin > params.cond_cutoff) continue;
        double du = -(gyy * sxt(y, x) - gxy * syt(y, x)) / det;
        double dv = -(gxx * syt(y, x) - gxy * sxt(y, x)) / det;
        du = std::clamp(du, -max_step, max_step);
        dv = std::clamp(dv, -max_step, max_step);
        flow.u(y, x) += du;
        flow.v(y, x) += dv;
      }
    }
  }
}

}  // namespace

Grid downsample_image_2x(const Grid& img) {
  const int h = static_cast<int>(img.rows()) / 2;
  const int w = static_cast<int>(img.cols()) / 2;
  Grid out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(y, x) = 0.25 * (img(2 * y, 2 * x) + img(2 * y, 2 * x + 1) +
                          img(2 * y + 1, 2 * x) + img(2 * y + 1, 2 * x + 1));
  return out;
}

FlowField estimate_residual_flow(const Grid& img_a, const Grid& img_b,
                                 const FlowField& init,
                                 const ResidualFlowParams& params) {
  require_same_dims(img_a, img_b, "estimate_residual_flow");
  if (img_a.rows() != init.height() || img_a.cols() != init.width())
    throw_validation("estimate_residual_flow: init dimension mismatch");
  if (!init.u.allFinite() || !init.v.allFinite())
    throw_validation("estimate_residual_flow: non-finite init");

  // Internal pyramid, limited by divisibility and a minimum level size.
  int levels = 1;
  {
    int w = init.width(), h = init.height();
    while (levels < params.levels && w % 2 == 0 && h % 2 == 0 && w / 2 >= 16 &&
           h / 2 >= 16) {
      w /= 2;
      h /= 2;
      ++levels;
    }
  }
  std::vector<Grid> pa{img_a}, pb{img_b};
  for (int l = 1; l < levels; ++l) {
    pa.push_back(downsample_image_2x(pa.back()));
    pb.push_back(downsample_image_2x(pb.back()));
  }
  FlowField flow = init;
  for (int l = 1; l < levels; ++l) flow = downscale_field(flow, 2);
  for (int l = levels - 1; l >= 0; --l) {
    lk_refine_level(pa[l], pb[l], flow, params);
    if (l > 0) flow = upsample_field_2x(flow);
  }
  return flow;
}

FlowField fuse(const FlowField& o, const FlowField& g, const FusionMap& m) {
  if (o.width() != g.width() || o.height() != g.height() ||
      o.width() != static_cast<int>(m.m.cols()) ||
      o.height() != static_cast<int>(m.m.rows()))
    throw_validation("fuse: dimension mismatch");
  FlowField out(o.width(), o.height());
  out.u = m.m * o.u + (1.0 - m.m) * g.u;
  out.v = m.m * o.v + (1.0 - m.m) * g.v;
  return out;
}

PyramidResult run_fusion_pyramid(const Grid& img_a, const Grid& img_b,
                                 const HomographyArray& gyro,
                                 const CameraIntrinsics& k,
                                 const BetaLadder& ladder, int levels,
                                 const ResidualFlowParams& params) {
  ladder.validate();
  if (levels < 2) throw_validation("run_fusion_pyramid: need at least 2 levels");
  require_same_dims(img_a, img_b, "run_fusion_pyramid");
  const int w = static_cast<int>(img_a.cols());
  const int h = static_cast<int>(img_a.rows());
  const int div = 1 << (levels - 1);
  if (w % div != 0 || h % div != 0)
    throw_validation("run_fusion_pyramid: dimensions not divisible by 2^(levels-1)");

  std::vector<Grid> pa{img_a}, pb{img_b};
  for (int l = 1; l < levels; ++l) {
    pa.push_back(downsample_image_2x(pa.back()));
    pb.push_back(downsample_image_2x(pb.back()));
  }
  const FlowField g_full = homography_array_to_field(gyro, k, w, h);

  ResidualFlowParams level_params = params;
  level_params.levels = 1;  // the outer pyramid already handles scale

  PyramidResult result;
  result.maps.resize(levels);
  FlowField fused;
  for (int i = levels; i >= 1; --i) {
    const FlowField g_i = downscale_field(g_full, 1 << (i - 1));
    const FlowField init = (i == levels) ? g_i : upsample_field_2x(fused);
    const int ladder_level = std::min(i, 4);
    const FusionMap m_i =
        estimate_fusion_map(pa[i - 1], pb[i - 1], g_i, ladder_level, ladder);
    const FlowField o_i =
        estimate_residual_flow(pa[i - 1], pb[i - 1], init, level_params);
    fused = fuse(o_i, g_i, m_i);
    result.maps[i - 1] = m_i;
  }
  result.flow = std::move(fused);
  return result;
}

}  // namespace rsfuse
