#include "rsfuse/metrics.hpp"

#include <cmath>
#include <functional>

#include "rsfuse/error.hpp"

namespace rsfuse {

double pairwise_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

namespace {

void check_dims(const FlowField& est, const FlowField& gt) {
  if (est.width() != gt.width() || est.height() != gt.height())
    throw_validation("metrics: flow dimension mismatch");
}

std::vector<double> endpoint_errors(const FlowField& est, const FlowField& gt,
                                    const MaskGrid& valid) {
  check_dims(est, gt);
  if (valid.rows() != est.u.rows() || valid.cols() != est.u.cols())
    throw_validation("metrics: mask dimension mismatch");
  std::vector<double> errors;
  errors.reserve(est.u.size());
  for (int y = 0; y < est.height(); ++y) {
    for (int x = 0; x < est.width(); ++x) {
      if (!valid(y, x)) continue;
      errors.push_back(std::hypot(est.u(y, x) - gt.u(y, x),
                                  est.v(y, x) - gt.v(y, x)));
    }
  }
  if (errors.empty()) throw_validation("metrics: empty valid mask");
  return errors;
}

}  // namespace

double aepe(const FlowField& est, const FlowField& gt, const MaskGrid& valid) {
  const auto errors = endpoint_errors(est, gt, valid);
  return pairwise_sum(errors) / static_cast<double>(errors.size());
}

double pck(const FlowField& est, const FlowField& gt, const MaskGrid& valid,
           double tau) {
  if (!(tau > 0)) throw_validation("pck: tau must be positive");
  const auto errors = endpoint_errors(est, gt, valid);
  std::vector<double> hits(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i)
    hits[i] = errors[i] < tau ? 1.0 : 0.0;
  return 100.0 * pairwise_sum(hits) / static_cast<double>(hits.size());
}

namespace {

double pme_impl(std::span<const Correspondence> gt_pairs, int* excluded,
                const std::function<const Homography&(const Correspondence&)>&
                    pick) {
  if (gt_pairs.empty()) throw_validation("pme: no ground-truth pairs");
  std::vector<double> errors;
  errors.reserve(gt_pairs.size());
  int skipped = 0;
  for (const auto& c : gt_pairs) {
    try {
      errors.push_back((apply_homography(pick(c), c.p) - c.q).norm());
    } catch (const Error&) {
      ++skipped;
    }
  }
  if (excluded) *excluded = skipped;
  if (errors.empty()) throw_numerical("pme: all points degenerate");
  return pairwise_sum(errors) / static_cast<double>(errors.size());
}

}  // namespace

double pme(const Homography& h, std::span<const Correspondence> gt_pairs,
           int* excluded) {
  return pme_impl(gt_pairs, excluded,
                  [&h](const Correspondence&) -> const Homography& { return h; });
}

double pme(const HomographyArray& arr, std::span<const Correspondence> gt_pairs,
           int* excluded) {
  if (arr.patch_count() == 0) throw_validation("pme: empty homography array");
  return pme_impl(gt_pairs, excluded,
                  [&arr](const Correspondence& c) -> const Homography& {
                    const double patch_h =
                        static_cast<double>(arr.height) / arr.patch_count();
                    int n = static_cast<int>(c.p.y() / patch_h);
                    n = std::min(std::max(n, 0), arr.patch_count() - 1);
                    return arr.h[n];
                  });
}

Grid error_heatmap(const FlowField& est, const FlowField& gt) {
  check_dims(est, gt);
  return ((est.u - gt.u).square() + (est.v - gt.v).square()).sqrt();
}

}  // namespace rsfuse
