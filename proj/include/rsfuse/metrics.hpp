#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rsfuse/homography_fit.hpp"
#include "rsfuse/types.hpp"

namespace rsfuse {

/// Metric aggregates plus the configuration fingerprint they were computed
/// under.
struct EvalReport {
  double aepe = 0.0;
  std::map<double, double> pck;  // threshold px -> percentage
  double pme = -1.0;             // -1 when no homography GT present
  std::int64_t count = 0;        // evaluated pixels or points
  int pme_excluded = 0;          // GT points with degenerate projection
  std::string config_fingerprint;
};

/// Deterministic pairwise (tree) sum, independent of accumulation order
/// concerns in naive left-to-right reductions.
double pairwise_sum(std::span<const double> values);

/// Mean over valid pixels of the endpoint error |est - gt|.
double aepe(const FlowField& est, const FlowField& gt, const MaskGrid& valid);

/// 100 x fraction of valid pixels with endpoint error strictly below tau.
double pck(const FlowField& est, const FlowField& gt, const MaskGrid& valid,
           double tau);

/// Mean reprojection distance of GT pairs under h.
double pme(const Homography& h, std::span<const Correspondence> gt_pairs,
           int* excluded = nullptr);

/// Array variant: each pair uses the patch homography of its source row.
double pme(const HomographyArray& arr, std::span<const Correspondence> gt_pairs,
           int* excluded = nullptr);

/// Per-pixel endpoint-error grid.
Grid error_heatmap(const FlowField& est, const FlowField& gt);

}  // namespace rsfuse
