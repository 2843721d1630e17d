#pragma once

#include <array>
#include <vector>

#include "kd/shape.hpp"

namespace kd {

// Which ground-truth distance normalizes the per-image error. Either the
// distance between two landmarks, or between the midpoints of two landmark
// pairs (for annotation schemes without a single outer-corner point).
struct NormPair {
  bool midpoint = false;
  int left = -1;
  int right = -1;
  std::array<int, 2> left_pair{-1, -1};
  std::array<int, 2> right_pair{-1, -1};

  static NormPair indices(int left, int right);
  static NormPair midpoints(int l0, int l1, int r0, int r1);
  // Convention per annotation scheme: 68 -> outer eye corners (36, 45),
  // 98 -> (60, 72), 29 -> eye centers (16, 17). Other counts must be
  // configured explicitly.
  static NormPair for_scheme(int num_points);

  double distance(const Shape& gt) const;
};

// Mean landmark distance divided by the normalizing distance of the ground
// truth. Rejects zero or non-finite normalizing distances.
double per_image_error(const Shape& pred, const Shape& gt,
                       const NormPair& norm);

// NME in percent: 100 * mean(errors).
double nme_percent(const std::vector<double>& errors);

// Percentage of images with error strictly above the threshold.
double failure_rate_percent(const std::vector<double>& errors,
                            double threshold = 0.1);

struct CedPoint {
  double threshold = 0.0;
  double fraction = 0.0;
};

// Cumulative error distribution sampled at `samples` evenly spaced
// thresholds from 0 to max_threshold inclusive; fraction counts errors <= t.
std::vector<CedPoint> ced_curve(const std::vector<double>& errors,
                                double max_threshold = 0.1, int samples = 1000);

// Area under the CED by trapezoid rule, divided by the threshold span so a
// perfect detector scores 1.
double auc_from_ced(const std::vector<CedPoint>& ced);

struct EvalReport {
  int n_images = 0;
  double nme_percent = 0.0;
  double fr_percent = 0.0;
  double auc = 0.0;
  std::vector<CedPoint> ced;
};

EvalReport make_report(const std::vector<double>& errors,
                       double failure_threshold = 0.1, int ced_samples = 1000);

}  // namespace kd
