#include "kd/metrics.hpp"

#include <cmath>
#include <string>

#include "kd/errors.hpp"

namespace kd {

NormPair NormPair::indices(int left, int right) {
  NormPair p;
  p.left = left;
  p.right = right;
  return p;
}

NormPair NormPair::midpoints(int l0, int l1, int r0, int r1) {
  NormPair p;
  p.midpoint = true;
  p.left_pair = {l0, l1};
  p.right_pair = {r0, r1};
  return p;
}

NormPair NormPair::for_scheme(int num_points) {
  switch (num_points) {
    case 68:
      return indices(36, 45);
    case 98:
      return indices(60, 72);
    case 29:
      return indices(16, 17);
    default:
      throw DataError("no normalization convention for " +
                      std::to_string(num_points) +
                      " points; pass indices explicitly");
  }
}

double NormPair::distance(const Shape& gt) const {
  const int k = gt.num_points();
  auto check = [&](int i) {
    if (i < 0 || i >= k) {
      throw DataError("normalization index " + std::to_string(i) +
                      " out of range for " + std::to_string(k) + " points");
    }
  };
  Eigen::Vector2d a, b;
  if (midpoint) {
    check(left_pair[0]);
    check(left_pair[1]);
    check(right_pair[0]);
    check(right_pair[1]);
    a = 0.5 * (gt.point(left_pair[0]) + gt.point(left_pair[1]));
    b = 0.5 * (gt.point(right_pair[0]) + gt.point(right_pair[1]));
  } else {
    check(left);
    check(right);
    a = gt.point(left);
    b = gt.point(right);
  }
  return (a - b).norm();
}

double per_image_error(const Shape& pred, const Shape& gt,
                       const NormPair& norm) {
  if (pred.num_points() != gt.num_points()) {
    throw DataError("per_image_error: point counts disagree");
  }
  if (!pred.all_finite() || !gt.all_finite()) {
    throw DataError("per_image_error: non-finite landmarks");
  }
  const double nd = norm.distance(gt);
  if (!(nd > 0.0) || !std::isfinite(nd)) {
    throw DataError("per_image_error: normalizing distance is zero or bad");
  }
  double acc = 0.0;
  for (int i = 0; i < gt.num_points(); ++i) {
    acc += (pred.point(i) - gt.point(i)).norm();
  }
  return acc / static_cast<double>(gt.num_points()) / nd;
}

namespace {

void check_errors(const std::vector<double>& errors, const char* who) {
  if (errors.empty()) {
    throw DataError(std::string(who) + ": empty error list");
  }
  for (double e : errors) {
    if (!std::isfinite(e) || e < 0.0) {
      throw DataError(std::string(who) + ": errors must be finite and >= 0");
    }
  }
}

}  // namespace

double nme_percent(const std::vector<double>& errors) {
  check_errors(errors, "nme");
  double acc = 0.0;
  for (double e : errors) acc += e;
  return 100.0 * acc / static_cast<double>(errors.size());
}

double failure_rate_percent(const std::vector<double>& errors,
                            double threshold) {
  check_errors(errors, "failure_rate");
  if (!(threshold > 0.0)) throw DataError("failure_rate: threshold must be > 0");
  std::size_t failures = 0;
  for (double e : errors) {
    if (e > threshold) ++failures;
  }
  return 100.0 * static_cast<double>(failures) /
         static_cast<double>(errors.size());
}

std::vector<CedPoint> ced_curve(const std::vector<double>& errors,
                                double max_threshold, int samples) {
  check_errors(errors, "ced");
  if (!(max_threshold > 0.0)) throw DataError("ced: max_threshold must be > 0");
  if (samples < 2) throw DataError("ced: need at least 2 samples");
  std::vector<CedPoint> out(samples);
  const double n = static_cast<double>(errors.size());
  for (int i = 0; i < samples; ++i) {
    const double t =
        max_threshold * static_cast<double>(i) / static_cast<double>(samples - 1);
    std::size_t hits = 0;
    for (double e : errors) {
      if (e <= t) ++hits;
    }
    out[i] = {t, static_cast<double>(hits) / n};
  }
  return out;
}

double auc_from_ced(const std::vector<CedPoint>& ced) {
  if (ced.size() < 2) throw DataError("auc: need at least 2 CED points");
  double area = 0.0;
  for (std::size_t i = 1; i < ced.size(); ++i) {
    const double dt = ced[i].threshold - ced[i - 1].threshold;
    if (dt < 0.0) throw DataError("auc: thresholds must be non-decreasing");
    area += 0.5 * (ced[i].fraction + ced[i - 1].fraction) * dt;
  }
  const double span = ced.back().threshold - ced.front().threshold;
  if (!(span > 0.0)) throw DataError("auc: zero threshold span");
  return area / span;
}

EvalReport make_report(const std::vector<double>& errors,
                       double failure_threshold, int ced_samples) {
  EvalReport r;
  r.n_images = static_cast<int>(errors.size());
  r.nme_percent = nme_percent(errors);
  r.fr_percent = failure_rate_percent(errors, failure_threshold);
  r.ced = ced_curve(errors, failure_threshold, ced_samples);
  r.auc = auc_from_ced(r.ced);
  return r;
}

}  // namespace kd
