#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kd {

// Ordered set of 2D landmarks, stored interleaved as (x0, y0, x1, y1, ...).
// Point order is semantic: index i always refers to the same landmark.
class Shape {
 public:
  Shape() = default;
  explicit Shape(Eigen::VectorXd coords);
  static Shape zeros(int num_points);

  int num_points() const { return static_cast<int>(coords_.size() / 2); }
  double x(int i) const { return coords_[2 * i]; }
  double y(int i) const { return coords_[2 * i + 1]; }
  Eigen::Vector2d point(int i) const { return {x(i), y(i)}; }
  void set_point(int i, double px, double py);

  const Eigen::VectorXd& coords() const { return coords_; }
  Eigen::VectorXd& coords() { return coords_; }

  bool all_finite() const { return coords_.allFinite(); }

 private:
  Eigen::VectorXd coords_;
};

struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double width = 0.0;
  double height = 0.0;
};

// Maps pixel-space landmarks into the box-relative frame [-0.5, 0.5]^2:
// the box center goes to the origin, corners to (+-0.5, +-0.5). Points
// outside the box are clamped to the frame. Degenerate boxes (width or
// height <= 0) and non-finite inputs are rejected.
Shape normalize_shape(const Shape& raw, const BoundingBox& box);

// Coordinate-wise mean of shapes sharing a point count.
Shape mean_shape(const std::vector<Shape>& shapes);

}  // namespace kd
