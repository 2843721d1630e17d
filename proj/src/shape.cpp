#include "kd/shape.hpp"

#include <algorithm>
#include <cmath>

#include "kd/errors.hpp"

namespace kd {

Shape::Shape(Eigen::VectorXd coords) : coords_(std::move(coords)) {
  if (coords_.size() % 2 != 0) {
    throw DataError("shape vector length must be even, got " +
                    std::to_string(coords_.size()));
  }
}

Shape Shape::zeros(int num_points) {
  return Shape(Eigen::VectorXd::Zero(2 * num_points));
}

void Shape::set_point(int i, double px, double py) {
  coords_[2 * i] = px;
  coords_[2 * i + 1] = py;
}

Shape normalize_shape(const Shape& raw, const BoundingBox& box) {
  if (!(box.width > 0.0) || !(box.height > 0.0) || !std::isfinite(box.x_min) ||
      !std::isfinite(box.y_min) || !std::isfinite(box.width) ||
      !std::isfinite(box.height)) {
    throw DataError("degenerate bounding box");
  }
  if (!raw.all_finite()) {
    throw DataError("non-finite landmark coordinates");
  }
  Shape out = Shape::zeros(raw.num_points());
  const double cx = box.x_min + 0.5 * box.width;
  const double cy = box.y_min + 0.5 * box.height;
  for (int i = 0; i < raw.num_points(); ++i) {
    double nx = (raw.x(i) - cx) / box.width;
    double ny = (raw.y(i) - cy) / box.height;
    nx = std::clamp(nx, -0.5, 0.5);
    ny = std::clamp(ny, -0.5, 0.5);
    out.set_point(i, nx, ny);
  }
  return out;
}

Shape mean_shape(const std::vector<Shape>& shapes) {
  if (shapes.empty()) throw DataError("mean_shape: empty shape list");
  const int k = shapes.front().num_points();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(2 * k);
  for (const Shape& s : shapes) {
    if (s.num_points() != k) {
      throw DataError("mean_shape: mixed point counts (" + std::to_string(k) +
                      " vs " + std::to_string(s.num_points()) + ")");
    }
    if (!s.all_finite()) throw DataError("mean_shape: non-finite shape");
    acc += s.coords();
  }
  return Shape(acc / static_cast<double>(shapes.size()));
}

}  // namespace kd
