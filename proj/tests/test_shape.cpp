#include <doctest.h>

#include "kd/errors.hpp"
#include "kd/shape.hpp"

using namespace kd;

namespace {

Shape make_shape(std::initializer_list<double> coords) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(coords.size()));
  Eigen::Index i = 0;
  for (double c : coords) v[i++] = c;
  return Shape(v);
}

}  // namespace

TEST_CASE("shape rejects odd coordinate vectors") {
  Eigen::VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(Shape{v}, DataError);
}

TEST_CASE("normalize maps box corners and center") {
  const BoundingBox box{0.0, 0.0, 100.0, 100.0};

  // center, top-left corner, and an interior point
  const Shape raw = make_shape({50.0, 50.0, 0.0, 0.0, 75.0, 25.0});
  const Shape n = normalize_shape(raw, box);
  CHECK(n.x(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(n.y(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(n.x(1) == doctest::Approx(-0.5));
  CHECK(n.y(1) == doctest::Approx(-0.5));
  CHECK(n.x(2) == doctest::Approx(0.25));
  CHECK(n.y(2) == doctest::Approx(-0.25));
}

TEST_CASE("normalize handles rectangular boxes per axis") {
  const BoundingBox box{10.0, 20.0, 200.0, 50.0};
  const Shape raw = make_shape({210.0, 70.0});
  const Shape n = normalize_shape(raw, box);
  CHECK(n.x(0) == doctest::Approx(0.5));
  CHECK(n.y(0) == doctest::Approx(0.5));
}

TEST_CASE("normalize clamps points outside the box") {
  const BoundingBox box{0.0, 0.0, 100.0, 100.0};
  const Shape n = normalize_shape(make_shape({150.0, -10.0}), box);
  CHECK(n.x(0) == 0.5);
  CHECK(n.y(0) == -0.5);
}

TEST_CASE("normalize rejects degenerate boxes and bad coordinates") {
  CHECK_THROWS_AS(normalize_shape(make_shape({0.0, 0.0}),
                                  BoundingBox{0.0, 0.0, 0.0, 100.0}),
                  DataError);
  CHECK_THROWS_AS(normalize_shape(make_shape({0.0, 0.0}),
                                  BoundingBox{0.0, 0.0, 100.0, -5.0}),
                  DataError);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(
      normalize_shape(make_shape({nan, 0.0}), BoundingBox{0, 0, 10, 10}),
      DataError);
}

TEST_CASE("mean of two hand shapes") {
  const Shape a = make_shape({-0.1, 0.0, 0.1, 0.0});
  const Shape b = make_shape({-0.3, 0.0, 0.3, 0.0});
  const Shape m = mean_shape({a, b});
  CHECK(m.x(0) == doctest::Approx(-0.2));
  CHECK(m.y(0) == doctest::Approx(0.0));
  CHECK(m.x(1) == doctest::Approx(0.2));
}

TEST_CASE("mean of identical shapes is the shape") {
  const Shape a = make_shape({0.2, -0.3, 0.0, 0.1});
  const Shape m = mean_shape({a, a, a});
  CHECK((m.coords() - a.coords()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mean rejects mixed point counts and empty input") {
  CHECK_THROWS_AS(mean_shape({}), DataError);
  CHECK_THROWS_AS(
      mean_shape({make_shape({0.0, 0.0}), make_shape({0.0, 0.0, 1.0, 1.0})}),
      DataError);
}
