#include "kd/shape_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "kd/errors.hpp"

namespace kd {

namespace detail {

EigenDecomposition jacobi_eigendecompose(Eigen::MatrixXd a, double off_tol,
                                         int max_sweeps) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw DataError("jacobi: matrix must be square");
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  auto off_norm_sq = [&]() {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return s;
  };

  bool converged = off_norm_sq() < off_tol * off_tol;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        // smaller-angle root of t^2 + 2 t theta - 1 = 0
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i);
          const double aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          const double vip = v(i, p);
          const double viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
    converged = off_norm_sq() < off_tol * off_tol;
  }
  if (!converged) {
    throw NumericError("jacobi: no convergence within " +
                       std::to_string(max_sweeps) + " sweeps");
  }

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i) > a(j, j); });
  for (int j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    out.vectors.col(j) = v.col(order[j]);
    // fixed sign: entry of largest magnitude positive, ties to lowest index
    int arg = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double m = std::abs(out.vectors(i, j));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    if (out.vectors(arg, j) < 0.0) out.vectors.col(j) = -out.vectors.col(j);
  }
  return out;
}

}  // namespace detail

ShapeModel fit_shape_model(const std::vector<Shape>& shapes,
                           double rank_epsilon) {
  if (shapes.empty()) throw DataError("fit_shape_model: empty training set");
  if (!(rank_epsilon >= 0.0)) {
    throw DataError("fit_shape_model: rank_epsilon must be >= 0");
  }
  const Shape mean = mean_shape(shapes);  // also validates consistency
  const int dim = static_cast<int>(mean.coords().size());
  const int n = static_cast<int>(shapes.size());

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const Shape& s : shapes) {
    const Eigen::VectorXd d = s.coords() - mean.coords();
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(n);

  detail::EigenDecomposition eig = detail::jacobi_eigendecompose(cov);
  // roundoff can push zero eigenvalues slightly negative
  for (int i = 0; i < eig.values.size(); ++i) {
    eig.values[i] = std::max(eig.values[i], 0.0);
  }

  const double lambda_max = eig.values.size() > 0 ? eig.values[0] : 0.0;
  int retained = 0;
  while (retained < eig.values.size() &&
         eig.values[retained] > rank_epsilon * lambda_max &&
         eig.values[retained] > 0.0) {
    ++retained;
  }

  ShapeModel model;
  model.num_points = mean.num_points();
  model.mean = mean.coords();
  model.basis = eig.vectors.leftCols(retained);
  model.eigenvalues = eig.values.head(retained);
  return model;
}

Eigen::VectorXd project(const ShapeModel& model, const Shape& shape) {
  if (shape.num_points() != model.num_points) {
    throw DataError("project: shape has " + std::to_string(shape.num_points()) +
                    " points, model expects " +
                    std::to_string(model.num_points));
  }
  if (!shape.all_finite()) throw DataError("project: non-finite shape");
  return model.basis.transpose() * (shape.coords() - model.mean);
}

Eigen::VectorXd clamp_coefficients(const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& eigenvalues) {
  if (b.size() != eigenvalues.size()) {
    throw DataError("clamp_coefficients: length mismatch");
  }
  Eigen::VectorXd out(b.size());
  for (int i = 0; i < b.size(); ++i) {
    if (!(eigenvalues[i] >= 0.0)) {
      throw DataError("clamp_coefficients: negative eigenvalue at index " +
                      std::to_string(i));
    }
    const double lim = 3.0 * std::sqrt(eigenvalues[i]);
    out[i] = std::clamp(b[i], -lim, lim);
  }
  return out;
}

Shape soften(const ShapeModel& model, const Shape& shape, double m_tilde) {
  if (!(m_tilde >= 0.0 && m_tilde <= 1.0)) {
    throw DataError("soften: m_tilde must lie in [0, 1]");
  }
  const int used = static_cast<int>(
      std::ceil(m_tilde * static_cast<double>(model.retained_count())));
  Eigen::VectorXd b = project(model, shape).head(used);
  b = clamp_coefficients(b, model.eigenvalues.head(used));
  return Shape(model.mean + model.basis.leftCols(used) * b);
}

std::vector<Shape> procrustes_align(const std::vector<Shape>& shapes,
                                    int iterations) {
  if (shapes.empty()) return {};
  const int k = shapes.front().num_points();
  using Cvec = Eigen::VectorXcd;
  auto to_complex = [k](const Eigen::VectorXd& f) {
    Cvec z(k);
    for (int i = 0; i < k; ++i) z[i] = {f[2 * i], f[2 * i + 1]};
    return z;
  };
  auto from_complex = [k](const Cvec& z) {
    Eigen::VectorXd f(2 * k);
    for (int i = 0; i < k; ++i) {
      f[2 * i] = z[i].real();
      f[2 * i + 1] = z[i].imag();
    }
    return Shape(f);
  };

  std::vector<Cvec> zs;
  zs.reserve(shapes.size());
  for (const Shape& s : shapes) {
    if (s.num_points() != k) throw DataError("procrustes: mixed point counts");
    zs.push_back(to_complex(s.coords()));
  }

  Cvec target = zs.front();
  for (int it = 0; it < iterations; ++it) {
    const std::complex<double> tc = target.mean();
    Cvec mean_acc = Cvec::Zero(k);
    for (Cvec& z : zs) {
      // least-squares similarity (rotation + scale + translation) onto target
      const std::complex<double> zc = z.mean();
      Cvec d = z.array() - zc;
      const double denom = d.squaredNorm();
      if (denom > 0.0) {
        std::complex<double> a(0.0, 0.0);
        for (int i = 0; i < k; ++i) a += std::conj(d[i]) * (target[i] - tc);
        a /= denom;
        z = (d.array() * a + tc).matrix();
      } else {
        z = (d.array() + tc).matrix();
      }
      mean_acc += z;
    }
    target = mean_acc / static_cast<double>(zs.size());
  }

  std::vector<Shape> out;
  out.reserve(zs.size());
  for (const Cvec& z : zs) out.push_back(from_complex(z));
  return out;
}

}  // namespace kd
