#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kd/shape.hpp"

namespace kd {

inline constexpr double kDefaultRankEpsilon = 1e-10;

// Linear point-distribution model: shape ~ mean + basis * b. Columns of
// `basis` are orthonormal covariance eigenvectors, sorted by descending
// eigenvalue. Only numerically significant directions are kept (eigenvalue
// above rank_epsilon times the largest), so zero-variance directions never
// enter reconstructions.
struct ShapeModel {
  int num_points = 0;
  Eigen::VectorXd mean;         // length 2k
  Eigen::MatrixXd basis;        // 2k x m, orthonormal columns
  Eigen::VectorXd eigenvalues;  // length m, descending, >= 0

  int retained_count() const { return static_cast<int>(basis.cols()); }
};

// Fits the model on box-normalized training shapes. Covariance uses the 1/N
// convention. Eigenvector signs follow a fixed rule (entry of largest
// magnitude is positive, ties broken by lowest index) so refits are
// bit-stable.
ShapeModel fit_shape_model(const std::vector<Shape>& shapes,
                           double rank_epsilon = kDefaultRankEpsilon);

// Coefficients of `shape` in the model frame: b = basis^T (f - mean).
Eigen::VectorXd project(const ShapeModel& model, const Shape& shape);

// Clamps each coefficient to +-3 sqrt(eigenvalue), the plausible range of
// the training distribution.
Eigen::VectorXd clamp_coefficients(const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& eigenvalues);

// Re-expresses `shape` through the first ceil(m_tilde * retained) model
// directions with clamped coefficients. m_tilde in [0, 1]; 0 returns the
// mean, 1 uses every retained direction.
Shape soften(const ShapeModel& model, const Shape& shape, double m_tilde);

// Optional preprocessing: generalized Procrustes alignment (similarity
// transforms, no reflection). Off the main softening path; exposed for
// experiments where shapes carry pose variation worth removing before the
// fit.
std::vector<Shape> procrustes_align(const std::vector<Shape>& shapes,
                                    int iterations = 3);

namespace detail {

struct EigenDecomposition {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns match values
};

// Cyclic Jacobi for symmetric matrices. Converges when the off-diagonal
// Frobenius norm drops below off_tol; throws NumericError after max_sweeps.
EigenDecomposition jacobi_eigendecompose(Eigen::MatrixXd a,
                                         double off_tol = 1e-12,
                                         int max_sweeps = 100);

}  // namespace detail

}  // namespace kd
