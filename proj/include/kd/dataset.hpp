#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kd/shape.hpp"

namespace kd {

enum class Split { kTrain, kTest };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// In-memory landmark dataset. Rows of `inputs` are model inputs (any feature
// length); rows of `hard` are flattened normalized landmarks (x0, y0, ...).
// `soft` holds shape-model re-expressed labels when they have been prepared.
struct Dataset {
  int num_points = 0;
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd hard;
  Eigen::MatrixXd soft;  // 0 x 0 until prepared
  std::vector<Split> split;
  std::vector<std::vector<std::string>> tags;  // may be empty (no tags at all)

  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  bool has_soft() const { return soft.size() > 0; }
  bool has_tag(int i, const std::string& tag) const;

  Shape hard_shape(int i) const { return Shape(hard.row(i).transpose()); }
  Shape soft_shape(int i) const { return Shape(soft.row(i).transpose()); }
  std::vector<int> indices_of(Split s) const;

  void validate() const;
};

// Synthetic landmark task: shapes drawn from a low-rank linear model around
// an elliptic template, inputs are the ground-truth coordinates corrupted by
// Gaussian noise and random zeroing (occlusion). Labels and inputs are both
// clipped to the [-0.5, 0.5] frame. Fully determined by `seed`.
struct SyntheticSpec {
  int num_points = 29;
  int n_train = 2000;
  int n_test = 500;
  int latent_modes = 12;
  double noise_sigma = 0.03;
  double occlusion_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace kd
