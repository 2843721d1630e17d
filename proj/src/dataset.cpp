#include "kd/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "kd/errors.hpp"
#include "kd/rng.hpp"

namespace kd {

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split \"" + name + "\" (want train or test)");
}

bool Dataset::has_tag(int i, const std::string& tag) const {
  if (tags.empty()) return false;
  const auto& t = tags[static_cast<std::size_t>(i)];
  return std::find(t.begin(), t.end(), tag) != t.end();
}

std::vector<int> Dataset::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (split[static_cast<std::size_t>(i)] == s) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  if (num_points < 1) throw DataError("dataset: num_points must be >= 1");
  const int n = size();
  if (n == 0) throw DataError("dataset: no samples");
  if (input_dim() < 1) throw DataError("dataset: empty input rows");
  if (hard.rows() != n || hard.cols() != 2 * num_points) {
    throw DataError("dataset: hard label matrix does not match num_points");
  }
  if (has_soft() && (soft.rows() != n || soft.cols() != 2 * num_points)) {
    throw DataError("dataset: soft label matrix does not match num_points");
  }
  if (static_cast<int>(split.size()) != n) {
    throw DataError("dataset: split assignments missing");
  }
  if (!tags.empty() && static_cast<int>(tags.size()) != n) {
    throw DataError("dataset: tag list length does not match samples");
  }
  if (!inputs.allFinite() || !hard.allFinite() ||
      (has_soft() && !soft.allFinite())) {
    throw DataError("dataset: non-finite values");
  }
  if (hard.cwiseAbs().maxCoeff() > 0.5 + 1e-12) {
    throw DataError("dataset: hard landmarks outside the [-0.5, 0.5] frame");
  }
}

void SyntheticSpec::validate() const {
  if (num_points < 2) throw DataError("synthetic: need at least 2 points");
  if (n_train < 1 || n_test < 1) {
    throw DataError("synthetic: n_train and n_test must be >= 1");
  }
  if (latent_modes < 1 || latent_modes > 2 * num_points) {
    throw DataError("synthetic: latent_modes must lie in [1, 2k]");
  }
  if (!(noise_sigma >= 0.0)) throw DataError("synthetic: negative noise_sigma");
  if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0)) {
    throw DataError("synthetic: occlusion_fraction must lie in [0, 1)");
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int k = spec.num_points;
  const int dim = 2 * k;
  const int n = spec.n_train + spec.n_test;
  Rng rng(spec.seed);

  // elliptic template, comfortably inside the frame
  Eigen::VectorXd tmpl(dim);
  for (int i = 0; i < k; ++i) {
    const double th = 2.0 * M_PI * static_cast<double>(i) / k;
    tmpl[2 * i] = 0.32 * std::cos(th);
    tmpl[2 * i + 1] = 0.26 * std::sin(th);
  }

  // orthonormal deformation modes via modified Gram-Schmidt on Gaussian draws
  const int modes = spec.latent_modes;
  Eigen::MatrixXd basis(dim, modes);
  for (int j = 0; j < modes; ++j) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    for (int p = 0; p < j; ++p) v -= basis.col(p).dot(v) * basis.col(p);
    const double nrm = v.norm();
    if (!(nrm > 1e-12)) throw NumericError("synthetic: degenerate mode draw");
    basis.col(j) = v / nrm;
  }

  // geometric spectrum, total deviation norm 0.22 across all modes
  Eigen::VectorXd stddev(modes);
  double sum_sq = 0.0;
  for (int j = 0; j < modes; ++j) {
    stddev[j] = std::pow(0.9, j);
    sum_sq += stddev[j] * stddev[j];
  }
  stddev *= 0.22 / std::sqrt(sum_sq);

  Dataset ds;
  ds.num_points = k;
  ds.inputs.resize(n, dim);
  ds.hard.resize(n, dim);
  ds.split.resize(static_cast<std::size_t>(n));

  // per sample: latent draws, then noise, then occlusion mask, in that order
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd shape = tmpl;
    for (int j = 0; j < modes; ++j) {
      shape += rng.normal(0.0, stddev[j]) * basis.col(j);
    }
    for (int c = 0; c < dim; ++c) {
      shape[c] = std::clamp(shape[c], -0.5, 0.5);
    }
    Eigen::VectorXd input = shape;
    for (int c = 0; c < dim; ++c) input[c] += rng.normal(0.0, spec.noise_sigma);
    for (int c = 0; c < dim; ++c) {
      input[c] = std::clamp(input[c], -0.5, 0.5);
    }
    for (int c = 0; c < dim; ++c) {
      if (rng.bernoulli(spec.occlusion_fraction)) input[c] = 0.0;
    }
    ds.hard.row(i) = shape.transpose();
    ds.inputs.row(i) = input.transpose();
    ds.split[static_cast<std::size_t>(i)] =
        i < spec.n_train ? Split::kTrain : Split::kTest;
  }
  ds.validate();
  return ds;
}

}  // namespace kd
