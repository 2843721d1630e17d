#pragma once

#include <Eigen/Dense>
#include <string>

namespace kd {

// Hyperparameters of the distillation loss. sigma shrinks the low-influence
// band around the ground truth (one value per teacher), phi scales the main
// regression term, c is the continuity offset of the quadratic branch and
// must equal main_threshold^2 so value and slope match at the switch point.
struct LossConfig {
  double sigma_tough = 0.4;
  double sigma_tolerant = 0.4;
  double phi = 2.0;
  double c = 0.25;
  double main_threshold = 0.5;

  void validate() const;
};

// One coordinate seen by the assistive term: ground truth, prediction, and a
// teacher's prediction for the same coordinate.
struct ScalarTriple {
  double gt = 0.0;
  double pr = 0.0;
  double te = 0.0;
};

// Region of the prediction relative to the teacher distance d = |te - gt|
// and the inner threshold sigma * d. Positive: at least as far out as the
// teacher. Negative: between the two. LowInfluence: inside the inner band.
enum class Region { kPositive, kNegative, kLowInfluence };

std::string region_name(Region r);

// Teacher mirrored onto the prediction's side of the ground truth:
// te' = gt + sign(pr - gt) * |te - gt|. sign(0) is 0, so pr == gt collapses
// the adapted teacher onto the ground truth.
double adapt_teacher(const ScalarTriple& t);

// Boundary between the negative and low-influence regions, on the
// prediction's side: beta = gt + sigma * sign(pr - gt) * |te - gt|.
double beta_threshold(const ScalarTriple& t, double sigma);

Region classify_region(const ScalarTriple& t, double sigma);

// Assistance weight: +1 (positive region), -0.5 (negative region), and a
// linear fade -0.5 * (pr - gt) / (beta - gt) inside the low-influence band.
double assist_weight(const ScalarTriple& t, double sigma);

// Per-coordinate assistive loss: weight * |te' - pr|. Zero when the teacher
// sits on the ground truth.
double aloss_scalar(const ScalarTriple& t, double sigma);

// d aloss / d pr. The teacher is a constant input here; no gradient flows
// into it. At region boundaries the subgradient of the side with the larger
// |pr - gt| is used; at pr == gt the derivative is taken as 0.
double aloss_scalar_grad(const ScalarTriple& t, double sigma);

// Per-coordinate main regression term: |pr - gt| below the threshold,
// (pr - gt)^2 + c above it.
double main_term(double gt, double pr, const LossConfig& cfg);
double main_term_grad(double gt, double pr, const LossConfig& cfg);

// Batch layout: rows are samples, columns are the 2k flattened coordinates.
struct BatchTriples {
  Eigen::MatrixXd gt;
  Eigen::MatrixXd pr;
  Eigen::MatrixXd te_tough;
  Eigen::MatrixXd te_tolerant;

  void validate() const;
};

// Means over all n * 2k coordinates.
double aloss_batch(const Eigen::MatrixXd& gt, const Eigen::MatrixXd& pr,
                   const Eigen::MatrixXd& te, double sigma);
double loss_main(const Eigen::MatrixXd& gt, const Eigen::MatrixXd& pr,
                 const LossConfig& cfg);

// Full distillation loss phi * main + aloss(tough) + aloss(tolerant), with
// either assistive term optionally disabled for ablations.
double kd_loss(const BatchTriples& batch, const LossConfig& cfg,
               bool use_tough = true, bool use_tolerant = true);

// Exact gradient of kd_loss with respect to pr, same layout as pr.
Eigen::MatrixXd kd_loss_grad(const BatchTriples& batch, const LossConfig& cfg,
                             bool use_tough = true, bool use_tolerant = true);

// Baselines for ablation runs, mean over all coordinates.
enum class ReferenceLoss { kL2, kL1, kSmoothL1 };

struct LossValueGrad {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

LossValueGrad reference_loss(ReferenceLoss kind, const Eigen::MatrixXd& gt,
                             const Eigen::MatrixXd& pr);

}  // namespace kd
