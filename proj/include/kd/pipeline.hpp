#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kd/dataset.hpp"
#include "kd/loss.hpp"
#include "kd/metrics.hpp"
#include "kd/mlp.hpp"
#include "kd/rng.hpp"
#include "kd/shape_model.hpp"

namespace kd {

// Random rotation about the origin plus optional horizontal flip, applied
// identically to the input landmarks, the labels, and any cached teacher
// predictions of a sample. Flipping negates x and reorders points through
// `flip_permutation` (new index i takes old point flip_permutation[i]).
struct AugmentConfig {
  bool enabled = false;
  double rotation_max_degrees = 45.0;
  double flip_probability = 0.5;
  std::vector<int> flip_permutation;

  void validate(int num_points) const;
};

struct AugmentDraw {
  double angle_radians = 0.0;
  bool flip = false;
};

AugmentDraw draw_augment(const AugmentConfig& cfg, Rng& rng);

// Applies a draw to one flattened (x, y) coordinate vector and clips the
// result back into [-0.5, 0.5].
Eigen::VectorXd apply_augment(const AugmentDraw& draw,
                              const Eigen::VectorXd& coords,
                              const std::vector<int>& flip_permutation);

// Everything a full run needs. Network input/output dims equal to 0 are
// resolved from the dataset.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int teacher_epochs = 250;
  int student_epochs = 250;
  int teacher_batch = 40;
  int student_batch = 70;
  double m_tilde = 0.9;
  double rank_epsilon = kDefaultRankEpsilon;
  LossConfig loss;
  MlpSpec teacher_spec;
  MlpSpec student_spec;
  AdamState optimizer;  // step/moment fields ignored, hyperparameters used
  AugmentConfig augment;
  std::optional<NormPair> norm_pair;  // defaults to the scheme convention
  // When true the teachers are re-run on augmented inputs during student
  // training rather than having their cached predictions rotated.
  bool teacher_forward_on_augmented = false;

  NormPair resolved_norm_pair(int num_points) const;
  void validate() const;
};

// Fits a shape model on the train split only.
ShapeModel fit_dataset_model(const Dataset& ds,
                             double rank_epsilon = kDefaultRankEpsilon);

// Re-expresses every sample's hard labels through a frozen model.
Dataset apply_soft_labels(const Dataset& ds, const ShapeModel& model,
                          double m_tilde);

// fit_dataset_model + apply_soft_labels in one step. Test labels pass
// through the frozen model; they never influence the fit.
struct SoftLabelResult {
  Dataset dataset;
  ShapeModel model;
};
SoftLabelResult prepare_soft_labels(const Dataset& ds, double m_tilde,
                                    double rank_epsilon = kDefaultRankEpsilon);

struct TrainedModel {
  MlpSpec spec;
  MlpParams params;
  std::vector<double> epoch_loss;

  double final_loss() const {
    return epoch_loss.empty() ? 0.0 : epoch_loss.back();
  }
};

enum class LabelKind { kHard, kSoft };

// L2 regression on the chosen label kind; the tough teacher trains on hard
// labels, the tolerant one on soft labels.
TrainedModel train_teacher(const Dataset& ds, LabelKind labels,
                           const ExperimentConfig& cfg);

// Teacher outputs for every sample of the dataset, cached once so student
// epochs do not pay for teacher forward passes.
struct TeacherPredictions {
  Eigen::MatrixXd tough;
  Eigen::MatrixXd tolerant;
};
TeacherPredictions predict_teachers(const TrainedModel& tough,
                                    const TrainedModel& tolerant,
                                    const Dataset& ds);

enum class StudentVariant {
  kL2,
  kL1,
  kSmoothL1,
  kKdToughOnly,
  kKdTolerantOnly,
  kKdFull
};

std::string variant_name(StudentVariant v);
StudentVariant variant_from_name(const std::string& name);

// Student training. KD variants read the cached teacher predictions; the
// teacher models themselves are only consulted when
// cfg.teacher_forward_on_augmented is set.
TrainedModel train_student(const Dataset& ds, const TeacherPredictions& preds,
                           const ExperimentConfig& cfg,
                           StudentVariant variant = StudentVariant::kKdFull,
                           const TrainedModel* tough_model = nullptr,
                           const TrainedModel* tolerant_model = nullptr);

// Per-image errors of a model over one split (optionally restricted to a
// tag), aggregated into NME / FR / CED / AUC.
EvalReport evaluate(const TrainedModel& model, const Dataset& ds, Split split,
                    const NormPair& norm,
                    const std::optional<std::string>& tag = {});

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double nme = 0.0;
  double fr = 0.0;
  double auc = 0.0;
};

struct TeacherLossRow {
  std::uint64_t seed = 0;
  double tough_final = 0.0;
  double tolerant_final = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // variant-major, seeds in given order
  std::vector<TeacherLossRow> teacher_losses;

  std::map<std::string, double> median_nme() const;
};

inline const std::vector<StudentVariant> kAllVariants = {
    StudentVariant::kL2,          StudentVariant::kL1,
    StudentVariant::kSmoothL1,    StudentVariant::kKdToughOnly,
    StudentVariant::kKdTolerantOnly, StudentVariant::kKdFull};

// Full protocol per seed: soften labels, train both teachers, cache their
// predictions, then train and evaluate every requested student variant.
// Teachers and students share initialization and batch order across variants
// of the same seed, so variant comparisons are paired. Seeds are independent
// and may run on `jobs` threads; results do not depend on jobs.
AblationReport run_ablation(const Dataset& ds, const ExperimentConfig& cfg,
                            const std::vector<std::uint64_t>& seeds,
                            const std::vector<StudentVariant>& variants =
                                kAllVariants,
                            int jobs = 1);

// Named sub-streams derived from a run seed (see mix_seed).
namespace streams {
inline constexpr std::uint64_t kTeacherInit = 1;
inline constexpr std::uint64_t kTeacherBatches = 2;
inline constexpr std::uint64_t kStudentInit = 3;
inline constexpr std::uint64_t kStudentBatches = 4;
inline constexpr std::uint64_t kAugment = 5;
inline constexpr std::uint64_t kStudentAugment = 6;
}  // namespace streams

}  // namespace kd
