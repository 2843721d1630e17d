#include "kd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "kd/errors.hpp"

namespace kd {

void AugmentConfig::validate(int num_points) const {
  if (!enabled) return;
  if (!(rotation_max_degrees >= 0.0 && rotation_max_degrees <= 180.0)) {
    throw DataError("augment: rotation_max_degrees must lie in [0, 180]");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw DataError("augment: flip_probability must lie in [0, 1]");
  }
  if (flip_probability > 0.0) {
    if (static_cast<int>(flip_permutation.size()) != num_points) {
      throw DataError(
          "augment: flip_permutation must list every point once (got " +
          std::to_string(flip_permutation.size()) + " entries for " +
          std::to_string(num_points) + " points)");
    }
    std::vector<bool> seen(static_cast<std::size_t>(num_points), false);
    for (int p : flip_permutation) {
      if (p < 0 || p >= num_points || seen[static_cast<std::size_t>(p)]) {
        throw DataError("augment: flip_permutation is not a permutation");
      }
      seen[static_cast<std::size_t>(p)] = true;
    }
  }
}

AugmentDraw draw_augment(const AugmentConfig& cfg, Rng& rng) {
  AugmentDraw d;
  if (!cfg.enabled) return d;
  const double max_rad = cfg.rotation_max_degrees * M_PI / 180.0;
  d.angle_radians = rng.uniform(-max_rad, max_rad);  // angle first, then flip
  d.flip = cfg.flip_probability > 0.0 && rng.bernoulli(cfg.flip_probability);
  return d;
}

Eigen::VectorXd apply_augment(const AugmentDraw& draw,
                              const Eigen::VectorXd& coords,
                              const std::vector<int>& flip_permutation) {
  if (coords.size() % 2 != 0) {
    throw DataError("apply_augment: odd coordinate vector");
  }
  const int k = static_cast<int>(coords.size() / 2);
  const double c = std::cos(draw.angle_radians);
  const double s = std::sin(draw.angle_radians);
  Eigen::VectorXd rotated(coords.size());
  for (int i = 0; i < k; ++i) {
    const double x = coords[2 * i];
    const double y = coords[2 * i + 1];
    rotated[2 * i] = c * x - s * y;
    rotated[2 * i + 1] = s * x + c * y;
  }
  Eigen::VectorXd out = rotated;
  if (draw.flip) {
    if (static_cast<int>(flip_permutation.size()) != k) {
      throw DataError("apply_augment: flip needs a point permutation");
    }
    for (int i = 0; i < k; ++i) {
      const int src = flip_permutation[static_cast<std::size_t>(i)];
      out[2 * i] = -rotated[2 * src];
      out[2 * i + 1] = rotated[2 * src + 1];
    }
  }
  for (int i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], -0.5, 0.5);
  }
  return out;
}

NormPair ExperimentConfig::resolved_norm_pair(int num_points) const {
  return norm_pair ? *norm_pair : NormPair::for_scheme(num_points);
}

void ExperimentConfig::validate() const {
  if (teacher_epochs < 1 || student_epochs < 1) {
    throw DataError("config: epochs must be >= 1");
  }
  if (teacher_batch < 1 || student_batch < 1) {
    throw DataError("config: batch sizes must be >= 1");
  }
  if (!(m_tilde >= 0.0 && m_tilde <= 1.0)) {
    throw DataError("config: m_tilde must lie in [0, 1]");
  }
  if (!(rank_epsilon >= 0.0)) throw DataError("config: rank_epsilon < 0");
  loss.validate();
  if (!(optimizer.learning_rate > 0.0) || !(optimizer.epsilon > 0.0) ||
      !(optimizer.decay >= 0.0) ||
      !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw DataError("config: bad optimizer hyperparameters");
  }
}

ShapeModel fit_dataset_model(const Dataset& ds, double rank_epsilon) {
  ds.validate();
  const std::vector<int> train = ds.indices_of(Split::kTrain);
  if (train.empty()) {
    throw DataError("shape model fit: no training samples to fit on");
  }
  std::vector<Shape> train_shapes;
  train_shapes.reserve(train.size());
  for (int i : train) train_shapes.push_back(ds.hard_shape(i));
  return fit_shape_model(train_shapes, rank_epsilon);
}

Dataset apply_soft_labels(const Dataset& ds, const ShapeModel& model,
                          double m_tilde) {
  ds.validate();
  if (model.num_points != ds.num_points) {
    throw DataError("apply_soft_labels: model and dataset disagree on k");
  }
  Dataset out = ds;
  out.soft.resize(ds.size(), 2 * ds.num_points);
  for (int i = 0; i < ds.size(); ++i) {
    out.soft.row(i) =
        soften(model, ds.hard_shape(i), m_tilde).coords().transpose();
  }
  out.validate();
  return out;
}

SoftLabelResult prepare_soft_labels(const Dataset& ds, double m_tilde,
                                    double rank_epsilon) {
  SoftLabelResult out;
  out.model = fit_dataset_model(ds, rank_epsilon);
  out.dataset = apply_soft_labels(ds, out.model, m_tilde);
  return out;
}

namespace {

MlpSpec resolve_spec(MlpSpec spec, const Dataset& ds, std::uint64_t seed) {
  if (spec.input_dim == 0) spec.input_dim = ds.input_dim();
  if (spec.output_dim == 0) spec.output_dim = 2 * ds.num_points;
  spec.seed = seed;
  spec.validate();
  if (spec.output_dim != 2 * ds.num_points) {
    throw DataError("network output dim does not match 2 * num_points");
  }
  if (spec.input_dim != ds.input_dim()) {
    throw DataError("network input dim does not match the dataset");
  }
  return spec;
}

struct BatchTargets {
  // targets always present; teacher rows only for distillation variants
  Eigen::MatrixXd y;
  Eigen::MatrixXd te_tough;
  Eigen::MatrixXd te_tolerant;
};

// One optimization run shared by teachers and students. Distillation
// variants read cached teacher rows; everything else ignores them.
TrainedModel train_core(const Dataset& ds, const Eigen::MatrixXd& targets,
                        const TeacherPredictions* preds, StudentVariant variant,
                        const ExperimentConfig& cfg, const MlpSpec& spec,
                        int epochs, int batch_size, std::uint64_t batch_seed,
                        std::uint64_t augment_seed,
                        const TrainedModel* tough_model,
                        const TrainedModel* tolerant_model) {
  const bool is_kd = variant == StudentVariant::kKdToughOnly ||
                     variant == StudentVariant::kKdTolerantOnly ||
                     variant == StudentVariant::kKdFull;
  if (is_kd && preds == nullptr) {
    throw DataError("distillation training needs cached teacher predictions");
  }
  cfg.augment.validate(ds.num_points);
  if (cfg.augment.enabled && ds.input_dim() != 2 * ds.num_points) {
    throw DataError(
        "augmentation requires coordinate inputs (input_dim == 2k)");
  }
  if (cfg.teacher_forward_on_augmented && is_kd && cfg.augment.enabled &&
      (tough_model == nullptr || tolerant_model == nullptr)) {
    throw DataError(
        "teacher_forward_on_augmented needs the teacher models at hand");
  }

  const std::vector<int> train = ds.indices_of(Split::kTrain);
  if (train.empty()) throw DataError("training: no samples in train split");

  TrainedModel model;
  model.spec = spec;
  model.params = init_params(spec);
  AdamState opt = AdamState::init_like(model.params);
  opt.learning_rate = cfg.optimizer.learning_rate;
  opt.beta1 = cfg.optimizer.beta1;
  opt.beta2 = cfg.optimizer.beta2;
  opt.decay = cfg.optimizer.decay;
  opt.epsilon = cfg.optimizer.epsilon;

  Rng batch_rng(batch_seed);
  Rng aug_rng(augment_seed);
  std::vector<int> order = train;
  const int out_dim = spec.output_dim;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    batch_rng.shuffle(order);
    double epoch_acc = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const int b = static_cast<int>(
          std::min<std::size_t>(batch_size, order.size() - start));
      Eigen::MatrixXd x(b, ds.input_dim());
      BatchTargets t;
      t.y.resize(b, out_dim);
      if (is_kd) {
        t.te_tough.resize(b, out_dim);
        t.te_tolerant.resize(b, out_dim);
      }
      for (int r = 0; r < b; ++r) {
        const int idx = order[start + static_cast<std::size_t>(r)];
        Eigen::VectorXd in = ds.inputs.row(idx).transpose();
        Eigen::VectorXd y = targets.row(idx).transpose();
        Eigen::VectorXd tou, tol;
        if (is_kd) {
          tou = preds->tough.row(idx).transpose();
          tol = preds->tolerant.row(idx).transpose();
        }
        if (cfg.augment.enabled) {
          const AugmentDraw draw = draw_augment(cfg.augment, aug_rng);
          in = apply_augment(draw, in, cfg.augment.flip_permutation);
          y = apply_augment(draw, y, cfg.augment.flip_permutation);
          if (is_kd && !cfg.teacher_forward_on_augmented) {
            tou = apply_augment(draw, tou, cfg.augment.flip_permutation);
            tol = apply_augment(draw, tol, cfg.augment.flip_permutation);
          }
        }
        x.row(r) = in.transpose();
        t.y.row(r) = y.transpose();
        if (is_kd && !(cfg.augment.enabled && cfg.teacher_forward_on_augmented)) {
          t.te_tough.row(r) = tou.transpose();
          t.te_tolerant.row(r) = tol.transpose();
        }
      }
      if (is_kd && cfg.augment.enabled && cfg.teacher_forward_on_augmented) {
        t.te_tough = forward(tough_model->spec, tough_model->params, x);
        t.te_tolerant = forward(tolerant_model->spec, tolerant_model->params, x);
      }

      ForwardTrace trace;
      const Eigen::MatrixXd pr = forward(spec, model.params, x, &trace);

      double value = 0.0;
      Eigen::MatrixXd d_out;
      switch (variant) {
        case StudentVariant::kL2: {
          auto r = reference_loss(ReferenceLoss::kL2, t.y, pr);
          value = r.value;
          d_out = std::move(r.grad);
          break;
        }
        case StudentVariant::kL1: {
          auto r = reference_loss(ReferenceLoss::kL1, t.y, pr);
          value = r.value;
          d_out = std::move(r.grad);
          break;
        }
        case StudentVariant::kSmoothL1: {
          auto r = reference_loss(ReferenceLoss::kSmoothL1, t.y, pr);
          value = r.value;
          d_out = std::move(r.grad);
          break;
        }
        default: {
          const bool use_tough = variant != StudentVariant::kKdTolerantOnly;
          const bool use_tolerant = variant != StudentVariant::kKdToughOnly;
          BatchTriples bt;
          bt.gt = t.y;
          bt.pr = pr;
          bt.te_tough = use_tough ? t.te_tough : t.y;
          bt.te_tolerant = use_tolerant ? t.te_tolerant : t.y;
          value = kd_loss(bt, cfg.loss, use_tough, use_tolerant);
          d_out = kd_loss_grad(bt, cfg.loss, use_tough, use_tolerant);
          break;
        }
      }
      if (!std::isfinite(value)) {
        throw NumericError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
      }
      const MlpGradients grads = backward(spec, model.params, trace, d_out);
      adam_step(model.params, grads, opt);
      epoch_acc += value * b;
    }
    model.epoch_loss.push_back(epoch_acc /
                               static_cast<double>(order.size()));
  }
  return model;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrainedModel train_teacher(const Dataset& ds, LabelKind labels,
                           const ExperimentConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (labels == LabelKind::kSoft && !ds.has_soft()) {
    throw DataError("train_teacher: soft labels not prepared");
  }
  const MlpSpec spec = resolve_spec(
      cfg.teacher_spec, ds, mix_seed(cfg.seed, streams::kTeacherInit));
  const Eigen::MatrixXd& targets =
      labels == LabelKind::kHard ? ds.hard : ds.soft;
  // both teachers share init, batch order, and augment draws; only their
  // targets differ, so tough/tolerant comparisons are paired
  return train_core(ds, targets, nullptr, StudentVariant::kL2, cfg, spec,
                    cfg.teacher_epochs, cfg.teacher_batch,
                    mix_seed(cfg.seed, streams::kTeacherBatches),
                    mix_seed(cfg.seed, streams::kAugment), nullptr, nullptr);
}

TeacherPredictions predict_teachers(const TrainedModel& tough,
                                    const TrainedModel& tolerant,
                                    const Dataset& ds) {
  TeacherPredictions p;
  p.tough = forward(tough.spec, tough.params, ds.inputs);
  p.tolerant = forward(tolerant.spec, tolerant.params, ds.inputs);
  return p;
}

std::string variant_name(StudentVariant v) {
  switch (v) {
    case StudentVariant::kL2:
      return "l2";
    case StudentVariant::kL1:
      return "l1";
    case StudentVariant::kSmoothL1:
      return "smooth_l1";
    case StudentVariant::kKdToughOnly:
      return "kd_tough_only";
    case StudentVariant::kKdTolerantOnly:
      return "kd_tolerant_only";
    case StudentVariant::kKdFull:
      return "kd_full";
  }
  return "?";
}

StudentVariant variant_from_name(const std::string& name) {
  for (StudentVariant v :
       {StudentVariant::kL2, StudentVariant::kL1, StudentVariant::kSmoothL1,
        StudentVariant::kKdToughOnly, StudentVariant::kKdTolerantOnly,
        StudentVariant::kKdFull}) {
    if (variant_name(v) == name) return v;
  }
  throw DataError("unknown student variant \"" + name + "\"");
}

TrainedModel train_student(const Dataset& ds, const TeacherPredictions& preds,
                           const ExperimentConfig& cfg, StudentVariant variant,
                           const TrainedModel* tough_model,
                           const TrainedModel* tolerant_model) {
  cfg.validate();
  ds.validate();
  if (preds.tough.rows() != ds.size() || preds.tolerant.rows() != ds.size() ||
      preds.tough.cols() != 2 * ds.num_points ||
      preds.tolerant.cols() != 2 * ds.num_points) {
    throw DataError("train_student: teacher predictions do not match dataset");
  }
  const MlpSpec spec = resolve_spec(
      cfg.student_spec, ds, mix_seed(cfg.seed, streams::kStudentInit));
  // students always regress toward hard labels; teachers only assist
  return train_core(ds, ds.hard, &preds, variant, cfg, spec,
                    cfg.student_epochs, cfg.student_batch,
                    mix_seed(cfg.seed, streams::kStudentBatches),
                    mix_seed(cfg.seed, streams::kStudentAugment), tough_model,
                    tolerant_model);
}

EvalReport evaluate(const TrainedModel& model, const Dataset& ds, Split split,
                    const NormPair& norm,
                    const std::optional<std::string>& tag) {
  ds.validate();
  std::vector<int> rows;
  for (int i : ds.indices_of(split)) {
    if (!tag || ds.has_tag(i, *tag)) rows.push_back(i);
  }
  if (rows.empty()) {
    throw DataError("evaluate: no samples in split " + split_name(split) +
                    (tag ? " with tag \"" + *tag + "\"" : ""));
  }
  Eigen::MatrixXd x(rows.size(), ds.input_dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = ds.inputs.row(rows[r]);
  }
  const Eigen::MatrixXd pred = forward(model.spec, model.params, x);
  std::vector<double> errors;
  errors.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Shape p(pred.row(static_cast<Eigen::Index>(r)).transpose());
    errors.push_back(per_image_error(p, ds.hard_shape(rows[r]), norm));
  }
  return make_report(errors);
}

std::map<std::string, double> AblationReport::median_nme() const {
  std::map<std::string, std::vector<double>> by_variant;
  for (const AblationRow& r : rows) by_variant[r.variant].push_back(r.nme);
  std::map<std::string, double> out;
  for (auto& [name, v] : by_variant) out[name] = median(v);
  return out;
}

AblationReport run_ablation(const Dataset& ds, const ExperimentConfig& cfg,
                            const std::vector<std::uint64_t>& seeds,
                            const std::vector<StudentVariant>& variants,
                            int jobs) {
  cfg.validate();
  if (seeds.empty()) throw DataError("run_ablation: no seeds");
  if (variants.empty()) throw DataError("run_ablation: no variants");
  if (jobs < 1) throw DataError("run_ablation: jobs must be >= 1");

  const SoftLabelResult soft =
      prepare_soft_labels(ds, cfg.m_tilde, cfg.rank_epsilon);
  const NormPair norm = cfg.resolved_norm_pair(ds.num_points);

  AblationReport report;
  report.teacher_losses.resize(seeds.size());
  // rows laid out variant-major up front so parallel seeds cannot reorder
  report.rows.resize(variants.size() * seeds.size());

  auto run_seed = [&](std::size_t si) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.seed = seeds[si];
    const TrainedModel tough =
        train_teacher(soft.dataset, LabelKind::kHard, run_cfg);
    const TrainedModel tolerant =
        train_teacher(soft.dataset, LabelKind::kSoft, run_cfg);
    const TeacherPredictions preds =
        predict_teachers(tough, tolerant, soft.dataset);
    report.teacher_losses[si] = {seeds[si], tough.final_loss(),
                                 tolerant.final_loss()};
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const TrainedModel student = train_student(
          soft.dataset, preds, run_cfg, variants[vi], &tough, &tolerant);
      const EvalReport ev = evaluate(student, soft.dataset, Split::kTest, norm);
      report.rows[vi * seeds.size() + si] = {variant_name(variants[vi]),
                                             seeds[si], ev.nme_percent,
                                             ev.fr_percent, ev.auc};
    }
  };

  // seeds write to disjoint row slots, so striping them over threads is safe
  const int workers = std::min<int>(jobs, static_cast<int>(seeds.size()));
  if (workers <= 1) {
    for (std::size_t si = 0; si < seeds.size(); ++si) run_seed(si);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          for (std::size_t si = static_cast<std::size_t>(w); si < seeds.size();
               si += static_cast<std::size_t>(workers)) {
            run_seed(si);
          }
        } catch (...) {
          errs[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs) {
      if (e) std::rethrow_exception(e);
    }
  }
  return report;
}

}  // namespace kd
