#include "kd/loss.hpp"

#include <cmath>
#include <cstdio>

#include "kd/errors.hpp"

namespace kd {

namespace {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_sigma(double sigma, const char* which) {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    throw DataError(std::string("loss config: ") + which +
                    " must lie in (0, 1)");
  }
}

}  // namespace

void LossConfig::validate() const {
  check_sigma(sigma_tough, "sigma_tough");
  check_sigma(sigma_tolerant, "sigma_tolerant");
  if (!(phi > 0.0)) throw DataError("loss config: phi must be > 0");
  if (!(main_threshold > 0.0)) {
    throw DataError("loss config: main_threshold must be > 0");
  }
  if (std::abs(c - main_threshold * main_threshold) > 1e-12) {
    throw DataError(
        "loss config: c must equal main_threshold^2 or the quadratic branch "
        "is discontinuous at the switch point");
  }
}

std::string region_name(Region r) {
  switch (r) {
    case Region::kPositive:
      return "positive";
    case Region::kNegative:
      return "negative";
    case Region::kLowInfluence:
      return "low_influence";
  }
  return "?";
}

double adapt_teacher(const ScalarTriple& t) {
  return t.gt + sgn(t.pr - t.gt) * std::abs(t.te - t.gt);
}

double beta_threshold(const ScalarTriple& t, double sigma) {
  return t.gt + sigma * sgn(t.pr - t.gt) * std::abs(t.te - t.gt);
}

Region classify_region(const ScalarTriple& t, double sigma) {
  const double d_pr = std::abs(t.pr - t.gt);
  const double d_te = std::abs(t.te - t.gt);
  const double d_beta = sigma * d_te;
  if (d_pr >= d_te) return Region::kPositive;
  if (d_pr >= d_beta) return Region::kNegative;
  return Region::kLowInfluence;
}

double assist_weight(const ScalarTriple& t, double sigma) {
  switch (classify_region(t, sigma)) {
    case Region::kPositive:
      return 1.0;
    case Region::kNegative:
      return -0.5;
    case Region::kLowInfluence:
      break;
  }
  if (t.pr == t.gt) return 0.0;  // limit of the fade at the ground truth
  const double d_pr = std::abs(t.pr - t.gt);
  const double d_beta = sigma * std::abs(t.te - t.gt);
  return -0.5 * d_pr / d_beta;
}

double aloss_scalar(const ScalarTriple& t, double sigma) {
  return assist_weight(t, sigma) * std::abs(adapt_teacher(t) - t.pr);
}

double aloss_scalar_grad(const ScalarTriple& t, double sigma) {
  const double s = sgn(t.pr - t.gt);
  if (s == 0.0) return 0.0;
  const double d_pr = std::abs(t.pr - t.gt);
  const double d_te = std::abs(t.te - t.gt);
  switch (classify_region(t, sigma)) {
    case Region::kPositive:
      // aloss = d_pr - d_te
      return s;
    case Region::kNegative:
      // aloss = -0.5 (d_te - d_pr)
      return 0.5 * s;
    case Region::kLowInfluence:
      // aloss = -0.5 d_pr (d_te - d_pr) / (sigma d_te)
      return -0.5 * s * (d_te - 2.0 * d_pr) / (sigma * d_te);
  }
  return 0.0;
}

double main_term(double gt, double pr, const LossConfig& cfg) {
  const double delta = std::abs(pr - gt);
  if (delta <= cfg.main_threshold) return delta;
  return delta * delta + cfg.c;
}

double main_term_grad(double gt, double pr, const LossConfig& cfg) {
  const double diff = pr - gt;
  const double delta = std::abs(diff);
  if (delta <= cfg.main_threshold) return sgn(diff);
  return 2.0 * diff;
}

void BatchTriples::validate() const {
  const auto rows = gt.rows();
  const auto cols = gt.cols();
  if (rows == 0 || cols == 0) throw DataError("loss batch: empty batch");
  if (cols % 2 != 0) throw DataError("loss batch: odd coordinate count");
  if (pr.rows() != rows || pr.cols() != cols || te_tough.rows() != rows ||
      te_tough.cols() != cols || te_tolerant.rows() != rows ||
      te_tolerant.cols() != cols) {
    throw DataError("loss batch: gt/pr/teacher shapes disagree");
  }
#ifndef NDEBUG
  static bool warned = false;
  if (!warned && gt.size() > 0 && gt.cwiseAbs().maxCoeff() > 0.5 + 1e-9) {
    std::fprintf(stderr,
                 "note: ground-truth coordinates outside [-0.5, 0.5]\n");
    warned = true;
  }
#endif
}

double aloss_batch(const Eigen::MatrixXd& gt, const Eigen::MatrixXd& pr,
                   const Eigen::MatrixXd& te, double sigma) {
  if (gt.rows() != pr.rows() || gt.cols() != pr.cols() ||
      gt.rows() != te.rows() || gt.cols() != te.cols()) {
    throw DataError("aloss_batch: shape mismatch");
  }
  if (gt.size() == 0) throw DataError("aloss_batch: empty batch");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < gt.cols(); ++j) {
    for (Eigen::Index i = 0; i < gt.rows(); ++i) {
      acc += aloss_scalar({gt(i, j), pr(i, j), te(i, j)}, sigma);
    }
  }
  return acc / static_cast<double>(gt.size());
}

double loss_main(const Eigen::MatrixXd& gt, const Eigen::MatrixXd& pr,
                 const LossConfig& cfg) {
  if (gt.rows() != pr.rows() || gt.cols() != pr.cols()) {
    throw DataError("loss_main: shape mismatch");
  }
  if (gt.size() == 0) throw DataError("loss_main: empty batch");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < gt.cols(); ++j) {
    for (Eigen::Index i = 0; i < gt.rows(); ++i) {
      acc += main_term(gt(i, j), pr(i, j), cfg);
    }
  }
  return acc / static_cast<double>(gt.size());
}

double kd_loss(const BatchTriples& batch, const LossConfig& cfg,
               bool use_tough, bool use_tolerant) {
  cfg.validate();
  batch.validate();
  double total = cfg.phi * loss_main(batch.gt, batch.pr, cfg);
  if (use_tough) {
    total += aloss_batch(batch.gt, batch.pr, batch.te_tough, cfg.sigma_tough);
  }
  if (use_tolerant) {
    total +=
        aloss_batch(batch.gt, batch.pr, batch.te_tolerant, cfg.sigma_tolerant);
  }
  return total;
}

Eigen::MatrixXd kd_loss_grad(const BatchTriples& batch, const LossConfig& cfg,
                             bool use_tough, bool use_tolerant) {
  cfg.validate();
  batch.validate();
  const double inv = 1.0 / static_cast<double>(batch.gt.size());
  Eigen::MatrixXd grad(batch.gt.rows(), batch.gt.cols());
  for (Eigen::Index j = 0; j < batch.gt.cols(); ++j) {
    for (Eigen::Index i = 0; i < batch.gt.rows(); ++i) {
      const double gt = batch.gt(i, j);
      const double pr = batch.pr(i, j);
      double g = cfg.phi * main_term_grad(gt, pr, cfg);
      if (use_tough) {
        g += aloss_scalar_grad({gt, pr, batch.te_tough(i, j)},
                               cfg.sigma_tough);
      }
      if (use_tolerant) {
        g += aloss_scalar_grad({gt, pr, batch.te_tolerant(i, j)},
                               cfg.sigma_tolerant);
      }
      grad(i, j) = g * inv;
    }
  }
  return grad;
}

LossValueGrad reference_loss(ReferenceLoss kind, const Eigen::MatrixXd& gt,
                             const Eigen::MatrixXd& pr) {
  if (gt.rows() != pr.rows() || gt.cols() != pr.cols()) {
    throw DataError("reference_loss: shape mismatch");
  }
  if (gt.size() == 0) throw DataError("reference_loss: empty batch");
  const double inv = 1.0 / static_cast<double>(gt.size());
  LossValueGrad out;
  out.grad.resize(gt.rows(), gt.cols());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < gt.cols(); ++j) {
    for (Eigen::Index i = 0; i < gt.rows(); ++i) {
      const double diff = pr(i, j) - gt(i, j);
      const double delta = std::abs(diff);
      switch (kind) {
        case ReferenceLoss::kL2:
          acc += diff * diff;
          out.grad(i, j) = 2.0 * diff * inv;
          break;
        case ReferenceLoss::kL1:
          acc += delta;
          out.grad(i, j) = sgn(diff) * inv;
          break;
        case ReferenceLoss::kSmoothL1:
          if (delta <= 1.0) {
            acc += 0.5 * diff * diff;
            out.grad(i, j) = diff * inv;
          } else {
            acc += delta - 0.5;
            out.grad(i, j) = sgn(diff) * inv;
          }
          break;
      }
    }
  }
  out.value = acc * inv;
  return out;
}

}  // namespace kd
