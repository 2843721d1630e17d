#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kd/dataset.hpp"
#include "kd/metrics.hpp"
#include "kd/mlp.hpp"
#include "kd/pipeline.hpp"
#include "kd/shape_model.hpp"

namespace kd::io {

// Shortest decimal form that parses back to the same double. Used for every
// CSV cell so re-exports are byte-identical.
std::string format_double(double v);

// ---- landmark annotation files (.pts) ----
//
// version: 1
// n_points: 68
// {
// x y          (one landmark per line, 1-based pixel coordinates)
// }
//
// PtsFile keeps the raw file values; the 1-based pixel convention is
// converted exactly at this boundary (subtract 1 on read, add 1 on write).

struct PtsFile {
  int version = 1;
  std::vector<Eigen::Vector2d> points;
};

PtsFile parse_pts(const std::string& text);
std::string write_pts(const PtsFile& f);
Shape pts_to_shape(const PtsFile& f);
PtsFile shape_to_pts(const Shape& s);

// ---- JSON artifacts ----
// All loaders are strict: missing fields, wrong types, and unknown fields
// are DataErrors naming the offending JSON pointer.

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

void save_shape_model(const ShapeModel& m, const std::filesystem::path& path);
ShapeModel load_shape_model(const std::filesystem::path& path);

struct Checkpoint {
  MlpSpec spec;
  MlpParams params;
  bool has_adam = false;
  AdamState adam;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_teacher_predictions(const TeacherPredictions& p, int num_points,
                              const std::filesystem::path& path);
TeacherPredictions load_teacher_predictions(const std::filesystem::path& path);

void save_eval_report(const EvalReport& r, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

// Run configuration files are partial: absent fields keep their compiled-in
// defaults, unknown fields are rejected, "version" is optional.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& cfg,
                            const std::filesystem::path& path);
std::string experiment_config_string(const ExperimentConfig& cfg);

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
void save_synthetic_spec(const SyntheticSpec& spec,
                         const std::filesystem::path& path);

// ---- CSV / SVG ----

void write_ablation_csv(const AblationReport& r,
                        const std::filesystem::path& path);
void write_ced_csv(const std::vector<CedPoint>& ced,
                   const std::filesystem::path& path);
std::vector<CedPoint> read_ced_csv(const std::filesystem::path& path);
void write_errors_csv(const std::vector<double>& errors,
                      const std::filesystem::path& path);
std::vector<double> read_errors_csv(const std::filesystem::path& path);

// 800x600 plot of one or more CED curves; labels are curve names.
void write_ced_svg(const std::vector<std::vector<CedPoint>>& curves,
                   const std::vector<std::string>& labels,
                   const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);

}  // namespace kd::io
