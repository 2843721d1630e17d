// kdcli: reproducible command-line runs of the distillation pipeline.
//
// Subcommands cover the full workflow: synthesize a dataset, fit the shape
// model, attach soft labels, train teachers and students, evaluate, run the
// multi-seed ablation, export CED curves, and sweep the loss geometry.
//
// Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 numerical
// failure. Errors print one machine-readable JSON line on stderr.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kd/errors.hpp"
#include "kd/io.hpp"
#include "kd/loss.hpp"
#include "kd/pipeline.hpp"

namespace {

using namespace kd;
namespace fs = std::filesystem;

// --out paths are taken as-is when absolute; relative ones resolve under
// $KDLOSS_OUT_ROOT when it is set, else under the working directory.
fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("KDLOSS_OUT_ROOT")) {
    return fs::path(root) / p;
  }
  return p;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) break;
        out += c;
    }
  }
  return out;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << "{\"error\":\"" << kind << "\",\"message\":\""
            << json_escape(message) << "\"}\n";
}

NormPair parse_norm_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == text.size()) {
    throw DataError("--norm-pair needs exactly two indices i,j");
  }
  try {
    std::size_t li = 0, ri = 0;
    const int left = std::stoi(text.substr(0, comma), &li);
    const int right = std::stoi(text.substr(comma + 1), &ri);
    if (li != comma || ri != text.size() - comma - 1) {
      throw std::invalid_argument(text);
    }
    return NormPair::indices(left, right);
  } catch (const std::logic_error&) {
    throw DataError("--norm-pair: bad indices \"" + text + "\"");
  }
}

// Flag overrides shared by the training-style subcommands. Only flags the
// user actually passed override the config file; the file overrides the
// compiled-in defaults.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> teacher_epochs;
  std::optional<int> student_epochs;
  std::optional<int> teacher_batch;
  std::optional<int> student_batch;
  std::optional<double> m_tilde;
  std::optional<double> learning_rate;
  std::optional<std::vector<int>> teacher_hidden;
  std::optional<std::vector<int>> student_hidden;
  std::string norm_pair;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON run configuration (partial; flags win)");
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--teacher-epochs", teacher_epochs, "teacher epochs");
    cmd->add_option("--student-epochs", student_epochs, "student epochs");
    cmd->add_option("--teacher-batch", teacher_batch, "teacher batch size");
    cmd->add_option("--student-batch", student_batch, "student batch size");
    cmd->add_option("--m-tilde", m_tilde,
                    "retained fraction of shape modes for soft labels");
    cmd->add_option("--lr", learning_rate, "optimizer learning rate");
    cmd->add_option("--teacher-hidden", teacher_hidden,
                    "teacher hidden sizes, e.g. 256,256")
        ->delimiter(',');
    cmd->add_option("--student-hidden", student_hidden,
                    "student hidden sizes, e.g. 64")
        ->delimiter(',');
    cmd->add_option("--norm-pair", norm_pair,
                    "normalizing landmark indices i,j");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = io::load_experiment_config(config_path);
    if (seed) cfg.seed = *seed;
    if (teacher_epochs) cfg.teacher_epochs = *teacher_epochs;
    if (student_epochs) cfg.student_epochs = *student_epochs;
    if (teacher_batch) cfg.teacher_batch = *teacher_batch;
    if (student_batch) cfg.student_batch = *student_batch;
    if (m_tilde) cfg.m_tilde = *m_tilde;
    if (learning_rate) cfg.optimizer.learning_rate = *learning_rate;
    if (teacher_hidden) cfg.teacher_spec.hidden = *teacher_hidden;
    if (student_hidden) cfg.student_spec.hidden = *student_hidden;
    if (!norm_pair.empty()) cfg.norm_pair = parse_norm_pair(norm_pair);
    cfg.validate();
    return cfg;
  }
};

void echo_config(const ExperimentConfig& cfg) {
  std::cout << io::experiment_config_string(cfg) << "\n";
}

TrainedModel model_from_checkpoint(const fs::path& path) {
  const io::Checkpoint c = io::load_checkpoint(path);
  TrainedModel m;
  m.spec = c.spec;
  m.params = c.params;
  return m;
}

void save_model(const TrainedModel& m, const fs::path& path) {
  io::Checkpoint c;
  c.spec = m.spec;
  c.params = m.params;
  io::save_checkpoint(c, path);
}

// ---- subcommand bodies ----

struct GenDataArgs {
  std::string spec_path;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_gen_data(const GenDataArgs& a) {
  SyntheticSpec spec;
  if (!a.spec_path.empty()) spec = io::load_synthetic_spec(a.spec_path);
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  const fs::path dir = resolve_out(a.out);
  const Dataset ds = generate_synthetic(spec);
  io::save_synthetic_spec(spec, dir / "config.json");
  std::cout << io::read_text_file(dir / "config.json");
  io::save_dataset(ds, dir / "dataset.json");
  std::cout << "{\"dataset\":\"" << json_escape((dir / "dataset.json").string())
            << "\",\"n\":" << ds.size() << ",\"k\":" << ds.num_points << "}\n";
  return 0;
}

struct FitAsmArgs {
  std::string data;
  std::string out;
  double rank_epsilon = kDefaultRankEpsilon;
  bool procrustes = false;
  int procrustes_iterations = 3;
};

int run_fit_asm(const FitAsmArgs& a) {
  Dataset ds = io::load_dataset(a.data);
  if (a.procrustes) {
    // optional preprocessing: similarity-align the training shapes first
    std::vector<Shape> shapes;
    const std::vector<int> train = ds.indices_of(Split::kTrain);
    shapes.reserve(train.size());
    for (int i : train) shapes.push_back(ds.hard_shape(i));
    shapes = procrustes_align(shapes, a.procrustes_iterations);
    for (std::size_t r = 0; r < train.size(); ++r) {
      ds.hard.row(train[r]) = shapes[r].coords().transpose();
    }
  }
  const ShapeModel model = fit_dataset_model(ds, a.rank_epsilon);
  io::save_shape_model(model, resolve_out(a.out));
  std::cout << "{\"retained_modes\":" << model.retained_count()
            << ",\"k\":" << model.num_points << "}\n";
  return 0;
}

struct GenSoftArgs {
  std::string data;
  std::string model;
  double m_tilde = 0.9;
  std::string out;
};

int run_gen_soft(const GenSoftArgs& a) {
  const Dataset ds = io::load_dataset(a.data);
  const ShapeModel model = io::load_shape_model(a.model);
  const Dataset out = apply_soft_labels(ds, model, a.m_tilde);
  io::save_dataset(out, resolve_out(a.out));
  std::cout << "{\"softened\":" << out.size() << ",\"m_tilde\":"
            << io::format_double(a.m_tilde) << "}\n";
  return 0;
}

struct TrainTeacherArgs {
  std::string data;
  std::string labels = "hard";
  std::string out;
  ConfigFlags cfg;
};

int run_train_teacher(const TrainTeacherArgs& a) {
  const ExperimentConfig cfg = a.cfg.resolve();
  echo_config(cfg);
  const Dataset ds = io::load_dataset(a.data);
  LabelKind kind;
  if (a.labels == "hard") {
    kind = LabelKind::kHard;
  } else if (a.labels == "soft") {
    kind = LabelKind::kSoft;
  } else {
    throw DataError("--labels must be hard or soft");
  }
  const TrainedModel m = train_teacher(ds, kind, cfg);
  save_model(m, resolve_out(a.out));
  std::cout << "{\"labels\":\"" << a.labels << "\",\"epochs\":"
            << m.epoch_loss.size() << ",\"final_loss\":"
            << io::format_double(m.final_loss()) << "}\n";
  return 0;
}

struct TrainStudentArgs {
  std::string data;
  std::string tough;
  std::string tolerant;
  std::string variant = "kd_full";
  std::string out;
  std::string save_preds;
  ConfigFlags cfg;
};

int run_train_student(const TrainStudentArgs& a) {
  const ExperimentConfig cfg = a.cfg.resolve();
  echo_config(cfg);
  const Dataset ds = io::load_dataset(a.data);
  const StudentVariant variant = variant_from_name(a.variant);
  const TrainedModel tough = model_from_checkpoint(a.tough);
  const TrainedModel tolerant = model_from_checkpoint(a.tolerant);
  const TeacherPredictions preds = predict_teachers(tough, tolerant, ds);
  if (!a.save_preds.empty()) {
    io::save_teacher_predictions(preds, ds.num_points,
                                 resolve_out(a.save_preds));
  }
  const TrainedModel m =
      train_student(ds, preds, cfg, variant, &tough, &tolerant);
  save_model(m, resolve_out(a.out));
  std::cout << "{\"variant\":\"" << a.variant << "\",\"epochs\":"
            << m.epoch_loss.size() << ",\"final_loss\":"
            << io::format_double(m.final_loss()) << "}\n";
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string norm_pair;
  std::string tag;
  std::string out;
  std::string errors_out;
};

int run_eval(const EvalArgs& a) {
  const TrainedModel m = model_from_checkpoint(a.model);
  const Dataset ds = io::load_dataset(a.data);
  const Split split = split_from_name(a.split);
  const NormPair norm = a.norm_pair.empty()
                            ? NormPair::for_scheme(ds.num_points)
                            : parse_norm_pair(a.norm_pair);
  std::optional<std::string> tag;
  if (!a.tag.empty()) tag = a.tag;

  // recompute the raw per-image errors when they are exported
  const EvalReport r = evaluate(m, ds, split, norm, tag);
  io::save_eval_report(r, resolve_out(a.out));
  if (!a.errors_out.empty()) {
    std::vector<double> errors;
    for (int i : ds.indices_of(split)) {
      if (tag && !ds.has_tag(i, *tag)) continue;
      const Shape pred(forward(m.spec, m.params,
                               ds.inputs.row(i))
                           .row(0)
                           .transpose());
      errors.push_back(per_image_error(pred, ds.hard_shape(i), norm));
    }
    io::write_errors_csv(errors, resolve_out(a.errors_out));
  }
  std::cout << "{\"n_images\":" << r.n_images << ",\"nme\":"
            << io::format_double(r.nme_percent) << ",\"fr\":"
            << io::format_double(r.fr_percent) << ",\"auc\":"
            << io::format_double(r.auc) << "}\n";
  return 0;
}

struct AblateArgs {
  std::string data;
  int seeds = 5;
  int jobs = 1;
  std::string out;
  ConfigFlags cfg;
};

int run_ablate(const AblateArgs& a) {
  const ExperimentConfig cfg = a.cfg.resolve();
  echo_config(cfg);
  if (a.seeds < 1) throw DataError("--seeds must be at least 1");
  if (a.jobs < 1) throw DataError("--jobs must be at least 1");
  const Dataset ds = io::load_dataset(a.data);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(a.seeds));
  for (int i = 0; i < a.seeds; ++i) {
    seeds[static_cast<std::size_t>(i)] =
        cfg.seed + static_cast<std::uint64_t>(i);
  }
  const fs::path dir = resolve_out(a.out);
  const AblationReport report =
      run_ablation(ds, cfg, seeds, kAllVariants, a.jobs);
  io::save_experiment_config(cfg, dir / "config.json");
  io::write_ablation_csv(report, dir / "ablation.csv");

  std::string teachers = "seed,tough_final,tolerant_final\n";
  for (const TeacherLossRow& t : report.teacher_losses) {
    teachers += std::to_string(t.seed) + "," +
                io::format_double(t.tough_final) + "," +
                io::format_double(t.tolerant_final) + "\n";
  }
  io::write_text_file(dir / "teachers.csv", teachers);

  std::cout << "{\"rows\":" << report.rows.size() << ",\"median_nme\":{";
  bool first = true;
  for (const auto& [variant, nme] : report.median_nme()) {
    if (!first) std::cout << ",";
    first = false;
    std::cout << "\"" << variant << "\":" << io::format_double(nme);
  }
  std::cout << "}}\n";
  return 0;
}

struct CedArgs {
  std::string errors;
  std::string from_eval;
  double max_threshold = 0.1;
  int samples = 1000;
  std::string out;
  std::string svg;
};

int run_ced(const CedArgs& a) {
  if (a.errors.empty() == a.from_eval.empty()) {
    throw DataError("ced needs exactly one of --errors or --from-eval");
  }
  std::vector<CedPoint> ced;
  if (!a.errors.empty()) {
    ced = ced_curve(io::read_errors_csv(a.errors), a.max_threshold, a.samples);
  } else {
    ced = io::load_eval_report(a.from_eval).ced;
  }
  io::write_ced_csv(ced, resolve_out(a.out));
  if (!a.svg.empty()) {
    io::write_ced_svg({ced}, {"model"}, resolve_out(a.svg));
  }
  std::cout << "{\"points\":" << ced.size() << ",\"auc\":"
            << io::format_double(auc_from_ced(ced)) << "}\n";
  return 0;
}

struct LossSweepArgs {
  double gt = 0.0;
  double te = 0.4;
  double sigma = 0.4;
  double phi = 2.0;
  int grid = 1000;
  double pr_min = -0.5;
  double pr_max = 0.5;
  std::string out;
};

// One-coordinate slice of the loss geometry: the assist terms use a single
// teacher at `te`; the kd column counts that teacher twice (both teachers
// collapsed onto the same point).
int run_loss_sweep(const LossSweepArgs& a) {
  if (a.grid < 2) throw DataError("--grid needs at least 2 samples");
  if (!(a.pr_max > a.pr_min)) throw DataError("--pr-max must exceed --pr-min");
  LossConfig lc;
  lc.sigma_tough = a.sigma;
  lc.sigma_tolerant = a.sigma;
  lc.phi = a.phi;
  lc.validate();

  std::string csv = "pr,region,omega,aloss,kd_loss\n";
  for (int i = 0; i < a.grid; ++i) {
    const double pr = a.pr_min + (a.pr_max - a.pr_min) * i / (a.grid - 1);
    const ScalarTriple t{a.gt, pr, a.te};
    const Region region = classify_region(t, a.sigma);
    const double omega = assist_weight(t, a.sigma);
    const double aloss = aloss_scalar(t, a.sigma);
    const double kd = a.phi * main_term(a.gt, pr, lc) + 2.0 * aloss;
    csv += io::format_double(pr) + "," + region_name(region) + "," +
           io::format_double(omega) + "," + io::format_double(aloss) + "," +
           io::format_double(kd) + "\n";
  }
  io::write_text_file(resolve_out(a.out), csv);
  std::cout << "{\"rows\":" << a.grid << "}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Knowledge-distillation loss workbench for landmark regression"};
  app.require_subcommand(1);

  GenDataArgs gen_data;
  auto* cmd_gen = app.add_subcommand(
      "gen-data", "Synthesize a landmark dataset from a seeded shape model");
  cmd_gen->add_option("--spec", gen_data.spec_path,
                      "JSON generator spec (partial)");
  cmd_gen->add_option("--seed", gen_data.seed, "generator seed override");
  cmd_gen->add_option("--out", gen_data.out, "output directory")->required();

  FitAsmArgs fit_asm;
  auto* cmd_fit = app.add_subcommand(
      "fit-asm", "Fit the landmark shape model on the train split");
  cmd_fit->add_option("--data", fit_asm.data, "dataset JSON")->required();
  cmd_fit->add_option("--out", fit_asm.out, "shape model JSON")->required();
  cmd_fit->add_option("--rank-epsilon", fit_asm.rank_epsilon,
                      "relative eigenvalue cutoff");
  cmd_fit->add_flag("--procrustes", fit_asm.procrustes,
                    "similarity-align training shapes before fitting");
  cmd_fit->add_option("--procrustes-iterations", fit_asm.procrustes_iterations,
                      "alignment passes");

  GenSoftArgs gen_soft;
  auto* cmd_soft = app.add_subcommand(
      "gen-soft", "Attach shape-model-softened labels to a dataset");
  cmd_soft->add_option("--data", gen_soft.data, "dataset JSON")->required();
  cmd_soft->add_option("--model", gen_soft.model, "shape model JSON")
      ->required();
  cmd_soft->add_option("--m-tilde", gen_soft.m_tilde,
                       "retained fraction of shape modes");
  cmd_soft->add_option("--out", gen_soft.out, "output dataset JSON")
      ->required();

  TrainTeacherArgs train_teacher_args;
  auto* cmd_tt = app.add_subcommand("train-teacher",
                                    "Train one teacher with L2 regression");
  cmd_tt->add_option("--data", train_teacher_args.data, "dataset JSON")
      ->required();
  cmd_tt->add_option("--labels", train_teacher_args.labels,
                     "hard (tough teacher) or soft (tolerant teacher)");
  cmd_tt->add_option("--out", train_teacher_args.out, "checkpoint JSON")
      ->required();
  train_teacher_args.cfg.attach(cmd_tt);

  TrainStudentArgs train_student_args;
  auto* cmd_ts = app.add_subcommand(
      "train-student", "Train a student against both teachers");
  cmd_ts->add_option("--data", train_student_args.data, "dataset JSON")
      ->required();
  cmd_ts->add_option("--tough", train_student_args.tough,
                     "tough teacher checkpoint")
      ->required();
  cmd_ts->add_option("--tolerant", train_student_args.tolerant,
                     "tolerant teacher checkpoint")
      ->required();
  cmd_ts->add_option("--variant", train_student_args.variant,
                     "l2|l1|smooth_l1|kd_tough_only|kd_tolerant_only|kd_full");
  cmd_ts->add_option("--out", train_student_args.out, "checkpoint JSON")
      ->required();
  cmd_ts->add_option("--save-preds", train_student_args.save_preds,
                     "also write the cached teacher predictions");
  train_student_args.cfg.attach(cmd_ts);

  EvalArgs eval_args;
  auto* cmd_eval =
      app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  cmd_eval->add_option("--model", eval_args.model, "checkpoint JSON")
      ->required();
  cmd_eval->add_option("--data", eval_args.data, "dataset JSON")->required();
  cmd_eval->add_option("--split", eval_args.split, "train or test");
  cmd_eval->add_option("--norm-pair", eval_args.norm_pair,
                       "normalizing landmark indices i,j");
  cmd_eval->add_option("--tag", eval_args.tag, "restrict to tagged samples");
  cmd_eval->add_option("--out", eval_args.out, "report JSON")->required();
  cmd_eval->add_option("--errors-out", eval_args.errors_out,
                       "also write per-image errors CSV");

  AblateArgs ablate_args;
  auto* cmd_ablate = app.add_subcommand(
      "ablate", "Multi-seed teacher/student ablation over all variants");
  cmd_ablate->add_option("--data", ablate_args.data, "dataset JSON")
      ->required();
  cmd_ablate->add_option("--seeds", ablate_args.seeds,
                         "number of consecutive run seeds");
  cmd_ablate->add_option("--jobs", ablate_args.jobs, "worker threads");
  cmd_ablate->add_option("--out", ablate_args.out, "output directory")
      ->required();
  ablate_args.cfg.attach(cmd_ablate);

  CedArgs ced_args;
  auto* cmd_ced = app.add_subcommand(
      "ced", "Export a cumulative error distribution curve");
  cmd_ced->add_option("--errors", ced_args.errors, "per-image errors CSV");
  cmd_ced->add_option("--from-eval", ced_args.from_eval, "eval report JSON");
  cmd_ced->add_option("--max", ced_args.max_threshold, "largest threshold");
  cmd_ced->add_option("--samples", ced_args.samples, "curve sample count");
  cmd_ced->add_option("--out", ced_args.out, "CED CSV")->required();
  cmd_ced->add_option("--svg", ced_args.svg, "also write an SVG plot");

  LossSweepArgs sweep_args;
  auto* cmd_sweep = app.add_subcommand(
      "loss-sweep", "Tabulate the loss geometry over a prediction grid");
  cmd_sweep->add_option("--gt", sweep_args.gt, "ground-truth coordinate");
  cmd_sweep->add_option("--te", sweep_args.te, "teacher coordinate");
  cmd_sweep->add_option("--sigma", sweep_args.sigma, "low-influence fraction");
  cmd_sweep->add_option("--phi", sweep_args.phi, "main-term weight");
  cmd_sweep->add_option("--grid", sweep_args.grid, "number of grid points");
  cmd_sweep->add_option("--pr-min", sweep_args.pr_min, "grid start");
  cmd_sweep->add_option("--pr-max", sweep_args.pr_max, "grid end");
  cmd_sweep->add_option("--out", sweep_args.out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    print_error("usage", e.what());
    return 1;
  }

  try {
    if (cmd_gen->parsed()) return run_gen_data(gen_data);
    if (cmd_fit->parsed()) return run_fit_asm(fit_asm);
    if (cmd_soft->parsed()) return run_gen_soft(gen_soft);
    if (cmd_tt->parsed()) return run_train_teacher(train_teacher_args);
    if (cmd_ts->parsed()) return run_train_student(train_student_args);
    if (cmd_eval->parsed()) return run_eval(eval_args);
    if (cmd_ablate->parsed()) return run_ablate(ablate_args);
    if (cmd_ced->parsed()) return run_ced(ced_args);
    if (cmd_sweep->parsed()) return run_loss_sweep(sweep_args);
    print_error("usage", "missing subcommand");
    return 1;
  } catch (const DataError& e) {
    print_error("data", e.what());
    return 2;
  } catch (const NumericError& e) {
    print_error("numeric", e.what());
    return 3;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 3;
  }
}
