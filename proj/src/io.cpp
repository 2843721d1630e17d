#include "kd/io.hpp"

#include <charconv>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "kd/errors.hpp"

namespace kd::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double_token(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw DataError(where + ": bad number \"" + tok + "\"");
  }
  return v;
}

[[noreturn]] void fail(const std::string& at, const std::string& what) {
  throw DataError(at + ": " + what);
}

const json& need(const json& obj, const char* key, const std::string& at) {
  if (!obj.is_object()) fail(at, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(at + "/" + key, "missing field");
  return *it;
}

void no_extras(const json& obj, std::initializer_list<const char*> allowed,
               const std::string& at) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) fail(at + "/" + it.key(), "unknown field");
  }
}

double as_double(const json& j, const std::string& at) {
  if (!j.is_number()) fail(at, "expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& at) {
  if (!j.is_number_integer()) fail(at, "expected an integer");
  return j.get<int>();
}

std::uint64_t as_u64(const json& j, const std::string& at) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
    return j.get<std::uint64_t>();
  }
  fail(at, "expected an unsigned integer");
}

std::string as_str(const json& j, const std::string& at) {
  if (!j.is_string()) fail(at, "expected a string");
  return j.get<std::string>();
}

void check_version(const json& obj, const std::string& at) {
  const int v = as_int(need(obj, "version", at), at + "/version");
  if (v != 1) fail(at + "/version", "unsupported version " + std::to_string(v));
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& j, const std::string& at,
                              Eigen::Index expected = -1) {
  if (!j.is_array()) fail(at, "expected an array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected) {
    fail(at, "expected " + std::to_string(expected) + " entries, got " +
                 std::to_string(j.size()));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] =
        as_double(j[i], at + "/" + std::to_string(i));
  }
  return v;
}

json mat_rows_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(vec_to_json(m.row(r).transpose()));
  }
  return rows;
}

Eigen::MatrixXd mat_rows_from_json(const json& j, const std::string& at,
                                   Eigen::Index cols) {
  if (!j.is_array()) fail(at, "expected an array of rows");
  if (j.empty()) fail(at, "empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    m.row(static_cast<Eigen::Index>(r)) =
        vec_from_json(j[r], at + "/" + std::to_string(r), cols).transpose();
  }
  return m;
}

json parse_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void dump_to_file(const json& j, const std::filesystem::path& path) {
  write_text_file(path, j.dump(2) + "\n");
}

void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericError("refusing to write non-finite values in " + what);
  }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("read failed for " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

// ---- .pts ----

PtsFile parse_pts(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      // strip trailing CR and surrounding whitespace
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                               line.back() == '\t')) {
        line.pop_back();
      }
      std::size_t start = line.find_first_not_of(" \t");
      if (start == std::string::npos) continue;
      line = line.substr(start);
      return true;
    }
    return false;
  };
  auto fail_line = [&](const std::string& what) -> void {
    throw DataError("pts line " + std::to_string(line_no) + ": " + what);
  };

  PtsFile f;
  if (!next_line()) throw DataError("pts: empty file");
  if (line.rfind("version:", 0) != 0) fail_line("expected \"version:\"");
  std::string ver_tok = line.substr(8);
  const std::size_t v0 = ver_tok.find_first_not_of(' ');
  if (v0 == std::string::npos) fail_line("missing version number");
  ver_tok = ver_tok.substr(v0);
  f.version = static_cast<int>(
      parse_double_token(ver_tok, "pts line " + std::to_string(line_no)));
  if (f.version != 1) fail_line("unsupported version");

  if (!next_line()) throw DataError("pts: missing n_points header");
  if (line.rfind("n_points:", 0) != 0) fail_line("expected \"n_points:\"");
  std::string count_tok = line.substr(9);
  const std::size_t c0 = count_tok.find_first_not_of(' ');
  if (c0 == std::string::npos) fail_line("missing point count");
  count_tok = count_tok.substr(c0);
  const int n = static_cast<int>(parse_double_token(
      count_tok, "pts line " + std::to_string(line_no)));
  if (n < 1) fail_line("n_points must be >= 1");

  if (!next_line() || line != "{") fail_line("expected \"{\"");
  for (int i = 0; i < n; ++i) {
    if (!next_line()) fail_line("unexpected end of file inside point block");
    if (line == "}") fail_line("point block ended early: expected " +
                               std::to_string(n) + " points, got " +
                               std::to_string(i));
    std::istringstream ls(line);
    std::string xs, ys, extra;
    if (!(ls >> xs >> ys) || (ls >> extra)) {
      fail_line("expected \"x y\"");
    }
    const std::string where = "pts line " + std::to_string(line_no);
    f.points.emplace_back(parse_double_token(xs, where),
                          parse_double_token(ys, where));
  }
  if (!next_line() || line != "}") fail_line("expected \"}\"");
  return f;
}

std::string write_pts(const PtsFile& f) {
  std::string out = "version: 1\nn_points: " +
                    std::to_string(f.points.size()) + "\n{\n";
  for (const auto& p : f.points) {
    out += format_double(p.x()) + " " + format_double(p.y()) + "\n";
  }
  out += "}\n";
  return out;
}

Shape pts_to_shape(const PtsFile& f) {
  Eigen::VectorXd c(2 * f.points.size());
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    // file is 1-based pixel space
    c[static_cast<Eigen::Index>(2 * i)] = f.points[i].x() - 1.0;
    c[static_cast<Eigen::Index>(2 * i + 1)] = f.points[i].y() - 1.0;
  }
  return Shape(c);
}

PtsFile shape_to_pts(const Shape& s) {
  PtsFile f;
  for (int i = 0; i < s.num_points(); ++i) {
    f.points.emplace_back(s.x(i) + 1.0, s.y(i) + 1.0);
  }
  return f;
}

// ---- dataset ----

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  require_finite(ds.inputs, "dataset inputs");
  json root;
  root["version"] = 1;
  root["k"] = ds.num_points;
  root["input_dim"] = ds.input_dim();
  json samples = json::array();
  for (int i = 0; i < ds.size(); ++i) {
    json s;
    s["input"] = vec_to_json(ds.inputs.row(i).transpose());
    s["hard"] = vec_to_json(ds.hard.row(i).transpose());
    if (ds.has_soft()) s["soft"] = vec_to_json(ds.soft.row(i).transpose());
    s["split"] = split_name(ds.split[static_cast<std::size_t>(i)]);
    if (!ds.tags.empty() && !ds.tags[static_cast<std::size_t>(i)].empty()) {
      s["tags"] = ds.tags[static_cast<std::size_t>(i)];
    }
    samples.push_back(std::move(s));
  }
  root["samples"] = std::move(samples);
  dump_to_file(root, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const json root = parse_file(path);
  const std::string at = "";
  no_extras(root, {"version", "k", "input_dim", "samples"}, at);
  check_version(root, at);
  const int k = as_int(need(root, "k", at), "/k");
  const int input_dim = as_int(need(root, "input_dim", at), "/input_dim");
  if (k < 1) fail("/k", "must be >= 1");
  if (input_dim < 1) fail("/input_dim", "must be >= 1");
  const json& samples = need(root, "samples", at);
  if (!samples.is_array() || samples.empty()) {
    fail("/samples", "expected a non-empty array");
  }

  const int n = static_cast<int>(samples.size());
  Dataset ds;
  ds.num_points = k;
  ds.inputs.resize(n, input_dim);
  ds.hard.resize(n, 2 * k);
  ds.split.resize(static_cast<std::size_t>(n));
  int soft_count = 0;
  bool any_tags = false;
  std::vector<std::vector<std::string>> tags(static_cast<std::size_t>(n));
  Eigen::MatrixXd soft(n, 2 * k);

  for (int i = 0; i < n; ++i) {
    const std::string sat = "/samples/" + std::to_string(i);
    const json& s = samples[static_cast<std::size_t>(i)];
    if (!s.is_object()) fail(sat, "expected an object");
    no_extras(s, {"input", "hard", "soft", "split", "tags"}, sat);
    ds.inputs.row(i) =
        vec_from_json(need(s, "input", sat), sat + "/input", input_dim)
            .transpose();
    ds.hard.row(i) =
        vec_from_json(need(s, "hard", sat), sat + "/hard", 2 * k).transpose();
    ds.split[static_cast<std::size_t>(i)] =
        split_from_name(as_str(need(s, "split", sat), sat + "/split"));
    if (s.contains("soft")) {
      soft.row(i) =
          vec_from_json(s["soft"], sat + "/soft", 2 * k).transpose();
      ++soft_count;
    }
    if (s.contains("tags")) {
      const json& tj = s["tags"];
      if (!tj.is_array()) fail(sat + "/tags", "expected an array");
      for (std::size_t t = 0; t < tj.size(); ++t) {
        tags[static_cast<std::size_t>(i)].push_back(
            as_str(tj[t], sat + "/tags/" + std::to_string(t)));
      }
      any_tags = true;
    }
  }
  if (soft_count != 0 && soft_count != n) {
    fail("/samples", "soft labels present for only some samples");
  }
  if (soft_count == n) ds.soft = std::move(soft);
  if (any_tags) ds.tags = std::move(tags);
  ds.validate();
  return ds;
}

// ---- shape model ----

void save_shape_model(const ShapeModel& m, const std::filesystem::path& path) {
  require_finite(m.basis, "shape model basis");
  json root;
  root["version"] = 1;
  root["k"] = m.num_points;
  root["mean"] = vec_to_json(m.mean);
  root["eigenvalues"] = vec_to_json(m.eigenvalues);
  json basis = json::array();  // column-major: one array per eigenvector
  for (Eigen::Index c = 0; c < m.basis.cols(); ++c) {
    basis.push_back(vec_to_json(m.basis.col(c)));
  }
  root["basis"] = std::move(basis);
  dump_to_file(root, path);
}

ShapeModel load_shape_model(const std::filesystem::path& path) {
  const json root = parse_file(path);
  no_extras(root, {"version", "k", "mean", "eigenvalues", "basis"}, "");
  check_version(root, "");
  ShapeModel m;
  m.num_points = as_int(need(root, "k", ""), "/k");
  if (m.num_points < 1) fail("/k", "must be >= 1");
  m.mean = vec_from_json(need(root, "mean", ""), "/mean", 2 * m.num_points);
  m.eigenvalues = vec_from_json(need(root, "eigenvalues", ""), "/eigenvalues");
  const json& basis = need(root, "basis", "");
  if (!basis.is_array()) fail("/basis", "expected an array of eigenvectors");
  if (static_cast<Eigen::Index>(basis.size()) != m.eigenvalues.size()) {
    fail("/basis", "eigenvector count does not match eigenvalues");
  }
  m.basis.resize(2 * m.num_points, m.eigenvalues.size());
  for (std::size_t c = 0; c < basis.size(); ++c) {
    m.basis.col(static_cast<Eigen::Index>(c)) = vec_from_json(
        basis[c], "/basis/" + std::to_string(c), 2 * m.num_points);
  }
  for (Eigen::Index i = 0; i < m.eigenvalues.size(); ++i) {
    if (!(m.eigenvalues[i] >= 0.0)) {
      fail("/eigenvalues/" + std::to_string(i), "must be >= 0");
    }
    if (i > 0 && m.eigenvalues[i] > m.eigenvalues[i - 1]) {
      fail("/eigenvalues/" + std::to_string(i), "must be sorted descending");
    }
  }
  return m;
}

// ---- checkpoints ----

namespace {

json spec_to_json(const MlpSpec& spec) {
  json j;
  j["input_dim"] = spec.input_dim;
  j["hidden"] = spec.hidden;
  j["output_dim"] = spec.output_dim;
  json acts = json::array();
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    acts.push_back(activation_name(spec.activation_at(static_cast<int>(i))));
  }
  j["activations"] = std::move(acts);
  j["seed"] = spec.seed;
  return j;
}

MlpSpec spec_from_json(const json& j, const std::string& at) {
  no_extras(j, {"input_dim", "hidden", "output_dim", "activations", "seed"},
            at);
  MlpSpec spec;
  spec.input_dim = as_int(need(j, "input_dim", at), at + "/input_dim");
  spec.output_dim = as_int(need(j, "output_dim", at), at + "/output_dim");
  const json& hidden = need(j, "hidden", at);
  if (!hidden.is_array()) fail(at + "/hidden", "expected an array");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    spec.hidden.push_back(
        as_int(hidden[i], at + "/hidden/" + std::to_string(i)));
  }
  const json& acts = need(j, "activations", at);
  if (!acts.is_array()) fail(at + "/activations", "expected an array");
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const std::string aat = at + "/activations/" + std::to_string(i);
    try {
      spec.activations.push_back(activation_from_name(as_str(acts[i], aat)));
    } catch (const DataError& e) {
      fail(aat, e.what());
    }
  }
  spec.seed = as_u64(need(j, "seed", at), at + "/seed");
  spec.validate();
  return spec;
}

json layer_mats_to_json(const std::vector<Eigen::MatrixXd>& mats) {
  json out = json::array();
  for (const auto& m : mats) {
    // row-major flat
    json flat = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    }
    out.push_back(std::move(flat));
  }
  return out;
}

std::vector<Eigen::MatrixXd> layer_mats_from_json(
    const json& j, const std::vector<std::pair<int, int>>& dims,
    const std::string& at) {
  if (!j.is_array() || j.size() != dims.size()) {
    fail(at, "expected one entry per layer");
  }
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto [rows, cols] = dims[l];
    const std::string lat = at + "/" + std::to_string(l);
    const Eigen::VectorXd flat =
        vec_from_json(j[l], lat, static_cast<Eigen::Index>(rows) * cols);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = flat[r * cols + c];
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Eigen::VectorXd> layer_vecs_from_json(const json& j,
                                                  const std::vector<int>& dims,
                                                  const std::string& at) {
  if (!j.is_array() || j.size() != dims.size()) {
    fail(at, "expected one entry per layer");
  }
  std::vector<Eigen::VectorXd> out;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    out.push_back(vec_from_json(j[l], at + "/" + std::to_string(l), dims[l]));
  }
  return out;
}

json layer_vecs_to_json(const std::vector<Eigen::VectorXd>& vecs) {
  json out = json::array();
  for (const auto& v : vecs) out.push_back(vec_to_json(v));
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  for (const auto& w : c.params.weights) require_finite(w, "checkpoint");
  json root;
  root["version"] = 1;
  root["spec"] = spec_to_json(c.spec);
  json params;
  params["weights"] = layer_mats_to_json(c.params.weights);
  params["biases"] = layer_vecs_to_json(c.params.biases);
  root["params"] = std::move(params);
  if (c.has_adam) {
    json a;
    a["learning_rate"] = c.adam.learning_rate;
    a["beta1"] = c.adam.beta1;
    a["beta2"] = c.adam.beta2;
    a["decay"] = c.adam.decay;
    a["epsilon"] = c.adam.epsilon;
    a["step"] = c.adam.step;
    a["m_w"] = layer_mats_to_json(c.adam.m_w);
    a["v_w"] = layer_mats_to_json(c.adam.v_w);
    a["m_b"] = layer_vecs_to_json(c.adam.m_b);
    a["v_b"] = layer_vecs_to_json(c.adam.v_b);
    root["adam_state"] = std::move(a);
  }
  dump_to_file(root, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json root = parse_file(path);
  no_extras(root, {"version", "spec", "params", "adam_state"}, "");
  check_version(root, "");
  Checkpoint c;
  c.spec = spec_from_json(need(root, "spec", ""), "/spec");
  const auto dims = c.spec.layer_dims();
  std::vector<int> bias_dims;
  for (auto [out, in] : dims) bias_dims.push_back(out);

  const json& params = need(root, "params", "");
  no_extras(params, {"weights", "biases"}, "/params");
  c.params.weights = layer_mats_from_json(need(params, "weights", "/params"),
                                          dims, "/params/weights");
  c.params.biases = layer_vecs_from_json(need(params, "biases", "/params"),
                                         bias_dims, "/params/biases");

  if (root.contains("adam_state")) {
    const json& a = root["adam_state"];
    const std::string at = "/adam_state";
    no_extras(a,
              {"learning_rate", "beta1", "beta2", "decay", "epsilon", "step",
               "m_w", "v_w", "m_b", "v_b"},
              at);
    c.has_adam = true;
    c.adam.learning_rate =
        as_double(need(a, "learning_rate", at), at + "/learning_rate");
    c.adam.beta1 = as_double(need(a, "beta1", at), at + "/beta1");
    c.adam.beta2 = as_double(need(a, "beta2", at), at + "/beta2");
    c.adam.decay = as_double(need(a, "decay", at), at + "/decay");
    c.adam.epsilon = as_double(need(a, "epsilon", at), at + "/epsilon");
    c.adam.step = as_int(need(a, "step", at), at + "/step");
    c.adam.m_w = layer_mats_from_json(need(a, "m_w", at), dims, at + "/m_w");
    c.adam.v_w = layer_mats_from_json(need(a, "v_w", at), dims, at + "/v_w");
    c.adam.m_b =
        layer_vecs_from_json(need(a, "m_b", at), bias_dims, at + "/m_b");
    c.adam.v_b =
        layer_vecs_from_json(need(a, "v_b", at), bias_dims, at + "/v_b");
  }
  return c;
}

// ---- teacher predictions ----

void save_teacher_predictions(const TeacherPredictions& p, int num_points,
                              const std::filesystem::path& path) {
  require_finite(p.tough, "teacher predictions");
  require_finite(p.tolerant, "teacher predictions");
  json root;
  root["version"] = 1;
  root["k"] = num_points;
  root["tough"] = mat_rows_to_json(p.tough);
  root["tolerant"] = mat_rows_to_json(p.tolerant);
  dump_to_file(root, path);
}

TeacherPredictions load_teacher_predictions(
    const std::filesystem::path& path) {
  const json root = parse_file(path);
  no_extras(root, {"version", "k", "tough", "tolerant"}, "");
  check_version(root, "");
  const int k = as_int(need(root, "k", ""), "/k");
  if (k < 1) fail("/k", "must be >= 1");
  TeacherPredictions p;
  p.tough = mat_rows_from_json(need(root, "tough", ""), "/tough", 2 * k);
  p.tolerant =
      mat_rows_from_json(need(root, "tolerant", ""), "/tolerant", 2 * k);
  if (p.tough.rows() != p.tolerant.rows()) {
    fail("/tolerant", "row count differs from /tough");
  }
  return p;
}

// ---- eval report ----

void save_eval_report(const EvalReport& r, const std::filesystem::path& path) {
  json root;
  root["version"] = 1;
  root["n_images"] = r.n_images;
  root["nme_percent"] = r.nme_percent;
  root["fr_percent"] = r.fr_percent;
  root["auc"] = r.auc;
  json ced = json::array();
  for (const CedPoint& p : r.ced) {
    ced.push_back(json::array({p.threshold, p.fraction}));
  }
  root["ced"] = std::move(ced);
  dump_to_file(root, path);
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  const json root = parse_file(path);
  no_extras(root, {"version", "n_images", "nme_percent", "fr_percent", "auc",
                   "ced"},
            "");
  check_version(root, "");
  EvalReport r;
  r.n_images = as_int(need(root, "n_images", ""), "/n_images");
  r.nme_percent = as_double(need(root, "nme_percent", ""), "/nme_percent");
  r.fr_percent = as_double(need(root, "fr_percent", ""), "/fr_percent");
  r.auc = as_double(need(root, "auc", ""), "/auc");
  const json& ced = need(root, "ced", "");
  if (!ced.is_array()) fail("/ced", "expected an array");
  for (std::size_t i = 0; i < ced.size(); ++i) {
    const std::string at = "/ced/" + std::to_string(i);
    const json& p = ced[i];
    if (!p.is_array() || p.size() != 2) fail(at, "expected [threshold, fraction]");
    r.ced.push_back({as_double(p[0], at + "/0"), as_double(p[1], at + "/1")});
  }
  return r;
}

// ---- run configuration ----
// Config files are partial: absent fields keep their compiled-in defaults,
// unknown fields are rejected. "version" itself is optional.

namespace {

void check_optional_version(const json& obj, const std::string& at) {
  if (obj.contains("version")) check_version(obj, at);
}

// Applies `fn` to obj[key] when present.
template <typename Fn>
void maybe(const json& obj, const char* key, const std::string& at, Fn fn) {
  auto it = obj.find(key);
  if (it != obj.end()) fn(*it, at + "/" + key);
}

std::vector<int> int_list_from_json(const json& j, const std::string& at) {
  if (!j.is_array()) fail(at, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_int(j[i], at + "/" + std::to_string(i)));
  }
  return out;
}

json network_to_json(const MlpSpec& spec) {
  json j;
  j["hidden"] = spec.hidden;
  json acts = json::array();
  for (Activation a : spec.activations) acts.push_back(activation_name(a));
  j["activations"] = std::move(acts);
  return j;
}

void network_from_json(const json& j, const std::string& at, MlpSpec* spec) {
  no_extras(j, {"hidden", "activations"}, at);
  maybe(j, "hidden", at, [&](const json& v, const std::string& va) {
    spec->hidden = int_list_from_json(v, va);
  });
  maybe(j, "activations", at, [&](const json& v, const std::string& va) {
    if (!v.is_array()) fail(va, "expected an array of activation names");
    spec->activations.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string va_i = va + "/" + std::to_string(i);
      try {
        spec->activations.push_back(activation_from_name(as_str(v[i], va_i)));
      } catch (const DataError& e) {
        fail(va_i, e.what());
      }
    }
  });
}

json norm_pair_to_json(const NormPair& p) {
  json j;
  if (p.midpoint) {
    j["left"] = json::array({p.left_pair[0], p.left_pair[1]});
    j["right"] = json::array({p.right_pair[0], p.right_pair[1]});
  } else {
    j["left"] = p.left;
    j["right"] = p.right;
  }
  return j;
}

NormPair norm_pair_from_json(const json& j, const std::string& at) {
  no_extras(j, {"left", "right"}, at);
  const json& l = need(j, "left", at);
  const json& r = need(j, "right", at);
  if (l.is_array() != r.is_array()) {
    fail(at, "left and right must both be indices or both be pairs");
  }
  if (l.is_array()) {
    const auto lp = int_list_from_json(l, at + "/left");
    const auto rp = int_list_from_json(r, at + "/right");
    if (lp.size() != 2 || rp.size() != 2) {
      fail(at, "midpoint pairs need exactly two indices each");
    }
    return NormPair::midpoints(lp[0], lp[1], rp[0], rp[1]);
  }
  return NormPair::indices(as_int(l, at + "/left"), as_int(r, at + "/right"));
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  json root;
  root["version"] = 1;
  root["seed"] = cfg.seed;
  root["teacher_epochs"] = cfg.teacher_epochs;
  root["student_epochs"] = cfg.student_epochs;
  root["teacher_batch"] = cfg.teacher_batch;
  root["student_batch"] = cfg.student_batch;
  root["m_tilde"] = cfg.m_tilde;
  root["rank_epsilon"] = cfg.rank_epsilon;
  root["teacher_forward_on_augmented"] = cfg.teacher_forward_on_augmented;
  json loss;
  loss["sigma_tough"] = cfg.loss.sigma_tough;
  loss["sigma_tolerant"] = cfg.loss.sigma_tolerant;
  loss["phi"] = cfg.loss.phi;
  loss["c"] = cfg.loss.c;
  loss["main_threshold"] = cfg.loss.main_threshold;
  root["loss"] = std::move(loss);
  root["teacher"] = network_to_json(cfg.teacher_spec);
  root["student"] = network_to_json(cfg.student_spec);
  json opt;
  opt["learning_rate"] = cfg.optimizer.learning_rate;
  opt["beta1"] = cfg.optimizer.beta1;
  opt["beta2"] = cfg.optimizer.beta2;
  opt["decay"] = cfg.optimizer.decay;
  opt["epsilon"] = cfg.optimizer.epsilon;
  root["optimizer"] = std::move(opt);
  json aug;
  aug["enabled"] = cfg.augment.enabled;
  aug["rotation_max_degrees"] = cfg.augment.rotation_max_degrees;
  aug["flip_probability"] = cfg.augment.flip_probability;
  aug["flip_permutation"] = cfg.augment.flip_permutation;
  root["augment"] = std::move(aug);
  if (cfg.norm_pair) root["norm_pair"] = norm_pair_to_json(*cfg.norm_pair);
  return root;
}

bool as_bool(const json& j, const std::string& at) {
  if (!j.is_boolean()) fail(at, "expected a boolean");
  return j.get<bool>();
}

ExperimentConfig experiment_config_from_json(const json& root) {
  no_extras(root,
            {"version", "seed", "teacher_epochs", "student_epochs",
             "teacher_batch", "student_batch", "m_tilde", "rank_epsilon",
             "teacher_forward_on_augmented", "loss", "teacher", "student",
             "optimizer", "augment", "norm_pair"},
            "");
  check_optional_version(root, "");
  ExperimentConfig cfg;
  maybe(root, "seed", "", [&](const json& v, const std::string& at) {
    cfg.seed = as_u64(v, at);
  });
  maybe(root, "teacher_epochs", "", [&](const json& v, const std::string& at) {
    cfg.teacher_epochs = as_int(v, at);
  });
  maybe(root, "student_epochs", "", [&](const json& v, const std::string& at) {
    cfg.student_epochs = as_int(v, at);
  });
  maybe(root, "teacher_batch", "", [&](const json& v, const std::string& at) {
    cfg.teacher_batch = as_int(v, at);
  });
  maybe(root, "student_batch", "", [&](const json& v, const std::string& at) {
    cfg.student_batch = as_int(v, at);
  });
  maybe(root, "m_tilde", "", [&](const json& v, const std::string& at) {
    cfg.m_tilde = as_double(v, at);
  });
  maybe(root, "rank_epsilon", "", [&](const json& v, const std::string& at) {
    cfg.rank_epsilon = as_double(v, at);
  });
  maybe(root, "teacher_forward_on_augmented", "",
        [&](const json& v, const std::string& at) {
          cfg.teacher_forward_on_augmented = as_bool(v, at);
        });
  maybe(root, "loss", "", [&](const json& v, const std::string& at) {
    no_extras(v, {"sigma_tough", "sigma_tolerant", "phi", "c",
                  "main_threshold"},
              at);
    maybe(v, "sigma_tough", at, [&](const json& x, const std::string& xa) {
      cfg.loss.sigma_tough = as_double(x, xa);
    });
    maybe(v, "sigma_tolerant", at, [&](const json& x, const std::string& xa) {
      cfg.loss.sigma_tolerant = as_double(x, xa);
    });
    maybe(v, "phi", at, [&](const json& x, const std::string& xa) {
      cfg.loss.phi = as_double(x, xa);
    });
    maybe(v, "c", at, [&](const json& x, const std::string& xa) {
      cfg.loss.c = as_double(x, xa);
    });
    maybe(v, "main_threshold", at, [&](const json& x, const std::string& xa) {
      cfg.loss.main_threshold = as_double(x, xa);
    });
  });
  maybe(root, "teacher", "", [&](const json& v, const std::string& at) {
    network_from_json(v, at, &cfg.teacher_spec);
  });
  maybe(root, "student", "", [&](const json& v, const std::string& at) {
    network_from_json(v, at, &cfg.student_spec);
  });
  maybe(root, "optimizer", "", [&](const json& v, const std::string& at) {
    no_extras(v, {"learning_rate", "beta1", "beta2", "decay", "epsilon"}, at);
    maybe(v, "learning_rate", at, [&](const json& x, const std::string& xa) {
      cfg.optimizer.learning_rate = as_double(x, xa);
    });
    maybe(v, "beta1", at, [&](const json& x, const std::string& xa) {
      cfg.optimizer.beta1 = as_double(x, xa);
    });
    maybe(v, "beta2", at, [&](const json& x, const std::string& xa) {
      cfg.optimizer.beta2 = as_double(x, xa);
    });
    maybe(v, "decay", at, [&](const json& x, const std::string& xa) {
      cfg.optimizer.decay = as_double(x, xa);
    });
    maybe(v, "epsilon", at, [&](const json& x, const std::string& xa) {
      cfg.optimizer.epsilon = as_double(x, xa);
    });
  });
  maybe(root, "augment", "", [&](const json& v, const std::string& at) {
    no_extras(v, {"enabled", "rotation_max_degrees", "flip_probability",
                  "flip_permutation"},
              at);
    maybe(v, "enabled", at, [&](const json& x, const std::string& xa) {
      cfg.augment.enabled = as_bool(x, xa);
    });
    maybe(v, "rotation_max_degrees", at,
          [&](const json& x, const std::string& xa) {
            cfg.augment.rotation_max_degrees = as_double(x, xa);
          });
    maybe(v, "flip_probability", at,
          [&](const json& x, const std::string& xa) {
            cfg.augment.flip_probability = as_double(x, xa);
          });
    maybe(v, "flip_permutation", at,
          [&](const json& x, const std::string& xa) {
            cfg.augment.flip_permutation = int_list_from_json(x, xa);
          });
  });
  maybe(root, "norm_pair", "", [&](const json& v, const std::string& at) {
    cfg.norm_pair = norm_pair_from_json(v, at);
  });
  return cfg;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_config_from_json(parse_file(path));
}

void save_experiment_config(const ExperimentConfig& cfg,
                            const std::filesystem::path& path) {
  dump_to_file(experiment_config_to_json(cfg), path);
}

std::string experiment_config_string(const ExperimentConfig& cfg) {
  return experiment_config_to_json(cfg).dump(2);
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  const json root = parse_file(path);
  no_extras(root,
            {"version", "num_points", "n_train", "n_test", "latent_modes",
             "noise_sigma", "occlusion_fraction", "seed"},
            "");
  check_optional_version(root, "");
  SyntheticSpec spec;
  maybe(root, "num_points", "", [&](const json& v, const std::string& at) {
    spec.num_points = as_int(v, at);
  });
  maybe(root, "n_train", "", [&](const json& v, const std::string& at) {
    spec.n_train = as_int(v, at);
  });
  maybe(root, "n_test", "", [&](const json& v, const std::string& at) {
    spec.n_test = as_int(v, at);
  });
  maybe(root, "latent_modes", "", [&](const json& v, const std::string& at) {
    spec.latent_modes = as_int(v, at);
  });
  maybe(root, "noise_sigma", "", [&](const json& v, const std::string& at) {
    spec.noise_sigma = as_double(v, at);
  });
  maybe(root, "occlusion_fraction", "",
        [&](const json& v, const std::string& at) {
          spec.occlusion_fraction = as_double(v, at);
        });
  maybe(root, "seed", "", [&](const json& v, const std::string& at) {
    spec.seed = as_u64(v, at);
  });
  return spec;
}

void save_synthetic_spec(const SyntheticSpec& spec,
                         const std::filesystem::path& path) {
  json root;
  root["version"] = 1;
  root["num_points"] = spec.num_points;
  root["n_train"] = spec.n_train;
  root["n_test"] = spec.n_test;
  root["latent_modes"] = spec.latent_modes;
  root["noise_sigma"] = spec.noise_sigma;
  root["occlusion_fraction"] = spec.occlusion_fraction;
  root["seed"] = spec.seed;
  dump_to_file(root, path);
}

// ---- CSV ----

void write_ablation_csv(const AblationReport& r,
                        const std::filesystem::path& path) {
  std::string out = "variant,seed,nme,fr,auc\n";
  for (const AblationRow& row : r.rows) {
    out += row.variant + "," + std::to_string(row.seed) + "," +
           format_double(row.nme) + "," + format_double(row.fr) + "," +
           format_double(row.auc) + "\n";
  }
  write_text_file(path, out);
}

void write_ced_csv(const std::vector<CedPoint>& ced,
                   const std::filesystem::path& path) {
  std::string out = "threshold,fraction\n";
  for (const CedPoint& p : ced) {
    out += format_double(p.threshold) + "," + format_double(p.fraction) + "\n";
  }
  write_text_file(path, out);
}

namespace {

std::vector<std::string> csv_lines(const std::string& text,
                                   const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw DataError(path.string() + ": empty CSV");
  return lines;
}

}  // namespace

std::vector<CedPoint> read_ced_csv(const std::filesystem::path& path) {
  const auto lines = csv_lines(read_text_file(path), path);
  if (lines[0] != "threshold,fraction") {
    throw DataError(path.string() + ": expected header \"threshold,fraction\"");
  }
  std::vector<CedPoint> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = path.string() + " line " + std::to_string(i + 1);
    const std::size_t comma = lines[i].find(',');
    if (comma == std::string::npos) throw DataError(where + ": missing comma");
    out.push_back({parse_double_token(lines[i].substr(0, comma), where),
                   parse_double_token(lines[i].substr(comma + 1), where)});
  }
  if (out.empty()) throw DataError(path.string() + ": no CED rows");
  return out;
}

void write_errors_csv(const std::vector<double>& errors,
                      const std::filesystem::path& path) {
  std::string out = "error\n";
  for (double e : errors) out += format_double(e) + "\n";
  write_text_file(path, out);
}

std::vector<double> read_errors_csv(const std::filesystem::path& path) {
  const auto lines = csv_lines(read_text_file(path), path);
  if (lines[0] != "error") {
    throw DataError(path.string() + ": expected header \"error\"");
  }
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    out.push_back(parse_double_token(
        lines[i], path.string() + " line " + std::to_string(i + 1)));
  }
  if (out.empty()) throw DataError(path.string() + ": no error rows");
  return out;
}

// ---- SVG ----

void write_ced_svg(const std::vector<std::vector<CedPoint>>& curves,
                   const std::vector<std::string>& labels,
                   const std::filesystem::path& path) {
  if (curves.empty()) throw DataError("svg: no curves");
  if (labels.size() != curves.size()) {
    throw DataError("svg: need one label per curve");
  }
  double max_t = 0.0;
  for (const auto& c : curves) {
    if (c.size() < 2) throw DataError("svg: curve with fewer than 2 points");
    max_t = std::max(max_t, c.back().threshold);
  }
  if (!(max_t > 0.0)) throw DataError("svg: zero threshold range");

  const double w = 800.0, h = 600.0;
  const double left = 80.0, right = 30.0, top = 30.0, bottom = 70.0;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double t) { return left + pw * (t / max_t); };
  auto py = [&](double f) { return h - bottom - ph * f; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
      "viewBox=\"0 0 800 600\">\n"
      "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
  // axes
  svg += "<line x1=\"" + format_double(left) + "\" y1=\"" +
         format_double(h - bottom) + "\" x2=\"" + format_double(w - right) +
         "\" y2=\"" + format_double(h - bottom) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + format_double(left) + "\" y1=\"" +
         format_double(top) + "\" x2=\"" + format_double(left) + "\" y2=\"" +
         format_double(h - bottom) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  // ticks
  for (int i = 0; i <= 5; ++i) {
    const double t = max_t * i / 5.0;
    const double x = px(t);
    svg += "<line x1=\"" + format_double(x) + "\" y1=\"" +
           format_double(h - bottom) + "\" x2=\"" + format_double(x) +
           "\" y2=\"" + format_double(h - bottom + 6.0) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(x) + "\" y=\"" +
           format_double(h - bottom + 22.0) +
           "\" font-size=\"13\" text-anchor=\"middle\">" + format_double(t) +
           "</text>\n";
    const double f = i / 5.0;
    const double y = py(f);
    svg += "<line x1=\"" + format_double(left - 6.0) + "\" y1=\"" +
           format_double(y) + "\" x2=\"" + format_double(left) + "\" y2=\"" +
           format_double(y) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(left - 10.0) + "\" y=\"" +
           format_double(y + 4.0) +
           "\" font-size=\"13\" text-anchor=\"end\">" + format_double(f) +
           "</text>\n";
  }
  // axis labels
  svg += "<text x=\"" + format_double(left + pw / 2.0) + "\" y=\"" +
         format_double(h - 20.0) +
         "\" font-size=\"15\" text-anchor=\"middle\">NME threshold</text>\n";
  svg += "<text x=\"22\" y=\"" + format_double(top + ph / 2.0) +
         "\" font-size=\"15\" text-anchor=\"middle\" transform=\"rotate(-90 "
         "22 " +
         format_double(top + ph / 2.0) +
         ")\">fraction of images</text>\n";
  // curves + legend
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % 6];
    std::string pts;
    for (const CedPoint& p : curves[c]) {
      pts += format_double(px(p.threshold)) + "," +
             format_double(py(p.fraction)) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    const double ly = top + 20.0 + 18.0 * static_cast<double>(c);
    svg += "<line x1=\"" + format_double(left + 12.0) + "\" y1=\"" +
           format_double(ly - 4.0) + "\" x2=\"" + format_double(left + 40.0) +
           "\" y2=\"" + format_double(ly - 4.0) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + format_double(left + 46.0) + "\" y=\"" +
           format_double(ly) + "\" font-size=\"13\">" + labels[c] +
           "</text>\n";
  }
  svg += "</svg>\n";
  write_text_file(path, svg);
}

}  // namespace kd::io
