#include "relieve/io.hpp"

#include <Eigen/Geometry>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "relieve/error.hpp"

namespace relieve {
namespace {

using json = nlohmann::ordered_json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw io_error("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io_error("cannot create directory " + dir.string());
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string indexed(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem, i, ext);
  return buf;
}

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(char((bits >> (8 * b)) & 0xffu));
}

float get_f32(const unsigned char* p, bool little) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    const unsigned shift = little ? 8 * b : 8 * (3 - b);
    bits |= std::uint32_t(p[b]) << shift;
  }
  return std::bit_cast<float>(bits);
}

json parse_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw validation_error(path.string() + ": malformed JSON: " + e.what());
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw validation_error(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw validation_error(where + ": field '" + key + "' has the wrong type");
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json intrinsics_json(const CameraIntrinsics& k) {
  return {{"width", k.width}, {"height", k.height}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

CameraIntrinsics intrinsics_from(const json& v, const std::string& where) {
  CameraIntrinsics k;
  k.width = field<int>(v, "width", where);
  k.height = field<int>(v, "height", where);
  k.fx = field<double>(v, "fx", where);
  k.fy = field<double>(v, "fy", where);
  k.cx = field<double>(v, "cx", where);
  k.cy = field<double>(v, "cy", where);
  if (!k.valid()) throw validation_error(where + ": invalid intrinsics");
  return k;
}

json pose_json(const PoseSE3& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(p.rotation(i, j));
  return {{"rotation", r}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

PoseSE3 pose_from(const json& v, const std::string& where) {
  const auto r = field<std::vector<double>>(v, "rotation", where);
  const auto t = field<std::vector<double>>(v, "translation", where);
  if (r.size() != 9 || t.size() != 3) throw validation_error(where + ": pose needs 9 rotation and 3 translation values");
  PoseSE3 p;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p.rotation(i, j) = r[std::size_t(3 * i + j)];
  p.translation = Vec3(t[0], t[1], t[2]);
  if (!p.is_valid(1e-9)) throw validation_error(where + ": rotation is not orthonormal");
  return p;
}

void require_positive_depth(const DepthMap& d, const fs::path& file) {
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!std::isfinite(d.values[i]) || !(d.values[i] > 0))
      throw validation_error(file.string() + ": non-positive or non-finite depth at pixel index " + std::to_string(i));
}

std::string relative_name(const json& v, const char* key, const std::string& where) {
  const auto name = field<std::string>(v, key, where);
  const fs::path p(name);
  if (name.empty() || p.is_absolute() || p.has_parent_path())
    throw validation_error(where + ": '" + key + "' must be a plain file name");
  return name;
}

}  // namespace

// ---- PFM --------------------------------------------------------------------

void write_pfm(const fs::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw domain_error("PFM supports 1 or 3 channels");
  if (r.width < 1 || r.height < 1 || r.data.size() != std::size_t(r.width) * r.height * r.channels)
    throw domain_error("PFM raster shape does not match its data");
  std::string out = (r.channels == 1 ? "Pf\n" : "PF\n") + std::to_string(r.width) + " " + std::to_string(r.height) +
                    "\n-1.0\n";
  out.reserve(out.size() + r.data.size() * 4);
  const std::size_t row = std::size_t(r.width) * r.channels;
  for (int y = r.height - 1; y >= 0; --y)
    for (std::size_t k = 0; k < row; ++k) put_f32_le(out, r.data[std::size_t(y) * row + k]);
  write_file(path, out);
}

Raster read_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw validation_error(path.string() + ": truncated PFM header");
    return bytes.substr(start, pos - start);
  };
  Raster r;
  const std::string magic = token();
  if (magic == "Pf")
    r.channels = 1;
  else if (magic == "PF")
    r.channels = 3;
  else
    throw validation_error(path.string() + ": not a PFM file");
  double scale = 0.0;
  try {
    r.width = std::stoi(token());
    r.height = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::logic_error&) {
    throw validation_error(path.string() + ": malformed PFM header");
  }
  if (r.width < 1 || r.height < 1 || scale == 0.0 || !std::isfinite(scale))
    throw validation_error(path.string() + ": invalid PFM dimensions or scale");
  ++pos;  // single whitespace byte ends the header
  const std::size_t count = std::size_t(r.width) * r.height * r.channels;
  if (bytes.size() < pos || bytes.size() - pos != count * 4)
    throw validation_error(path.string() + ": PFM payload size does not match the header");
  const bool little = scale < 0;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  r.data.resize(count);
  const std::size_t row = std::size_t(r.width) * r.channels;
  for (int y = r.height - 1; y >= 0; --y)
    for (std::size_t k = 0; k < row; ++k, p += 4) r.data[std::size_t(y) * row + k] = get_f32(p, little);
  return r;
}

void write_depth_pfm(const fs::path& path, const DepthMap& map) {
  Raster r{map.width, map.height, 1, {}};
  r.data.reserve(map.size());
  for (double v : map.values) r.data.push_back(float(v));
  write_pfm(path, r);
}

DepthMap read_depth_pfm(const fs::path& path) {
  const Raster r = read_pfm(path);
  if (r.channels != 1) throw validation_error(path.string() + ": expected a single-channel PFM");
  DepthMap d(r.width, r.height);
  for (std::size_t i = 0; i < r.data.size(); ++i) d.values[i] = r.data[i];
  return d;
}

void write_points_pfm(const fs::path& path, const PointMap& points, int width, int height) {
  if (points.size() != std::size_t(width) * height) throw domain_error("point map shape mismatch");
  Raster r{width, height, 3, {}};
  r.data.reserve(points.size() * 3);
  for (const Vec3& p : points)
    for (int c = 0; c < 3; ++c) r.data.push_back(float(p[c]));
  write_pfm(path, r);
}

PointMap read_points_pfm(const fs::path& path, int& width, int& height) {
  const Raster r = read_pfm(path);
  if (r.channels != 3) throw validation_error(path.string() + ": expected a three-channel PFM");
  width = r.width;
  height = r.height;
  PointMap pts(std::size_t(r.width) * r.height);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(r.data[3 * i], r.data[3 * i + 1], r.data[3 * i + 2]);
  return pts;
}

// ---- Matches ----------------------------------------------------------------

void write_matches_csv(const fs::path& path, const std::vector<Correspondence>& pairs) {
  std::string out = "ui_x,ui_y,uj_x,uj_y\n";
  for (const Correspondence& c : pairs)
    out += fmt17(c.ui.x) + "," + fmt17(c.ui.y) + "," + fmt17(c.uj.x) + "," + fmt17(c.uj.y) + "\n";
  write_file(path, out);
}

std::vector<Correspondence> read_matches_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw validation_error(path.string() + ": empty correspondence file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ui_x,ui_y,uj_x,uj_y") throw validation_error(path.string() + ": expected header ui_x,ui_y,uj_x,uj_y");
  std::vector<Correspondence> pairs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v[4];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 4; ++k) {
      const auto [next, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc() || !std::isfinite(v[k]))
        throw validation_error(path.string() + ": bad number on row " + std::to_string(row));
      p = next;
      if (k < 3) {
        if (p == end || *p != ',') throw validation_error(path.string() + ": expected 4 columns on row " + std::to_string(row));
        ++p;
      }
    }
    if (p != end) throw validation_error(path.string() + ": trailing data on row " + std::to_string(row));
    pairs.push_back({{v[0], v[1]}, {v[2], v[3]}});
  }
  return pairs;
}

// ---- Problem ----------------------------------------------------------------

void save_problem(const Problem& problem, const fs::path& dir) {
  ensure_dir(dir);
  json views = json::array();
  for (std::size_t v = 0; v < problem.views.size(); ++v) {
    const std::string name = indexed("depth", v, "pfm");
    write_depth_pfm(dir / name, problem.views[v].pseudo_depth);
    json entry = intrinsics_json(problem.views[v].intrinsics);
    entry["depth"] = name;
    views.push_back(entry);
  }
  json corrs = json::array();
  for (std::size_t c = 0; c < problem.correspondences.size(); ++c) {
    const CorrespondenceSet& set = problem.correspondences[c];
    char name[64];
    std::snprintf(name, sizeof name, "matches_%03zu_%03d_%03d.csv", c, set.view_i, set.view_j);
    write_matches_csv(dir / name, set.pairs);
    corrs.push_back({{"i", set.view_i}, {"j", set.view_j}, {"file", name}, {"partial", set.partial}});
  }
  const json manifest = {{"version", kProblemVersion},
                         {"views", views},
                         {"correspondences", corrs},
                         {"hyperparams", {{"alpha", problem.hyper.alpha}, {"lambda", problem.hyper.lambda}}}};
  write_file(dir / "problem.json", dump(manifest));
}

Problem load_problem(const fs::path& dir) {
  const fs::path manifest_path = dir / "problem.json";
  if (!fs::exists(manifest_path)) throw io_error("missing manifest " + manifest_path.string());
  const json m = parse_json(manifest_path);
  const std::string where = manifest_path.string();
  const auto version = field<std::string>(m, "version", where);
  if (version != kProblemVersion) throw validation_error(where + ": unsupported version '" + version + "'");

  Problem problem;
  const json views = m.contains("views") ? m.at("views") : json();
  if (!views.is_array()) throw validation_error(where + ": 'views' must be an array");
  for (std::size_t v = 0; v < views.size(); ++v) {
    const std::string vw = where + ": views[" + std::to_string(v) + "]";
    View view;
    view.intrinsics = intrinsics_from(views[v], vw);
    const fs::path depth_path = dir / relative_name(views[v], "depth", vw);
    if (!fs::exists(depth_path)) throw io_error("missing depth file " + depth_path.string());
    view.pseudo_depth = read_depth_pfm(depth_path);
    if (view.pseudo_depth.width != view.intrinsics.width || view.pseudo_depth.height != view.intrinsics.height)
      throw validation_error(depth_path.string() + ": size " + std::to_string(view.pseudo_depth.width) + "x" +
                             std::to_string(view.pseudo_depth.height) + " does not match the manifest");
    require_positive_depth(view.pseudo_depth, depth_path);
    problem.views.push_back(std::move(view));
  }

  if (m.contains("correspondences")) {
    const json& corrs = m.at("correspondences");
    if (!corrs.is_array()) throw validation_error(where + ": 'correspondences' must be an array");
    for (std::size_t c = 0; c < corrs.size(); ++c) {
      const std::string cw = where + ": correspondences[" + std::to_string(c) + "]";
      CorrespondenceSet set;
      set.view_i = field<int>(corrs[c], "i", cw);
      set.view_j = field<int>(corrs[c], "j", cw);
      if (corrs[c].contains("partial")) set.partial = field<bool>(corrs[c], "partial", cw);
      const int n = int(problem.views.size());
      if (set.view_i < 0 || set.view_i >= n || set.view_j < 0 || set.view_j >= n || set.view_i == set.view_j)
        throw validation_error(cw + ": invalid view indices");
      const fs::path file = dir / relative_name(corrs[c], "file", cw);
      if (!fs::exists(file)) throw io_error("missing correspondence file " + file.string());
      set.pairs = read_matches_csv(file);
      const CameraIntrinsics& ki = problem.views[std::size_t(set.view_i)].intrinsics;
      const CameraIntrinsics& kj = problem.views[std::size_t(set.view_j)].intrinsics;
      for (std::size_t k = 0; k < set.pairs.size(); ++k)
        if (!pixel_in_image(set.pairs[k].ui, ki) || !pixel_in_image(set.pairs[k].uj, kj))
          throw validation_error(file.string() + ": match " + std::to_string(k) + " lies outside the image");
      problem.correspondences.push_back(std::move(set));
    }
  }

  if (m.contains("hyperparams")) {
    const json& hp = m.at("hyperparams");
    const std::string hw = where + ": hyperparams";
    if (hp.contains("alpha")) problem.hyper.alpha = field<double>(hp, "alpha", hw);
    if (hp.contains("lambda")) problem.hyper.lambda = field<double>(hp, "lambda", hw);
  }

  try {
    problem.validate();
    problem.require_connected();
  } catch (const Error& e) {
    throw Error(e.kind(), where + ": " + e.what());
  }
  return problem;
}

// ---- Trajectory and ground truth ---------------------------------------------

void write_trajectory(const fs::path& path, const std::vector<PoseSE3>& poses) {
  std::string out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Eigen::Quaterniond q(poses[i].rotation);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1.0;
    const Vec3& t = poses[i].translation;
    out += std::to_string(i);
    for (double x : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) out += " " + fmt17(x);
    out += "\n";
  }
  write_file(path, out);
}

std::vector<PoseSE3> read_trajectory(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<PoseSE3> poses;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    double idx;
    double v[7];
    if (!(row >> idx)) throw validation_error(path.string() + ": malformed trajectory row");
    for (double& x : v)
      if (!(row >> x)) throw validation_error(path.string() + ": trajectory rows need 8 columns");
    if (idx != double(poses.size())) throw validation_error(path.string() + ": trajectory indices must be 0..N-1");
    Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
    if (std::abs(q.norm() - 1.0) > 1e-6) throw validation_error(path.string() + ": quaternion is not unit norm");
    q.normalize();
    poses.push_back({q.toRotationMatrix(), Vec3(v[0], v[1], v[2])});
  }
  return poses;
}

void save_ground_truth(const GroundTruthScene& scene, const fs::path& dir) {
  ensure_dir(dir);
  json views = json::array();
  for (std::size_t v = 0; v < scene.view_count(); ++v) {
    const std::string name = indexed("gt_depth", v, "pfm");
    write_depth_pfm(dir / name, scene.depths[v]);
    json entry = intrinsics_json(scene.intrinsics[v]);
    entry["pose"] = pose_json(scene.poses[v]);
    entry["depth"] = name;
    views.push_back(entry);
  }
  const json doc = {{"version", kGroundTruthVersion}, {"scene_scale", scene.scene_scale}, {"views", views}};
  write_file(dir / "ground_truth.json", dump(doc));
  write_trajectory(dir / "trajectory.txt", scene.poses);
}

GroundTruthScene load_ground_truth(const fs::path& dir_in) {
  fs::path dir = dir_in;
  if (!fs::exists(dir / "ground_truth.json") && fs::exists(dir / "ground_truth" / "ground_truth.json"))
    dir = dir / "ground_truth";
  const fs::path path = dir / "ground_truth.json";
  if (!fs::exists(path)) throw io_error("missing ground truth " + path.string());
  const json doc = parse_json(path);
  const std::string where = path.string();
  if (field<std::string>(doc, "version", where) != kGroundTruthVersion)
    throw validation_error(where + ": unsupported version");
  GroundTruthScene scene;
  scene.scene_scale = field<double>(doc, "scene_scale", where);
  const json& views = doc.at("views");
  if (!views.is_array() || views.size() < 2) throw validation_error(where + ": need at least two views");
  for (std::size_t v = 0; v < views.size(); ++v) {
    const std::string vw = where + ": views[" + std::to_string(v) + "]";
    scene.intrinsics.push_back(intrinsics_from(views[v], vw));
    if (!views[v].contains("pose")) throw validation_error(vw + ": missing field 'pose'");
    scene.poses.push_back(pose_from(views[v].at("pose"), vw));
    const fs::path depth_path = dir / relative_name(views[v], "depth", vw);
    DepthMap d = read_depth_pfm(depth_path);
    if (d.width != scene.intrinsics.back().width || d.height != scene.intrinsics.back().height)
      throw validation_error(depth_path.string() + ": size does not match the manifest");
    require_positive_depth(d, depth_path);
    scene.depths.push_back(std::move(d));
  }
  return scene;
}

// ---- Solution bundle ---------------------------------------------------------

void save_solution(const Solution& s, const OptimConfig& config, const fs::path& dir) {
  const std::size_t n = s.poses.size();
  if (s.depths.size() != n || s.confidences.size() != n || s.point_maps.size() != n || s.state.views.size() != n)
    throw domain_error("save_solution: inconsistent view counts");
  ensure_dir(dir);
  write_trajectory(dir / "trajectory.txt", s.poses);
  for (std::size_t v = 0; v < n; ++v) {
    write_depth_pfm(dir / indexed("depth", v, "pfm"), s.depths[v]);
    write_depth_pfm(dir / indexed("confidence", v, "pfm"), s.confidences[v]);
    write_points_pfm(dir / indexed("points", v, "pfm"), s.point_maps[v], s.depths[v].width, s.depths[v].height);
  }

  std::string hist = "iteration,total,depth,registration\n";
  for (std::size_t k = 0; k < s.loss_history.size(); ++k) {
    const LossRecord& r = s.loss_history[k];
    hist += std::to_string(k) + "," + fmt17(r.total) + "," + fmt17(r.depth) + "," + fmt17(r.registration) + "\n";
  }
  write_file(dir / "loss_history.csv", hist);

  json views = json::array();
  for (const ViewParams& p : s.state.views) {
    json entry = pose_json(p.pose);
    entry["log_scale"] = p.log_scale;
    entry["residual"] = p.residual;
    entry["width"] = p.confidence.width;
    entry["height"] = p.confidence.height;
    entry["logits"] = p.confidence.logits;
    views.push_back(entry);
  }
  write_file(dir / "state.json", dump({{"grid_size", s.state.grid_size}, {"views", views}}));

  const json cfg = {{"max_iters", config.max_iters},
                    {"grid_size", config.grid_size},
                    {"lr_pose", config.lr_pose},
                    {"lr_log_scale", config.lr_log_scale},
                    {"lr_residual", config.lr_residual},
                    {"lr_confidence", config.lr_confidence},
                    {"beta1", config.beta1},
                    {"beta2", config.beta2},
                    {"adam_eps", config.adam_eps},
                    {"final_lr_fraction", config.final_lr_fraction},
                    {"convergence_tol", config.convergence_tol},
                    {"convergence_window", config.convergence_window},
                    {"seed", config.seed},
                    {"threads", config.threads}};
  const json run = {{"version", kSolutionVersion},
                    {"views", n},
                    {"iterations", s.iterations},
                    {"converged", s.converged},
                    {"diverged", s.diverged},
                    {"final_loss", s.loss_history.empty() ? 0.0 : s.loss_history.back().total},
                    {"config", cfg}};
  write_file(dir / "run.json", dump(run));
}

SolutionBundle load_solution(const fs::path& dir) {
  for (const char* name : {"run.json", "state.json", "trajectory.txt", "loss_history.csv"})
    if (!fs::exists(dir / name)) throw io_error("incomplete solution bundle: missing " + (dir / name).string());
  SolutionBundle b;
  Solution& s = b.solution;

  const fs::path run_path = dir / "run.json";
  const json run = parse_json(run_path);
  const std::string rw = run_path.string();
  if (field<std::string>(run, "version", rw) != kSolutionVersion) throw validation_error(rw + ": unsupported version");
  const auto n = field<std::size_t>(run, "views", rw);
  s.iterations = field<int>(run, "iterations", rw);
  s.converged = field<bool>(run, "converged", rw);
  s.diverged = field<bool>(run, "diverged", rw);
  if (!run.contains("config")) throw validation_error(rw + ": missing field 'config'");
  const json& c = run.at("config");
  const std::string cw = rw + ": config";
  b.config.max_iters = field<int>(c, "max_iters", cw);
  b.config.grid_size = field<int>(c, "grid_size", cw);
  b.config.lr_pose = field<double>(c, "lr_pose", cw);
  b.config.lr_log_scale = field<double>(c, "lr_log_scale", cw);
  b.config.lr_residual = field<double>(c, "lr_residual", cw);
  b.config.lr_confidence = field<double>(c, "lr_confidence", cw);
  b.config.beta1 = field<double>(c, "beta1", cw);
  b.config.beta2 = field<double>(c, "beta2", cw);
  b.config.adam_eps = field<double>(c, "adam_eps", cw);
  b.config.final_lr_fraction = field<double>(c, "final_lr_fraction", cw);
  b.config.convergence_tol = field<double>(c, "convergence_tol", cw);
  b.config.convergence_window = field<int>(c, "convergence_window", cw);
  b.config.seed = field<std::uint64_t>(c, "seed", cw);
  b.config.threads = field<int>(c, "threads", cw);

  const fs::path state_path = dir / "state.json";
  const json st = parse_json(state_path);
  const std::string sw = state_path.string();
  s.state.grid_size = field<int>(st, "grid_size", sw);
  const json& views = st.at("views");
  if (!views.is_array() || views.size() != n) throw validation_error(sw + ": view count differs from run.json");
  const std::size_t grid_cells = std::size_t(s.state.grid_size) * s.state.grid_size;
  for (std::size_t v = 0; v < n; ++v) {
    const std::string vw = sw + ": views[" + std::to_string(v) + "]";
    ViewParams p;
    p.pose = pose_from(views[v], vw);
    p.log_scale = field<double>(views[v], "log_scale", vw);
    p.residual = field<std::vector<double>>(views[v], "residual", vw);
    p.confidence.width = field<int>(views[v], "width", vw);
    p.confidence.height = field<int>(views[v], "height", vw);
    p.confidence.logits = field<std::vector<double>>(views[v], "logits", vw);
    if (p.residual.size() != grid_cells || p.confidence.logits.size() != std::size_t(p.confidence.width) * p.confidence.height)
      throw validation_error(vw + ": array sizes do not match the declared shapes");
    s.poses.push_back(p.pose);
    s.state.views.push_back(std::move(p));
  }

  if (read_trajectory(dir / "trajectory.txt").size() != n)
    throw validation_error((dir / "trajectory.txt").string() + ": row count differs from the view count");

  for (std::size_t v = 0; v < n; ++v) {
    for (const char* stem : {"depth", "confidence", "points"})
      if (!fs::exists(dir / indexed(stem, v, "pfm")))
        throw io_error("incomplete solution bundle: missing " + (dir / indexed(stem, v, "pfm")).string());
    s.depths.push_back(read_depth_pfm(dir / indexed("depth", v, "pfm")));
    // W is rebuilt from the stored logits: float32 would round values near 2 to exactly 2.
    const DepthMap stored_conf = read_depth_pfm(dir / indexed("confidence", v, "pfm"));
    DepthMap conf(stored_conf.width, stored_conf.height);
    conf.values = s.state.views[v].confidence.weights();
    s.confidences.push_back(std::move(conf));
    int w = 0;
    int h = 0;
    s.point_maps.push_back(read_points_pfm(dir / indexed("points", v, "pfm"), w, h));
    const ViewParams& p = s.state.views[v];
    if (s.depths[v].width != p.confidence.width || s.depths[v].height != p.confidence.height ||
        stored_conf.width != w || stored_conf.height != h || w != p.confidence.width || h != p.confidence.height)
      throw validation_error(dir.string() + ": raster sizes of view " + std::to_string(v) + " disagree");
  }

  std::istringstream hist(read_file(dir / "loss_history.csv"));
  std::string line;
  std::getline(hist, line);
  if (line != "iteration,total,depth,registration")
    throw validation_error((dir / "loss_history.csv").string() + ": unexpected header");
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    LossRecord r;
    long long k = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf", &k, &r.total, &r.depth, &r.registration) != 4)
      throw validation_error((dir / "loss_history.csv").string() + ": malformed row");
    s.loss_history.push_back(r);
  }
  return b;
}

// ---- PLY ---------------------------------------------------------------------

std::size_t export_ply(const std::vector<PointMap>& points, const std::vector<DepthMap>& confidences,
                       const fs::path& path, double confidence_floor) {
  if (points.size() != confidences.size()) throw domain_error("export_ply: view count mismatch");
  std::string body;
  std::size_t count = 0;
  for (std::size_t v = 0; v < points.size(); ++v) {
    if (points[v].size() != confidences[v].size()) throw domain_error("export_ply: point and confidence maps differ in size");
    for (std::size_t i = 0; i < points[v].size(); ++i) {
      if (!(confidences[v].values[i] >= confidence_floor)) continue;
      for (int c = 0; c < 3; ++c) put_f32_le(body, float(points[v][i][c]));
      ++count;
    }
  }
  const std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(count) +
                             "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  write_file(path, header + body);
  return count;
}

}  // namespace relieve
