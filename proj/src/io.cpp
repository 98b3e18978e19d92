#include "geopf/io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace geopf {

namespace {

using Json = nlohmann::ordered_json;

std::string join_path(const std::string& scope, const std::string& key) {
  return scope.empty() ? key : scope + "." + key;
}

void require_object(const Json& j, const std::string& scope) {
  if (!j.is_object()) {
    throw std::invalid_argument("config field '" + scope + "' must be an object");
  }
}

void check_keys(const Json& obj, const std::string& scope,
                std::initializer_list<std::string_view> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(),
                    [&it](std::string_view k) { return k == it.key(); });
    if (!known) {
      throw std::invalid_argument("unknown config key '" + join_path(scope, it.key()) + "'");
    }
  }
}

double read_double(const Json& obj, const std::string& scope, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number()) {
    throw std::invalid_argument("config field '" + join_path(scope, key) +
                                "' must be a number");
  }
  return v.get<double>();
}

std::size_t read_size(const Json& obj, const std::string& scope, const char* key,
                      std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw std::invalid_argument("config field '" + join_path(scope, key) +
                                "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t read_u64(const Json& obj, const std::string& scope, const char* key,
                       std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw std::invalid_argument("config field '" + join_path(scope, key) +
                                "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::string read_string(const Json& obj, const std::string& scope, const char* key,
                        std::string fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_string()) {
    throw std::invalid_argument("config field '" + join_path(scope, key) +
                                "' must be a string");
  }
  return v.get<std::string>();
}

ResampleStrategy parse_strategy(const std::string& s, const std::string& scope) {
  if (s == "systematic") return ResampleStrategy::systematic;
  if (s == "multinomial") return ResampleStrategy::multinomial;
  if (s == "every_step_multinomial") return ResampleStrategy::every_step_multinomial;
  throw std::invalid_argument("config field '" + scope +
                              "' must be one of systematic, multinomial, "
                              "every_step_multinomial; got '" +
                              s + "'");
}

std::string strategy_name(ResampleStrategy s) {
  switch (s) {
    case ResampleStrategy::systematic: return "systematic";
    case ResampleStrategy::multinomial: return "multinomial";
    case ResampleStrategy::every_step_multinomial: return "every_step_multinomial";
  }
  return "systematic";
}

AblationMode parse_ablation(const std::string& s, const std::string& scope) {
  if (s == "pose_aware") return AblationMode::pose_aware;
  if (s == "heading_only") return AblationMode::heading_only;
  if (s == "orientation_blind") return AblationMode::orientation_blind;
  throw std::invalid_argument("config field '" + scope +
                              "' must be one of pose_aware, heading_only, "
                              "orientation_blind; got '" +
                              s + "'");
}

std::string ablation_name(AblationMode m) {
  switch (m) {
    case AblationMode::pose_aware: return "pose_aware";
    case AblationMode::heading_only: return "heading_only";
    case AblationMode::orientation_blind: return "orientation_blind";
  }
  return "pose_aware";
}

TrajectoryMode parse_traj_mode(const std::string& s, const std::string& scope) {
  if (s == "waypoints") return TrajectoryMode::waypoints;
  if (s == "random_walk") return TrajectoryMode::random_walk;
  throw std::invalid_argument("config field '" + scope +
                              "' must be one of waypoints, random_walk; got '" + s + "'");
}

GridSpec parse_grid(const Json& j) {
  require_object(j, "grid");
  check_keys(j, "grid", {"origin_x", "origin_y", "spacing", "rows", "cols"});
  GridSpec g;
  g.origin_x = read_double(j, "grid", "origin_x", g.origin_x);
  g.origin_y = read_double(j, "grid", "origin_y", g.origin_y);
  g.spacing = read_double(j, "grid", "spacing", g.spacing);
  g.rows = read_size(j, "grid", "rows", g.rows);
  g.cols = read_size(j, "grid", "cols", g.cols);
  return g;
}

WorldSpec parse_world(const Json& j) {
  require_object(j, "world");
  check_keys(j, "world",
             {"kernel_scale", "heading_sensitivity", "observation_noise", "floor_score",
              "confusers", "masks"});
  WorldSpec w;
  w.params.kernel_scale = read_double(j, "world", "kernel_scale", w.params.kernel_scale);
  w.params.heading_sensitivity =
      read_double(j, "world", "heading_sensitivity", w.params.heading_sensitivity);
  w.params.observation_noise =
      read_double(j, "world", "observation_noise", w.params.observation_noise);
  w.params.floor_score = read_double(j, "world", "floor_score", w.params.floor_score);
  if (j.contains("confusers")) {
    const Json& arr = j.at("confusers");
    if (!arr.is_array()) {
      throw std::invalid_argument("config field 'world.confusers' must be an array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string scope = "world.confusers[" + std::to_string(i) + "]";
      require_object(arr[i], scope);
      check_keys(arr[i], scope, {"x", "y", "psi"});
      ConfuserPose c;
      c.x = read_double(arr[i], scope, "x", 0.0);
      c.y = read_double(arr[i], scope, "y", 0.0);
      c.psi = read_double(arr[i], scope, "psi", 0.0);
      w.confusers.push_back(c);
    }
  }
  if (j.contains("masks")) {
    const Json& arr = j.at("masks");
    if (!arr.is_array()) {
      throw std::invalid_argument("config field 'world.masks' must be an array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string scope = "world.masks[" + std::to_string(i) + "]";
      require_object(arr[i], scope);
      check_keys(arr[i], scope, {"row0", "col0", "row1", "col1"});
      MaskRect m;
      m.row0 = read_size(arr[i], scope, "row0", 0);
      m.col0 = read_size(arr[i], scope, "col0", 0);
      m.row1 = read_size(arr[i], scope, "row1", 0);
      m.col1 = read_size(arr[i], scope, "col1", 0);
      w.masks.push_back(m);
    }
  }
  return w;
}

TrajectorySpec parse_trajectory(const Json& j, bool* start_given) {
  require_object(j, "trajectory");
  check_keys(j, "trajectory",
             {"mode", "speed", "waypoints", "start", "start_heading", "turn_rate_max", "steps"});
  TrajectorySpec t;
  t.mode = parse_traj_mode(read_string(j, "trajectory", "mode", "random_walk"),
                           "trajectory.mode");
  t.speed = read_double(j, "trajectory", "speed", t.speed);
  if (j.contains("waypoints")) {
    const Json& arr = j.at("waypoints");
    if (!arr.is_array()) {
      throw std::invalid_argument("config field 'trajectory.waypoints' must be an array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string scope = "trajectory.waypoints[" + std::to_string(i) + "]";
      require_object(arr[i], scope);
      check_keys(arr[i], scope, {"x", "y"});
      t.waypoints.push_back({read_double(arr[i], scope, "x", 0.0),
                             read_double(arr[i], scope, "y", 0.0)});
    }
  }
  *start_given = j.contains("start");
  if (*start_given) {
    const Json& s = j.at("start");
    require_object(s, "trajectory.start");
    check_keys(s, "trajectory.start", {"x", "y"});
    t.start = {read_double(s, "trajectory.start", "x", 0.0),
               read_double(s, "trajectory.start", "y", 0.0)};
  }
  t.start_heading = read_double(j, "trajectory", "start_heading", t.start_heading);
  t.turn_rate_max = read_double(j, "trajectory", "turn_rate_max", t.turn_rate_max);
  t.steps = read_size(j, "trajectory", "steps", t.steps);
  return t;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  require_object(root, "config");
  check_keys(root, "",
             {"grid", "world", "trajectory", "particle_count", "init_offset_x", "init_offset_y",
              "init_sigma", "odometry_noise_frac", "heading_noise_frac", "measurement",
              "strategy", "ess_threshold_frac", "ablation", "seed", "convergence_radius"});

  ExperimentConfig cfg;
  bool start_given = false;
  if (root.contains("grid")) cfg.grid = parse_grid(root.at("grid"));
  if (root.contains("world")) cfg.world = parse_world(root.at("world"));
  if (root.contains("trajectory")) {
    cfg.trajectory = parse_trajectory(root.at("trajectory"), &start_given);
  }
  cfg.particle_count = read_size(root, "", "particle_count", cfg.particle_count);
  cfg.init_offset_x = read_double(root, "", "init_offset_x", cfg.init_offset_x);
  cfg.init_offset_y = read_double(root, "", "init_offset_y", cfg.init_offset_y);
  cfg.init_sigma = read_double(root, "", "init_sigma", cfg.init_sigma);
  cfg.odometry_noise_frac =
      read_double(root, "", "odometry_noise_frac", cfg.odometry_noise_frac);
  cfg.heading_noise_frac = read_double(root, "", "heading_noise_frac", cfg.heading_noise_frac);
  if (root.contains("measurement")) {
    const Json& m = root.at("measurement");
    require_object(m, "measurement");
    check_keys(m, "measurement", {"mu", "sigma", "floor"});
    cfg.measurement.mu = read_double(m, "measurement", "mu", cfg.measurement.mu);
    cfg.measurement.sigma = read_double(m, "measurement", "sigma", cfg.measurement.sigma);
    cfg.measurement.floor = read_double(m, "measurement", "floor", cfg.measurement.floor);
  }
  cfg.strategy = parse_strategy(read_string(root, "", "strategy", strategy_name(cfg.strategy)),
                                "strategy");
  cfg.ess_threshold_frac = read_double(root, "", "ess_threshold_frac", cfg.ess_threshold_frac);
  cfg.ablation =
      parse_ablation(read_string(root, "", "ablation", ablation_name(cfg.ablation)), "ablation");
  cfg.seed = read_u64(root, "", "seed", cfg.seed);
  cfg.convergence_radius = read_double(root, "", "convergence_radius", cfg.convergence_radius);

  // A random walk with no explicit start begins at the grid center. Skip the
  // fill-in when the grid itself is invalid so validate() reports the grid
  // field instead of a misleading trajectory error.
  if (!start_given && cfg.trajectory.mode == TrajectoryMode::random_walk) {
    try {
      const TileGrid g = cfg.grid.build();
      cfg.trajectory.start = {g.origin().x + g.width() / 2.0, g.origin().y + g.height() / 2.0};
    } catch (const std::invalid_argument&) {
    }
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& cfg) {
  Json root;
  root["grid"] = {{"origin_x", cfg.grid.origin_x},
                  {"origin_y", cfg.grid.origin_y},
                  {"spacing", cfg.grid.spacing},
                  {"rows", cfg.grid.rows},
                  {"cols", cfg.grid.cols}};
  Json world = {{"kernel_scale", cfg.world.params.kernel_scale},
                {"heading_sensitivity", cfg.world.params.heading_sensitivity},
                {"observation_noise", cfg.world.params.observation_noise},
                {"floor_score", cfg.world.params.floor_score}};
  world["confusers"] = Json::array();
  for (const ConfuserPose& c : cfg.world.confusers) {
    world["confusers"].push_back({{"x", c.x}, {"y", c.y}, {"psi", c.psi}});
  }
  world["masks"] = Json::array();
  for (const MaskRect& m : cfg.world.masks) {
    world["masks"].push_back(
        {{"row0", m.row0}, {"col0", m.col0}, {"row1", m.row1}, {"col1", m.col1}});
  }
  root["world"] = std::move(world);

  Json traj = {{"mode", cfg.trajectory.mode == TrajectoryMode::waypoints ? "waypoints"
                                                                         : "random_walk"},
               {"speed", cfg.trajectory.speed}};
  traj["waypoints"] = Json::array();
  for (const WorldPoint& w : cfg.trajectory.waypoints) {
    traj["waypoints"].push_back({{"x", w.x}, {"y", w.y}});
  }
  traj["start"] = {{"x", cfg.trajectory.start.x}, {"y", cfg.trajectory.start.y}};
  traj["start_heading"] = cfg.trajectory.start_heading;
  traj["turn_rate_max"] = cfg.trajectory.turn_rate_max;
  traj["steps"] = cfg.trajectory.steps;
  root["trajectory"] = std::move(traj);

  root["particle_count"] = cfg.particle_count;
  root["init_offset_x"] = cfg.init_offset_x;
  root["init_offset_y"] = cfg.init_offset_y;
  root["init_sigma"] = cfg.init_sigma;
  root["odometry_noise_frac"] = cfg.odometry_noise_frac;
  root["heading_noise_frac"] = cfg.heading_noise_frac;
  root["measurement"] = {{"mu", cfg.measurement.mu},
                         {"sigma", cfg.measurement.sigma},
                         {"floor", cfg.measurement.floor}};
  root["strategy"] = strategy_name(cfg.strategy);
  root["ess_threshold_frac"] = cfg.ess_threshold_frac;
  root["ablation"] = ablation_name(cfg.ablation);
  root["seed"] = cfg.seed;
  root["convergence_radius"] = cfg.convergence_radius;
  return root.dump(2) + "\n";
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

double parse_double_field(const std::string& s, const std::string& context) {
  if (s.empty()) throw std::runtime_error(context + " is empty");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw std::runtime_error(context + " is not a number: '" + s + "'");
  }
  if (!std::isfinite(v)) throw std::runtime_error(context + " must be finite");
  return v;
}

std::size_t parse_index_field(const std::string& s, const std::string& context) {
  if (s.empty() || !std::all_of(s.begin(), s.end(),
                                [](unsigned char c) { return std::isdigit(c) != 0; })) {
    throw std::runtime_error(context + " is not a nonnegative integer: '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw std::runtime_error(context + " is out of range: '" + s + "'");
  }
}

constexpr const char* kPoseLogHeader = "step,timestamp,x,y,heading,dx,dy,dpsi";
constexpr const char* kMetricsHeader =
    "step,error_m,ess,resampled,rms_dispersion_m,std_x_m,std_y_m";

}  // namespace

std::vector<PoseLogRecord> load_pose_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pose log " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kPoseLogHeader) {
    throw std::runtime_error("pose log " + path.string() + " line 1: expected header '" +
                             kPoseLogHeader + "'");
  }
  std::vector<PoseLogRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string context = "pose log " + path.string() + " line " + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (fields.size() != 8) {
      throw std::runtime_error(context + ": expected 8 fields, got " +
                               std::to_string(fields.size()));
    }
    PoseLogRecord rec;
    rec.step = parse_index_field(fields[0], context + ": step");
    if (!fields[1].empty()) {
      rec.timestamp = parse_double_field(fields[1], context + ": timestamp");
    }
    rec.x = parse_double_field(fields[2], context + ": x");
    rec.y = parse_double_field(fields[3], context + ": y");
    rec.heading = parse_double_field(fields[4], context + ": heading");
    rec.dx = parse_double_field(fields[5], context + ": dx");
    rec.dy = parse_double_field(fields[6], context + ": dy");
    rec.dpsi = parse_double_field(fields[7], context + ": dpsi");
    if (!records.empty() && rec.step <= records.back().step) {
      throw std::runtime_error(context + ": step " + std::to_string(rec.step) +
                               " does not increase past " +
                               std::to_string(records.back().step));
    }
    records.push_back(rec);
  }
  return records;
}

void write_metrics(const MetricsLog& log, const std::filesystem::path& path) {
  std::string out(kMetricsHeader);
  out.push_back('\n');
  char buf[256];
  for (const StepMetrics& m : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%d,%.17g,%.17g,%.17g\n", m.step, m.error_m,
                  m.ess, m.resampled ? 1 : 0, m.rms_dispersion_m, m.std_x_m, m.std_y_m);
    out += buf;
  }
  write_text_atomic(path, out);
}

MetricsLog load_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kMetricsHeader) {
    throw std::runtime_error("metrics " + path.string() + " line 1: expected header '" +
                             kMetricsHeader + "'");
  }
  MetricsLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string context = "metrics " + path.string() + " line " + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (fields.size() != 7) {
      throw std::runtime_error(context + ": expected 7 fields, got " +
                               std::to_string(fields.size()));
    }
    StepMetrics m;
    m.step = parse_index_field(fields[0], context + ": step");
    m.error_m = parse_double_field(fields[1], context + ": error_m");
    m.ess = parse_double_field(fields[2], context + ": ess");
    if (fields[3] == "0") {
      m.resampled = false;
    } else if (fields[3] == "1") {
      m.resampled = true;
    } else {
      throw std::runtime_error(context + ": resampled must be 0 or 1, got '" + fields[3] + "'");
    }
    m.rms_dispersion_m = parse_double_field(fields[4], context + ": rms_dispersion_m");
    m.std_x_m = parse_double_field(fields[5], context + ": std_x_m");
    m.std_y_m = parse_double_field(fields[6], context + ": std_y_m");
    log.push_back(m);
  }
  return log;
}

void write_particles(const ParticleSet& set, std::size_t step,
                     const std::filesystem::path& path) {
  std::string out("step,index,x,y,weight\n");
  char buf[192];
  for (std::size_t i = 0; i < set.particles.size(); ++i) {
    const Particle& p = set.particles[i];
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g\n", step, i, p.x, p.y, p.weight);
    out += buf;
  }
  write_text_atomic(path, out);
}

namespace {

// Reads one PPM header token, skipping whitespace and # comments.
std::string next_ppm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  const std::string magic = next_ppm_token(in);
  if (magic != "P6") {
    throw std::runtime_error("image " + path.string() + " is not binary PPM (P6)");
  }
  const auto read_int = [&in, &path](const char* what) {
    const std::string tok = next_ppm_token(in);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
          return std::isdigit(c) != 0;
        })) {
      throw std::runtime_error("image " + path.string() + ": bad " + what + " field");
    }
    return std::stoull(tok);
  };
  const std::size_t width = read_int("width");
  const std::size_t height = read_int("height");
  const std::size_t maxval = read_int("maxval");
  if (width == 0 || height == 0) {
    throw std::runtime_error("image " + path.string() + " has zero size");
  }
  if (maxval == 0 || maxval > 255) {
    throw std::runtime_error("image " + path.string() + ": only 8-bit PPM is supported");
  }
  // The single whitespace byte after maxval was already consumed by the
  // token reader; pixel data starts here.
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(3 * width * height);
  std::vector<unsigned char> raw(3 * width * height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw std::runtime_error("image " + path.string() + " is truncated");
  }
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = static_cast<float>(raw[i]) * scale;
  }
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  if (image.width == 0 || image.height == 0 ||
      image.pixels.size() != 3 * image.width * image.height) {
    throw std::invalid_argument("image to write is empty or inconsistent");
  }
  std::string out;
  char header[64];
  std::snprintf(header, sizeof(header), "P6\n%zu %zu\n255\n", image.width, image.height);
  out += header;
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(
        static_cast<unsigned char>(std::lround(clamped * 255.0f))));
  }
  write_text_atomic(path, out);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " +
                             ec.message());
  }
}

}  // namespace geopf
