#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geopf/filter.hpp"
#include "geopf/losses.hpp"
#include "geopf/metrics.hpp"
#include "geopf/sim.hpp"

namespace geopf {

// Experiment configs are UTF-8 JSON documents mirroring ExperimentConfig.
// Omitted fields take the struct defaults (trajectory.start additionally
// defaults to the grid center); unknown keys are rejected by full path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Emits every field explicitly, in a fixed key order, so the printed config
// reparses to an equal value and identical configs serialize identically.
std::string serialize_config(const ExperimentConfig& config);

// One row of an ingested pose log (real-trajectory shape): ground-truth pose
// plus the odometry measured over the step into it.
struct PoseLogRecord {
  std::size_t step = 0;
  std::optional<double> timestamp;  // seconds; empty CSV field means absent
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double dpsi = 0.0;
  bool operator==(const PoseLogRecord&) const = default;
};

// CSV with header "step,timestamp,x,y,heading,dx,dy,dpsi"; steps must be
// strictly increasing. A header-only file is an empty log.
std::vector<PoseLogRecord> load_pose_log(const std::filesystem::path& path);

// Metrics CSVs round-trip exactly: doubles are written with 17 significant
// digits. Header: "step,error_m,ess,resampled,rms_dispersion_m,std_x_m,std_y_m".
void write_metrics(const MetricsLog& log, const std::filesystem::path& path);
MetricsLog load_metrics(const std::filesystem::path& path);

// Particle dump, one row per particle: "step,index,x,y,weight".
void write_particles(const ParticleSet& set, std::size_t step,
                     const std::filesystem::path& path);

// Binary PPM (P6). Bytes are scaled to [0, 1] floats on read; writes clamp
// to [0, 1] and scale to maxval 255.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

// Writes content to a sibling temp file then renames it onto path, so a
// crashed writer never leaves a partial file at the target.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace geopf
