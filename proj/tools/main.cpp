#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geopf/embeddings.hpp"
#include "geopf/io.hpp"
#include "geopf/losses.hpp"
#include "geopf/metrics.hpp"
#include "geopf/rng.hpp"
#include "geopf/sim.hpp"

namespace {

namespace fs = std::filesystem;
using namespace geopf;

void apply_seed_override(ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed) {
  if (seed) cfg.seed = *seed;
}

void ensure_out_dir(const std::optional<std::string>& out) {
  if (out) fs::create_directories(*out);
}

std::string summaries_csv(const std::vector<ArmSummaries>& arms) {
  std::string text =
      "label,seed,steps,final_error_m,average_error_m,final_std_m,convergence_step,"
      "resample_count\n";
  char buf[256];
  for (const ArmSummaries& arm : arms) {
    for (const RunSummary& s : arm.per_seed) {
      std::string conv = s.convergence_step ? std::to_string(*s.convergence_step) : "";
      std::snprintf(buf, sizeof(buf), "%s,%" PRIu64 ",%zu,%.17g,%.17g,%.17g,%s,%zu\n",
                    arm.label.c_str(), s.seed, s.step_count, s.final_error, s.average_error,
                    s.final_std, conv.c_str(), s.resample_count);
      text += buf;
    }
  }
  return text;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::optional<std::string>& out) {
  ExperimentConfig cfg = load_config(config_path);
  apply_seed_override(cfg, seed);
  std::cout << serialize_config(cfg);

  const MetricsLog log = run_experiment(cfg);
  const RunSummary s = summarize(log, cfg.convergence_radius, "run", cfg.seed);
  std::printf("steps=%zu final_error_m=%.3f average_error_m=%.3f final_std_m=%.3f "
              "resamples=%zu convergence_step=%s\n",
              s.step_count, s.final_error, s.average_error, s.final_std, s.resample_count,
              s.convergence_step ? std::to_string(*s.convergence_step).c_str() : "-");

  if (out) {
    ensure_out_dir(out);
    write_metrics(log, fs::path(*out) / "metrics.csv");
    write_text_atomic(fs::path(*out) / "config.json", serialize_config(cfg));
    std::cout << "wrote " << (fs::path(*out) / "metrics.csv").string() << "\n";
  }
  return 0;
}

int run_arms(const ExperimentConfig& base, const std::vector<std::string>& arm_names,
             std::size_t seeds, const std::optional<std::string>& out, bool arms_are_strategies) {
  std::cout << serialize_config(base);

  std::vector<ArmSummaries> arms;
  for (const std::string& name : arm_names) {
    ArmSummaries arm;
    arm.label = name;
    for (std::size_t i = 0; i < seeds; ++i) {
      ExperimentConfig cfg = base;
      cfg.seed = base.seed + i;
      if (arms_are_strategies) {
        if (name == "systematic") {
          cfg.strategy = ResampleStrategy::systematic;
        } else if (name == "multinomial") {
          cfg.strategy = ResampleStrategy::multinomial;
        } else if (name == "every_step_multinomial") {
          cfg.strategy = ResampleStrategy::every_step_multinomial;
        } else {
          throw std::invalid_argument("unknown strategy arm '" + name + "'");
        }
      } else {
        if (name == "pose_aware") {
          cfg.ablation = AblationMode::pose_aware;
        } else if (name == "heading_only") {
          cfg.ablation = AblationMode::heading_only;
        } else if (name == "orientation_blind") {
          cfg.ablation = AblationMode::orientation_blind;
        } else {
          throw std::invalid_argument("unknown ablation arm '" + name + "'");
        }
      }
      const MetricsLog log = run_experiment(cfg);
      arm.per_seed.push_back(summarize(log, cfg.convergence_radius, name, cfg.seed));
    }
    std::cout << "arm " << name << ": " << seeds << " seeds done\n";
    arms.push_back(std::move(arm));
  }

  const Comparison cmp = compare(arms);
  const std::string table = render_comparison(cmp);
  std::cout << table;
  if (out) {
    ensure_out_dir(out);
    write_text_atomic(fs::path(*out) / "comparison.txt", table);
    write_text_atomic(fs::path(*out) / "summaries.csv", summaries_csv(arms));
    std::cout << "wrote " << (fs::path(*out) / "summaries.csv").string() << "\n";
  }
  return 0;
}

int cmd_augment(const std::string& input, const std::string& output, std::uint64_t seed,
                double scale) {
  const RgbImage img = read_ppm(input);
  RngStream rng(seed);
  const RgbImage shifted = fancy_pca_augment(img, scale, rng);
  write_ppm(shifted, output);
  std::cout << "wrote " << output << " (" << shifted.width << "x" << shifted.height << ")\n";
  return 0;
}

int cmd_loss_check(std::size_t points, std::uint64_t seed) {
  // Central finite differences against the analytic gradients, on seeded
  // random inputs away from the domain edges.
  const double h = 1e-5;
  const double tol = 1e-6;
  const double alpha = 10.0;
  double worst = 0.0;
  RngStream rng(seed);
  TrinomialParams params;

  const auto rel_err = [](double got, double want) {
    const double denom = std::max(std::abs(want), 1e-12);
    return std::abs(got - want) / denom;
  };

  for (std::size_t i = 0; i < points; ++i) {
    const double d_pos = 0.1 + 2.0 * rng.next_double();
    const double d_neg = 0.1 + 2.0 * rng.next_double();
    const TripletGrad g = triplet_loss_grad(d_pos, d_neg, alpha);
    const double fd_pos = (triplet_loss(d_pos + h, d_neg, alpha) -
                           triplet_loss(d_pos - h, d_neg, alpha)) /
                          (2.0 * h);
    const double fd_neg = (triplet_loss(d_pos, d_neg + h, alpha) -
                           triplet_loss(d_pos, d_neg - h, alpha)) /
                          (2.0 * h);
    worst = std::max(worst, rel_err(g.d_pos, fd_pos));
    worst = std::max(worst, rel_err(g.d_neg, fd_neg));

    const double s_p = 2.0 * rng.next_double() - 1.0;
    const double s_n = 2.0 * rng.next_double() - 1.0;
    const double s_semi = 2.0 * rng.next_double() - 1.0;
    const TrinomialGrad tg = trinomial_loss_grad(s_p, s_n, s_semi, params);
    const double fd_p = (trinomial_loss(s_p + h, s_n, s_semi, params) -
                         trinomial_loss(s_p - h, s_n, s_semi, params)) /
                        (2.0 * h);
    const double fd_n = (trinomial_loss(s_p, s_n + h, s_semi, params) -
                         trinomial_loss(s_p, s_n - h, s_semi, params)) /
                        (2.0 * h);
    const double fd_s = (trinomial_loss(s_p, s_n, s_semi + h, params) -
                         trinomial_loss(s_p, s_n, s_semi - h, params)) /
                        (2.0 * h);
    worst = std::max(worst, rel_err(tg.s_p, fd_p));
    worst = std::max(worst, rel_err(tg.s_n, fd_n));
    worst = std::max(worst, rel_err(tg.s_semi, fd_s));
  }

  std::printf("checked %zu points, worst gradient relative error %.3e (tolerance %.0e)\n",
              points, worst, tol);
  if (worst >= tol) {
    std::cerr << "gradient check failed\n";
    return 2;
  }
  return 0;
}

int cmd_validate_store(const std::string& store_path, std::optional<std::size_t> rows,
                       std::optional<std::size_t> cols, double spacing) {
  // Pull rows/cols from the header so a grid can be built, unless the caller
  // pinned them; load_store then runs the full battery of checks.
  std::size_t grid_rows = 0, grid_cols = 0;
  if (rows && cols) {
    grid_rows = *rows;
    grid_cols = *cols;
  } else {
    std::ifstream in(store_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding store " + store_path);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    hs >> magic >> grid_rows >> grid_cols;
    if (magic != "GEOEMB1" || grid_rows == 0 || grid_cols == 0) {
      throw StoreFormatError(StoreFormatError::Kind::malformed_header,
                             "embedding store header must be 'GEOEMB1 rows cols dim', got '" +
                                 header + "'");
    }
  }
  const TileGrid grid({0.0, 0.0}, spacing, grid_rows, grid_cols);
  const EmbeddingStore store = load_store(store_path, grid);
  std::printf("ok: %zu x %zu tiles, dimension %zu, all vectors finite and unit\n", store.rows(),
              store.cols(), store.dim());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle-filter geolocalization testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_dir;

  CLI::App* run = app.add_subcommand("run", "Run one experiment from a config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed_override, "Override the config's master seed");
  run->add_option("--out", out_dir, "Output directory for metrics.csv and config.json");

  std::size_t seeds = 20;
  std::vector<std::string> arm_list;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "Seed-matched comparison of pose handling modes");
  ablate->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ablate->add_option("--seed", seed_override, "Override the config's base seed");
  ablate->add_option("--seeds", seeds, "Seeds per arm (consecutive from the base seed)");
  ablate->add_option("--arms", arm_list, "Comma-separated arm list")->delimiter(',');
  ablate->add_option("--out", out_dir, "Output directory for comparison and summaries");

  CLI::App* bench = app.add_subcommand(
      "resample-bench", "Seed-matched comparison of resampling strategies");
  bench->add_option("--config", config_path, "Experiment config (JSON)")->required();
  bench->add_option("--seed", seed_override, "Override the config's base seed");
  bench->add_option("--seeds", seeds, "Seeds per arm (consecutive from the base seed)");
  bench->add_option("--arms", arm_list, "Comma-separated strategy list")->delimiter(',');
  bench->add_option("--out", out_dir, "Output directory for comparison and summaries");

  std::string input_path, output_path;
  std::uint64_t tool_seed = 0;
  double pca_scale = 1.0;
  CLI::App* augment = app.add_subcommand("augment", "Apply color-PCA augmentation to a PPM image");
  augment->add_option("--input", input_path, "Input image (binary PPM)")->required();
  augment->add_option("--output", output_path, "Output image (binary PPM)")->required();
  augment->add_option("--seed", tool_seed, "Draw seed");
  augment->add_option("--scale", pca_scale, "Shift scale multiplier");

  std::size_t check_points = 100;
  CLI::App* loss_check = app.add_subcommand(
      "loss-check", "Verify analytic loss gradients against finite differences");
  loss_check->add_option("--points", check_points, "Number of seeded evaluation points");
  loss_check->add_option("--seed", tool_seed, "Evaluation point seed");

  std::string store_path;
  std::optional<std::size_t> store_rows, store_cols;
  double store_spacing = 60.0;
  CLI::App* validate_store = app.add_subcommand(
      "validate-store", "Check an embedding store file for format and content errors");
  validate_store->add_option("--store", store_path, "Embedding store file")->required();
  validate_store->add_option("--rows", store_rows, "Expected grid rows");
  validate_store->add_option("--cols", store_cols, "Expected grid cols");
  validate_store->add_option("--spacing", store_spacing, "Tile spacing for the check grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, seed_override, out_dir);
    if (ablate->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_seed_override(cfg, seed_override);
      if (arm_list.empty()) arm_list = {"pose_aware", "heading_only", "orientation_blind"};
      return run_arms(cfg, arm_list, seeds, out_dir, false);
    }
    if (bench->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_seed_override(cfg, seed_override);
      if (arm_list.empty()) arm_list = {"systematic", "multinomial", "every_step_multinomial"};
      return run_arms(cfg, arm_list, seeds, out_dir, true);
    }
    if (augment->parsed()) return cmd_augment(input_path, output_path, tool_seed, pca_scale);
    if (loss_check->parsed()) return cmd_loss_check(check_points, tool_seed);
    if (validate_store->parsed()) {
      return cmd_validate_store(store_path, store_rows, store_cols, store_spacing);
    }
  } catch (const StoreFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind == StoreFormatError::Kind::io ? 2 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
