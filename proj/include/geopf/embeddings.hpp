#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopf/filter.hpp"
#include "geopf/grid.hpp"
#include "geopf/rng.hpp"

namespace geopf {

// Fixed-dimension unit vector (L2 norm 1 within 1e-6).
class EmbeddingVector {
 public:
  // Scales arbitrary finite input to unit length.
  static EmbeddingVector normalized(std::vector<float> values);
  // Accepts values that are already unit length; bytes are kept as-is so
  // store round trips stay exact.
  static EmbeddingVector from_unit(std::vector<float> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }

 private:
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}
  std::vector<float> values_;
};

// Cosine similarity of unit vectors: their inner product, in [-1, 1].
double similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Pre-pose intermediate representation, one per ground image per step.
struct BaseEmbedding {
  std::vector<float> values;
};

// Maps (base embedding, particle pose) to a pose-aware unit embedding.
// The pose enters as (dx/(s/2), dy/(s/2), sin psi, cos psi) appended to the
// base, followed by a fixed linear map. The map is either identity or a
// seeded random matrix; it is not learned.
//
// prepare()/apply_prepared() split out the base-dependent part of the matrix
// product so one base can be shared across all particles of a step; the
// arithmetic is identical to apply() term for term.
class ProjectionHead {
 public:
  static ProjectionHead identity(std::size_t base_dim, double half_extent);
  static ProjectionHead seeded(std::size_t base_dim, std::size_t out_dim, std::uint64_t seed,
                               double half_extent);

  std::size_t base_dim() const { return base_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  double half_extent() const { return half_extent_; }

  struct Prepared {
    std::vector<double> base_proj;  // one partial row sum per output row
  };

  Prepared prepare(const BaseEmbedding& base) const;
  EmbeddingVector apply(const BaseEmbedding& base, const PoseTriplet& pose) const;
  EmbeddingVector apply_prepared(const Prepared& prep, const PoseTriplet& pose) const;

  // Call accounting: apply_count() advances once per pose-append (one per
  // scored particle), prepare_count() once per shared base projection.
  std::uint64_t apply_count() const { return apply_calls_; }
  std::uint64_t prepare_count() const { return prepare_calls_; }
  void reset_counts() const { apply_calls_ = 0; prepare_calls_ = 0; }

 private:
  ProjectionHead(std::size_t base_dim, std::size_t out_dim, double half_extent,
                 std::vector<float> weights);

  std::size_t base_dim_;
  std::size_t out_dim_;
  double half_extent_;
  std::vector<float> weights_;  // out_dim x (base_dim + 4), row-major
  mutable std::uint64_t apply_calls_ = 0;
  mutable std::uint64_t prepare_calls_ = 0;
};

// Composes a base embedding with a particle pose through the head: the pose
// is encoded as (dx/half_extent, dy/half_extent, sin psi, cos psi), appended
// to the base, projected, and unit-normalized.
EmbeddingVector pose_aware_embedding(const BaseEmbedding& base, const PoseTriplet& pose,
                                     const ProjectionHead& head);

class StoreFormatError : public std::runtime_error {
 public:
  enum class Kind { io, malformed_header, dimension_mismatch, count_mismatch, non_finite, not_unit };

  StoreFormatError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind(kind) {}

  Kind kind;
};

// Satellite embedding database: one unit vector per tile of a bound grid.
class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t rows, std::size_t cols, std::size_t dim,
                 std::vector<EmbeddingVector> table);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t dim() const { return dim_; }
  const EmbeddingVector& at(TileIndex t) const { return table_[t.row * cols_ + t.col]; }

  bool bound_to(const TileGrid& grid) const {
    return rows_ == grid.rows() && cols_ == grid.cols();
  }

  // Seeded random unit vectors; handy for benchmarks and store tooling.
  static EmbeddingStore random(std::size_t rows, std::size_t cols, std::size_t dim,
                               std::uint64_t seed);

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::size_t dim_;
  std::vector<EmbeddingVector> table_;
};

// File format: header line "GEOEMB1 rows cols dim\n", then rows*cols records
// in row-major order, each dim little-endian 32-bit floats.
EmbeddingStore load_store(const std::filesystem::path& path, const TileGrid& grid);
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);

// Per-particle similarity between the pose-aware ground embedding and each
// particle's tile embedding. Out-of-bounds particles get the
// no-observation sentinel. Consumes one base embedding regardless of N.
std::vector<double> pseudo_similarity(std::span<const Particle> particles,
                                      const BaseEmbedding& base, const EmbeddingStore& store,
                                      const TileGrid& grid, double heading,
                                      const ProjectionHead& head);

enum class AblationMode { pose_aware, heading_only, orientation_blind };

struct ConfuserPose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  bool operator==(const ConfuserPose&) const = default;
};

// Deterministic stand-in for the trained similarity network. Scores peak at
// the true pose, fall off with a Gaussian position kernel of scale rho and a
// heading kernel of sensitivity kappa, and optionally carry confuser poses
// and dead (masked) tiles.
class SyntheticWorld {
 public:
  struct Params {
    double kernel_scale = 90.0;       // rho, meters (> 0)
    double heading_sensitivity = 4.0; // kappa (>= 0)
    double observation_noise = 0.0;   // sigma_obs (>= 0)
    double floor_score = 0.0;         // similarity assigned inside masked tiles
    bool operator==(const Params&) const = default;
  };

  SyntheticWorld(Params params, std::size_t grid_rows, std::size_t grid_cols);

  const Params& params() const { return params_; }
  std::size_t grid_rows() const { return rows_; }
  std::size_t grid_cols() const { return cols_; }

  void add_confuser(ConfuserPose pose) { confusers_.push_back(pose); }
  const std::vector<ConfuserPose>& confusers() const { return confusers_; }

  void mask_tile(TileIndex t);
  void mask_rect(std::size_t row0, std::size_t col0, std::size_t row1, std::size_t col1);
  bool masked(TileIndex t) const { return mask_[t.row * cols_ + t.col] != 0; }

  std::uint64_t observe_count() const { return observe_calls_; }
  void reset_observe_count() const { observe_calls_ = 0; }

 private:
  friend class SyntheticObservation;
  Params params_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> mask_;
  std::vector<ConfuserPose> confusers_;
  mutable std::uint64_t observe_calls_ = 0;
};

// One step's observation: a per-particle scoring function plus the base
// embedding surrogate that stands for the once-per-step network call.
class SyntheticObservation {
 public:
  // heading is the shared compass input; particle_index selects the
  // per-particle noise substream, so evaluation order does not matter.
  double score(double x, double y, double heading, std::size_t particle_index) const;

  const BaseEmbedding& base_surrogate() const { return base_; }

 private:
  friend SyntheticObservation synth_observe(const SyntheticWorld&, const TileGrid&, WorldPose,
                                            AblationMode, RngStream&);
  const SyntheticWorld* world_ = nullptr;
  const TileGrid* grid_ = nullptr;
  WorldPose true_pose_;
  AblationMode mode_ = AblationMode::pose_aware;
  std::uint64_t noise_seed_ = 0;
  BaseEmbedding base_;
};

SyntheticObservation synth_observe(const SyntheticWorld& world, const TileGrid& grid,
                                   WorldPose true_pose, AblationMode mode, RngStream& rng);

}  // namespace geopf
