#include "geopf/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace geopf {

namespace {

void require_all_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + " contains a non-finite value");
    }
  }
}

double l2_norm(std::span<const float> values) {
  double sum = 0.0;
  for (float v : values) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

}  // namespace

EmbeddingVector EmbeddingVector::normalized(std::vector<float> values) {
  if (values.empty()) throw std::invalid_argument("embedding must not be empty");
  require_all_finite(values, "embedding");
  const double norm = l2_norm(values);
  if (norm <= 0.0) throw std::invalid_argument("embedding must have nonzero norm");
  for (float& v : values) v = static_cast<float>(static_cast<double>(v) / norm);
  return EmbeddingVector(std::move(values));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values) {
  if (values.empty()) throw std::invalid_argument("embedding must not be empty");
  require_all_finite(values, "embedding");
  const double norm = l2_norm(values);
  if (std::abs(norm - 1.0) > 1e-6) {
    throw std::invalid_argument("embedding norm " + std::to_string(norm) + " is not unit");
  }
  return EmbeddingVector(std::move(values));
}

double similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("similarity requires equal dimensions, got " +
                                std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  double dot = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += static_cast<double>(av[i]) * static_cast<double>(bv[i]);
  }
  return dot;
}

ProjectionHead::ProjectionHead(std::size_t base_dim, std::size_t out_dim, double half_extent,
                               std::vector<float> weights)
    : base_dim_(base_dim), out_dim_(out_dim), half_extent_(half_extent),
      weights_(std::move(weights)) {
  if (base_dim_ == 0 || out_dim_ == 0) {
    throw std::invalid_argument("projection head dimensions must be positive");
  }
  if (!(std::isfinite(half_extent_) && half_extent_ > 0.0)) {
    throw std::invalid_argument("projection head half extent must be finite and positive");
  }
}

ProjectionHead ProjectionHead::identity(std::size_t base_dim, double half_extent) {
  const std::size_t in_dim = base_dim + 4;
  std::vector<float> w(in_dim * in_dim, 0.0f);
  for (std::size_t i = 0; i < in_dim; ++i) w[i * in_dim + i] = 1.0f;
  return ProjectionHead(base_dim, in_dim, half_extent, std::move(w));
}

ProjectionHead ProjectionHead::seeded(std::size_t base_dim, std::size_t out_dim,
                                      std::uint64_t seed, double half_extent) {
  const std::size_t in_dim = base_dim + 4;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<float> w(out_dim * in_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    for (std::size_t c = 0; c < in_dim; ++c) {
      RngStream cell = substream(seed, r, c);
      w[r * in_dim + c] = static_cast<float>(cell.next_gaussian() * scale);
    }
  }
  return ProjectionHead(base_dim, out_dim, half_extent, std::move(w));
}

ProjectionHead::Prepared ProjectionHead::prepare(const BaseEmbedding& base) const {
  if (base.values.size() != base_dim_) {
    throw std::invalid_argument("base embedding dimension " + std::to_string(base.values.size()) +
                                " does not match head base dimension " +
                                std::to_string(base_dim_));
  }
  require_all_finite(base.values, "base embedding");
  ++prepare_calls_;
  const std::size_t in_dim = base_dim_ + 4;
  Prepared prep;
  prep.base_proj.resize(out_dim_);
  for (std::size_t r = 0; r < out_dim_; ++r) {
    const float* row = weights_.data() + r * in_dim;
    double acc = 0.0;
    for (std::size_t k = 0; k < base_dim_; ++k) {
      acc += static_cast<double>(row[k]) * static_cast<double>(base.values[k]);
    }
    prep.base_proj[r] = acc;
  }
  return prep;
}

EmbeddingVector ProjectionHead::apply_prepared(const Prepared& prep,
                                               const PoseTriplet& pose) const {
  if (prep.base_proj.size() != out_dim_) {
    throw std::invalid_argument("prepared projection does not match head output dimension");
  }
  ++apply_calls_;
  const double enc[4] = {pose.dx / half_extent_, pose.dy / half_extent_, std::sin(pose.psi),
                         std::cos(pose.psi)};
  const std::size_t in_dim = base_dim_ + 4;
  std::vector<double> out(out_dim_);
  double norm_sq = 0.0;
  for (std::size_t r = 0; r < out_dim_; ++r) {
    const float* row = weights_.data() + r * in_dim + base_dim_;
    double acc = prep.base_proj[r];
    for (std::size_t j = 0; j < 4; ++j) acc += static_cast<double>(row[j]) * enc[j];
    out[r] = acc;
    norm_sq += acc * acc;
  }
  const double norm = std::sqrt(norm_sq);
  if (!(norm > 0.0)) {
    throw std::runtime_error("projection head produced a zero vector");
  }
  std::vector<float> unit(out_dim_);
  for (std::size_t r = 0; r < out_dim_; ++r) {
    unit[r] = static_cast<float>(out[r] / norm);
  }
  return EmbeddingVector::from_unit(std::move(unit));
}

EmbeddingVector ProjectionHead::apply(const BaseEmbedding& base, const PoseTriplet& pose) const {
  return apply_prepared(prepare(base), pose);
}

EmbeddingVector pose_aware_embedding(const BaseEmbedding& base, const PoseTriplet& pose,
                                     const ProjectionHead& head) {
  return head.apply(base, pose);
}

EmbeddingStore::EmbeddingStore(std::size_t rows, std::size_t cols, std::size_t dim,
                               std::vector<EmbeddingVector> table)
    : rows_(rows), cols_(cols), dim_(dim), table_(std::move(table)) {
  if (rows_ == 0 || cols_ == 0 || dim_ == 0) {
    throw std::invalid_argument("embedding store shape must be positive");
  }
  if (table_.size() != rows_ * cols_) {
    throw std::invalid_argument("embedding store table has " + std::to_string(table_.size()) +
                                " entries, expected " + std::to_string(rows_ * cols_));
  }
  for (const auto& v : table_) {
    if (v.dim() != dim_) {
      throw std::invalid_argument("embedding store entries must all have dimension " +
                                  std::to_string(dim_));
    }
  }
}

EmbeddingStore EmbeddingStore::random(std::size_t rows, std::size_t cols, std::size_t dim,
                                      std::uint64_t seed) {
  std::vector<EmbeddingVector> table;
  table.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      RngStream cell = substream(seed, r, c);
      std::vector<float> v(dim);
      double norm_sq = 0.0;
      std::vector<double> raw(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        raw[k] = cell.next_gaussian();
        norm_sq += raw[k] * raw[k];
      }
      const double norm = std::sqrt(norm_sq);
      for (std::size_t k = 0; k < dim; ++k) {
        v[k] = static_cast<float>(raw[k] / norm);
      }
      table.push_back(EmbeddingVector::from_unit(std::move(v)));
    }
  }
  return EmbeddingStore(rows, cols, dim, std::move(table));
}

namespace {

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::uint32_t decode_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void encode_le32(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

}  // namespace

EmbeddingStore load_store(const std::filesystem::path& path, const TileGrid& grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StoreFormatError(StoreFormatError::Kind::io,
                           "cannot open embedding store " + path.string());
  }

  std::string header;
  if (!std::getline(in, header) || header.size() > 256) {
    throw StoreFormatError(StoreFormatError::Kind::malformed_header,
                           "embedding store header is missing or oversized");
  }
  std::istringstream hs(header);
  std::string magic, rows_tok, cols_tok, dim_tok, extra;
  hs >> magic >> rows_tok >> cols_tok >> dim_tok;
  if (magic != "GEOEMB1" || !all_digits(rows_tok) || !all_digits(cols_tok) ||
      !all_digits(dim_tok) || (hs >> extra)) {
    throw StoreFormatError(StoreFormatError::Kind::malformed_header,
                           "embedding store header must be 'GEOEMB1 rows cols dim', got '" +
                               header + "'");
  }
  std::size_t rows = 0, cols = 0, dim = 0;
  try {
    rows = std::stoull(rows_tok);
    cols = std::stoull(cols_tok);
    dim = std::stoull(dim_tok);
  } catch (const std::exception&) {
    throw StoreFormatError(StoreFormatError::Kind::malformed_header,
                           "embedding store header counts out of range: '" + header + "'");
  }
  if (rows == 0 || cols == 0 || dim == 0) {
    throw StoreFormatError(StoreFormatError::Kind::malformed_header,
                           "embedding store header declares an empty store: '" + header + "'");
  }
  if (rows != grid.rows() || cols != grid.cols()) {
    throw StoreFormatError(StoreFormatError::Kind::dimension_mismatch,
                           "embedding store declares " + std::to_string(rows) + "x" +
                               std::to_string(cols) + " tiles but the grid has " +
                               std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()));
  }

  const std::size_t record_bytes = dim * 4;
  const std::size_t expected = rows * cols * record_bytes;
  std::vector<unsigned char> payload(expected);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected) {
    throw StoreFormatError(StoreFormatError::Kind::count_mismatch,
                           "embedding store payload is short: expected " +
                               std::to_string(expected) + " bytes, got " +
                               std::to_string(in.gcount()));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw StoreFormatError(StoreFormatError::Kind::count_mismatch,
                           "embedding store has trailing bytes beyond " +
                               std::to_string(rows * cols) + " records");
  }

  std::vector<EmbeddingVector> table;
  table.reserve(rows * cols);
  for (std::size_t rec = 0; rec < rows * cols; ++rec) {
    std::vector<float> v(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const std::uint32_t bits = decode_le32(payload.data() + rec * record_bytes + k * 4);
      v[k] = std::bit_cast<float>(bits);
      if (!std::isfinite(v[k])) {
        throw StoreFormatError(StoreFormatError::Kind::non_finite,
                               "embedding store record " + std::to_string(rec) +
                                   " has a non-finite component");
      }
    }
    try {
      table.push_back(EmbeddingVector::from_unit(std::move(v)));
    } catch (const std::invalid_argument& e) {
      throw StoreFormatError(StoreFormatError::Kind::not_unit,
                             "embedding store record " + std::to_string(rec) + ": " + e.what());
    }
  }
  return EmbeddingStore(rows, cols, dim, std::move(table));
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw StoreFormatError(StoreFormatError::Kind::io,
                           "cannot open " + path.string() + " for writing");
  }
  char header[96];
  std::snprintf(header, sizeof(header), "GEOEMB1 %zu %zu %zu\n", store.rows(), store.cols(),
                store.dim());
  out << header;
  std::vector<unsigned char> buf(store.dim() * 4);
  for (std::size_t r = 0; r < store.rows(); ++r) {
    for (std::size_t c = 0; c < store.cols(); ++c) {
      const auto values = store.at({r, c}).values();
      for (std::size_t k = 0; k < values.size(); ++k) {
        encode_le32(std::bit_cast<std::uint32_t>(values[k]), buf.data() + k * 4);
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
    }
  }
  out.flush();
  if (!out) {
    throw StoreFormatError(StoreFormatError::Kind::io, "failed writing " + path.string());
  }
}

std::vector<double> pseudo_similarity(std::span<const Particle> particles,
                                      const BaseEmbedding& base, const EmbeddingStore& store,
                                      const TileGrid& grid, double heading,
                                      const ProjectionHead& head) {
  if (!store.bound_to(grid)) {
    throw std::invalid_argument("embedding store is not bound to this grid");
  }
  if (store.dim() != head.out_dim()) {
    throw std::invalid_argument("embedding store dimension " + std::to_string(store.dim()) +
                                " does not match head output dimension " +
                                std::to_string(head.out_dim()));
  }
  const ProjectionHead::Prepared prep = head.prepare(base);
  std::vector<double> scores;
  scores.reserve(particles.size());
  for (const Particle& p : particles) {
    const auto tile = grid.try_tile_of({p.x, p.y});
    if (!tile) {
      scores.push_back(no_observation_score());
      continue;
    }
    const PoseTriplet pose = grid.displacement_in_tile({p.x, p.y}, heading);
    scores.push_back(similarity(head.apply_prepared(prep, pose), store.at(*tile)));
  }
  return scores;
}

SyntheticWorld::SyntheticWorld(Params params, std::size_t grid_rows, std::size_t grid_cols)
    : params_(params), rows_(grid_rows), cols_(grid_cols), mask_(grid_rows * grid_cols, 0) {
  if (rows_ == 0 || cols_ == 0) {
    throw std::invalid_argument("synthetic world grid shape must be positive");
  }
  if (!(std::isfinite(params_.kernel_scale) && params_.kernel_scale > 0.0)) {
    throw std::invalid_argument("kernel scale must be finite and positive");
  }
  if (!(std::isfinite(params_.heading_sensitivity) && params_.heading_sensitivity >= 0.0)) {
    throw std::invalid_argument("heading sensitivity must be finite and nonnegative");
  }
  if (!(std::isfinite(params_.observation_noise) && params_.observation_noise >= 0.0)) {
    throw std::invalid_argument("observation noise must be finite and nonnegative");
  }
  if (!(std::isfinite(params_.floor_score) && std::abs(params_.floor_score) <= 1.0)) {
    throw std::invalid_argument("floor score must lie in [-1, 1]");
  }
}

void SyntheticWorld::mask_tile(TileIndex t) {
  if (t.row >= rows_ || t.col >= cols_) {
    throw std::invalid_argument("mask tile (" + std::to_string(t.row) + ", " +
                                std::to_string(t.col) + ") lies outside the bound grid");
  }
  mask_[t.row * cols_ + t.col] = 1;
}

void SyntheticWorld::mask_rect(std::size_t row0, std::size_t col0, std::size_t row1,
                               std::size_t col1) {
  if (row1 < row0 || col1 < col0) {
    throw std::invalid_argument("mask rectangle corners are out of order");
  }
  if (row1 >= rows_ || col1 >= cols_) {
    throw std::invalid_argument("mask rectangle extends outside the bound grid");
  }
  for (std::size_t r = row0; r <= row1; ++r) {
    for (std::size_t c = col0; c <= col1; ++c) mask_[r * cols_ + c] = 1;
  }
}

namespace {

double pose_kernel(double qx, double qy, double heading, double cx, double cy, double cpsi,
                   double rho, double kappa) {
  const double dx = qx - cx;
  const double dy = qy - cy;
  const double position = std::exp(-(dx * dx + dy * dy) / (2.0 * rho * rho));
  const double alignment = std::exp(-kappa * (1.0 - std::cos(heading - cpsi)));
  return position * alignment;
}

}  // namespace

double SyntheticObservation::score(double x, double y, double heading,
                                   std::size_t particle_index) const {
  ++world_->observe_calls_;
  const auto tile = grid_->try_tile_of({x, y});
  if (!tile) return no_observation_score();
  if (world_->masked(*tile)) return world_->params().floor_score;

  double qx = x;
  double qy = y;
  double kappa = world_->params().heading_sensitivity;
  if (mode_ != AblationMode::pose_aware) {
    const WorldPoint center = grid_->tile_center(*tile);
    qx = center.x;
    qy = center.y;
  }
  if (mode_ == AblationMode::orientation_blind) kappa = 0.0;

  const double rho = world_->params().kernel_scale;
  double s = pose_kernel(qx, qy, heading, true_pose_.x, true_pose_.y, true_pose_.psi, rho, kappa);
  for (const ConfuserPose& c : world_->confusers()) {
    s += pose_kernel(qx, qy, heading, c.x, c.y, c.psi, rho, kappa);
  }
  const double sigma = world_->params().observation_noise;
  if (sigma > 0.0) {
    RngStream noise = substream(noise_seed_, particle_index);
    s += sigma * noise.next_gaussian();
  }
  return std::clamp(s, -1.0, 1.0);
}

SyntheticObservation synth_observe(const SyntheticWorld& world, const TileGrid& grid,
                                   WorldPose true_pose, AblationMode mode, RngStream& rng) {
  if (world.grid_rows() != grid.rows() || world.grid_cols() != grid.cols()) {
    throw std::invalid_argument("synthetic world is not bound to this grid");
  }
  if (!grid.contains({true_pose.x, true_pose.y})) {
    throw std::invalid_argument("true pose lies outside the grid");
  }
  SyntheticObservation obs;
  obs.world_ = &world;
  obs.grid_ = &grid;
  obs.true_pose_ = true_pose;
  obs.mode_ = mode;
  obs.noise_seed_ = rng.next_u64();

  // Surrogate for the once-per-step ground-image embedding: a small finite
  // vector derived from the pose and the step's noise seed.
  RngStream pad = substream(obs.noise_seed_, 0xb5);
  obs.base_.values = {static_cast<float>(true_pose.x / 1000.0),
                      static_cast<float>(true_pose.y / 1000.0),
                      static_cast<float>(std::sin(true_pose.psi)),
                      static_cast<float>(std::cos(true_pose.psi)),
                      static_cast<float>(pad.next_double()),
                      static_cast<float>(pad.next_double()),
                      static_cast<float>(pad.next_double()),
                      static_cast<float>(pad.next_double())};
  return obs;
}

}  // namespace geopf
