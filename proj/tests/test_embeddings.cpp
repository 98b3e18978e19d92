#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopf/embeddings.hpp"
#include "geopf/filter.hpp"
#include "geopf/grid.hpp"
#include "geopf/rng.hpp"

using namespace geopf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "geopf_embed_tests";
  fs::create_directories(dir);
  return dir;
}

// Assembles a store file from an arbitrary header and raw float payload, so
// malformed variants can be produced byte by byte.
void write_raw_store(const fs::path& path, const std::string& header,
                     const std::vector<float>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(bool(out));
  out << header;
  for (float v : payload) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(bits & 0xff),
        static_cast<unsigned char>((bits >> 8) & 0xff),
        static_cast<unsigned char>((bits >> 16) & 0xff),
        static_cast<unsigned char>((bits >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

StoreFormatError::Kind load_failure_kind(const fs::path& path, const TileGrid& grid) {
  try {
    load_store(path, grid);
  } catch (const StoreFormatError& e) {
    return e.kind;
  }
  FAIL("expected the store load to fail");
  return StoreFormatError::Kind::io;
}

// Four orthogonal unit records for a 2x2 store with dim 4.
std::vector<float> unit_payload_2x2() {
  std::vector<float> payload(16, 0.0f);
  payload[0] = 1.0f;   // record 0: e0
  payload[5] = 1.0f;   // record 1: e1
  payload[10] = 1.0f;  // record 2: e2
  payload[15] = 1.0f;  // record 3: e3
  return payload;
}

}  // namespace

TEST_SUITE_BEGIN("embeddings");

TEST_CASE("embedding vectors normalize and validate") {
  const EmbeddingVector v = EmbeddingVector::normalized({3.0f, 4.0f});
  CHECK(v.dim() == 2);
  CHECK(v.values()[0] == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(v.values()[1] == doctest::Approx(0.8).epsilon(1e-7));

  CHECK_THROWS_AS(EmbeddingVector::normalized({}), std::invalid_argument);
  CHECK_THROWS_AS(EmbeddingVector::normalized({0.0f, 0.0f}), std::invalid_argument);
  CHECK_THROWS_AS(
      EmbeddingVector::normalized({1.0f, std::numeric_limits<float>::infinity()}),
      std::invalid_argument);

  // from_unit keeps the exact bytes it was given.
  std::vector<float> unit{0.6f, 0.8f};
  const EmbeddingVector u = EmbeddingVector::from_unit(unit);
  CHECK(std::bit_cast<std::uint32_t>(u.values()[0]) ==
        std::bit_cast<std::uint32_t>(unit[0]));
  CHECK(std::bit_cast<std::uint32_t>(u.values()[1]) ==
        std::bit_cast<std::uint32_t>(unit[1]));
  CHECK_THROWS_AS(EmbeddingVector::from_unit({0.6f, 0.9f}), std::invalid_argument);
}

TEST_CASE("similarity of unit vectors") {
  const EmbeddingVector a = EmbeddingVector::from_unit({1.0f, 0.0f, 0.0f});
  const EmbeddingVector b = EmbeddingVector::from_unit({0.0f, 1.0f, 0.0f});
  const EmbeddingVector c = EmbeddingVector::from_unit({-1.0f, 0.0f, 0.0f});
  CHECK(similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(similarity(a, b) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(similarity(a, c) == doctest::Approx(-1.0).epsilon(1e-12));

  const EmbeddingVector shorter = EmbeddingVector::from_unit({1.0f, 0.0f});
  CHECK_THROWS_AS(similarity(a, shorter), std::invalid_argument);
}

TEST_CASE("identity head exposes the pose encoding") {
  // Zero base leaves only the appended pose channels, so the output is the
  // normalized encoding (dx/half_extent, dy/half_extent, sin, cos).
  const ProjectionHead head = ProjectionHead::identity(2, 30.0);
  CHECK(head.out_dim() == 6);
  const BaseEmbedding base{{0.0f, 0.0f}};
  const EmbeddingVector v = head.apply(base, {30.0, -15.0, 0.0});
  // Encoding (1, -0.5, 0, 1) has norm sqrt(2.25) = 1.5.
  CHECK(v.values()[0] == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(v.values()[1] == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(v.values()[2] == doctest::Approx(1.0 / 1.5).epsilon(1e-6));
  CHECK(v.values()[3] == doctest::Approx(-0.5 / 1.5).epsilon(1e-6));
  CHECK(v.values()[4] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(v.values()[5] == doctest::Approx(1.0 / 1.5).epsilon(1e-6));
}

TEST_CASE("opposite headings produce distant embeddings") {
  const ProjectionHead head = ProjectionHead::identity(1, 30.0);
  const BaseEmbedding base{{1.0f}};
  const EmbeddingVector fwd = head.apply(base, {0.0, 0.0, 0.0});
  const EmbeddingVector rev = head.apply(base, {0.0, 0.0, 3.14159265358979});
  CHECK(similarity(fwd, rev) < 1.0 - 1e-6);
  CHECK(similarity(fwd, fwd) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("prepared application matches direct application bit for bit") {
  const ProjectionHead head = ProjectionHead::seeded(8, 16, 99, 30.0);
  RngStream rng(17);
  BaseEmbedding base;
  for (int i = 0; i < 8; ++i) base.values.push_back(static_cast<float>(rng.next_gaussian()));

  const ProjectionHead::Prepared prep = head.prepare(base);
  for (int trial = 0; trial < 50; ++trial) {
    const PoseTriplet pose{(rng.next_double() - 0.5) * 60.0,
                           (rng.next_double() - 0.5) * 60.0,
                           (rng.next_double() - 0.5) * 6.0};
    const EmbeddingVector direct = head.apply(base, pose);
    const EmbeddingVector shared = head.apply_prepared(prep, pose);
    REQUIRE(direct.dim() == shared.dim());
    for (std::size_t k = 0; k < direct.dim(); ++k) {
      CHECK(std::bit_cast<std::uint32_t>(direct.values()[k]) ==
            std::bit_cast<std::uint32_t>(shared.values()[k]));
    }
  }
}

TEST_CASE("head call counters track prepare and apply") {
  const ProjectionHead head = ProjectionHead::seeded(4, 8, 1, 30.0);
  const BaseEmbedding base{{0.5f, -0.5f, 0.25f, 1.0f}};
  head.reset_counts();
  const ProjectionHead::Prepared prep = head.prepare(base);
  for (int i = 0; i < 7; ++i) {
    head.apply_prepared(prep, {1.0 * i, 0.0, 0.1 * i});
  }
  CHECK(head.prepare_count() == 1);
  CHECK(head.apply_count() == 7);

  head.reset_counts();
  head.apply(base, {0.0, 0.0, 0.0});  // direct path prepares and applies once
  CHECK(head.prepare_count() == 1);
  CHECK(head.apply_count() == 1);
}

TEST_CASE("head construction and inputs are validated") {
  CHECK_THROWS_AS(ProjectionHead::identity(0, 30.0), std::invalid_argument);
  CHECK_THROWS_AS(ProjectionHead::identity(4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ProjectionHead::seeded(4, 0, 1, 30.0), std::invalid_argument);

  const ProjectionHead head = ProjectionHead::identity(2, 30.0);
  const BaseEmbedding wrong{{1.0f, 2.0f, 3.0f}};
  CHECK_THROWS_AS(head.prepare(wrong), std::invalid_argument);
  const BaseEmbedding bad{{1.0f, std::numeric_limits<float>::quiet_NaN()}};
  CHECK_THROWS_AS(head.prepare(bad), std::invalid_argument);
}

TEST_CASE("seeded heads and random stores are reproducible") {
  const ProjectionHead h1 = ProjectionHead::seeded(6, 12, 4242, 30.0);
  const ProjectionHead h2 = ProjectionHead::seeded(6, 12, 4242, 30.0);
  const BaseEmbedding base{{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f}};
  const EmbeddingVector v1 = h1.apply(base, {3.0, -4.0, 1.0});
  const EmbeddingVector v2 = h2.apply(base, {3.0, -4.0, 1.0});
  for (std::size_t k = 0; k < v1.dim(); ++k) {
    CHECK(std::bit_cast<std::uint32_t>(v1.values()[k]) ==
          std::bit_cast<std::uint32_t>(v2.values()[k]));
  }

  const EmbeddingStore s1 = EmbeddingStore::random(3, 5, 8, 7);
  const EmbeddingStore s2 = EmbeddingStore::random(3, 5, 8, 7);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      const auto a = s1.at({r, c}).values();
      const auto b = s2.at({r, c}).values();
      for (std::size_t k = 0; k < 8; ++k) {
        CHECK(std::bit_cast<std::uint32_t>(a[k]) == std::bit_cast<std::uint32_t>(b[k]));
      }
    }
  }
}

TEST_CASE("store files round-trip byte for byte") {
  const fs::path dir = scratch_dir();
  const fs::path path = dir / "roundtrip.geoemb";
  const TileGrid grid({0, 0}, 60.0, 4, 6);
  const EmbeddingStore store = EmbeddingStore::random(4, 6, 16, 123);
  write_store(store, path);

  const EmbeddingStore loaded = load_store(path, grid);
  CHECK(loaded.rows() == 4);
  CHECK(loaded.cols() == 6);
  CHECK(loaded.dim() == 16);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      const auto a = store.at({r, c}).values();
      const auto b = loaded.at({r, c}).values();
      for (std::size_t k = 0; k < 16; ++k) {
        CHECK(std::bit_cast<std::uint32_t>(a[k]) == std::bit_cast<std::uint32_t>(b[k]));
      }
    }
  }

  // Writing the loaded store again reproduces the identical file.
  const fs::path again = dir / "roundtrip2.geoemb";
  write_store(loaded, again);
  std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)),
                           std::istreambuf_iterator<char>());
  const std::string bytes2((std::istreambuf_iterator<char>(f2)),
                           std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);
  CHECK(bytes1.size() ==
        std::string("GEOEMB1 4 6 16\n").size() + 4 * 6 * 16 * 4);
}

TEST_CASE("store loader reports each failure mode") {
  const fs::path dir = scratch_dir();
  const TileGrid grid({0, 0}, 60.0, 2, 2);
  const std::vector<float> good = unit_payload_2x2();

  CHECK(load_failure_kind(dir / "missing.geoemb", grid) == StoreFormatError::Kind::io);

  fs::path p = dir / "bad_magic.geoemb";
  write_raw_store(p, "GEOEMB9 2 2 4\n", good);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::malformed_header);

  p = dir / "missing_token.geoemb";
  write_raw_store(p, "GEOEMB1 2 2\n", good);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::malformed_header);

  p = dir / "extra_token.geoemb";
  write_raw_store(p, "GEOEMB1 2 2 4 4\n", good);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::malformed_header);

  p = dir / "negative_dim.geoemb";
  write_raw_store(p, "GEOEMB1 2 2 -4\n", good);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::malformed_header);

  p = dir / "zero_rows.geoemb";
  write_raw_store(p, "GEOEMB1 0 2 4\n", good);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::malformed_header);

  p = dir / "wrong_shape.geoemb";
  write_raw_store(p, "GEOEMB1 3 2 4\n", good);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::dimension_mismatch);

  p = dir / "short_payload.geoemb";
  std::vector<float> shorted = good;
  shorted.pop_back();
  write_raw_store(p, "GEOEMB1 2 2 4\n", shorted);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::count_mismatch);

  p = dir / "trailing_bytes.geoemb";
  std::vector<float> extended = good;
  extended.push_back(1.0f);
  write_raw_store(p, "GEOEMB1 2 2 4\n", extended);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::count_mismatch);

  p = dir / "nan_component.geoemb";
  std::vector<float> poisoned = good;
  poisoned[5] = std::numeric_limits<float>::quiet_NaN();
  write_raw_store(p, "GEOEMB1 2 2 4\n", poisoned);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::non_finite);

  p = dir / "not_unit.geoemb";
  std::vector<float> stretched = good;
  stretched[0] = 2.0f;
  write_raw_store(p, "GEOEMB1 2 2 4\n", stretched);
  CHECK(load_failure_kind(p, grid) == StoreFormatError::Kind::not_unit);
}

TEST_CASE("pseudo similarity equals the per-particle naive computation") {
  const TileGrid grid({0, 0}, 60.0, 6, 6);
  const EmbeddingStore store = EmbeddingStore::random(6, 6, 24, 2001);
  const ProjectionHead head = ProjectionHead::seeded(8, 24, 77, grid.spacing() / 2.0);
  RngStream rng(3030);
  BaseEmbedding base;
  for (int i = 0; i < 8; ++i) base.values.push_back(static_cast<float>(rng.next_gaussian()));

  std::vector<Particle> particles;
  for (int i = 0; i < 400; ++i) {
    particles.push_back({rng.next_double() * grid.width(),
                         rng.next_double() * grid.height(), 1.0 / 402});
  }
  particles.push_back({-10.0, 50.0, 1.0 / 402});     // off the west edge
  particles.push_back({50.0, 10000.0, 1.0 / 402});   // far north

  const double heading = 0.75;
  const std::vector<double> scores =
      pseudo_similarity(particles, base, store, grid, heading, head);
  REQUIRE(scores.size() == particles.size());

  for (std::size_t i = 0; i < particles.size(); ++i) {
    const auto tile = grid.try_tile_of({particles[i].x, particles[i].y});
    if (!tile) {
      CHECK(is_no_observation(scores[i]));
      continue;
    }
    const PoseTriplet pose =
        grid.displacement_in_tile({particles[i].x, particles[i].y}, heading);
    const double naive = similarity(head.apply(base, pose), store.at(*tile));
    CHECK(scores[i] == naive);
  }
}

TEST_CASE("pseudo similarity shares one base projection across particles") {
  const TileGrid grid({0, 0}, 60.0, 4, 4);
  const EmbeddingStore store = EmbeddingStore::random(4, 4, 12, 5);
  const ProjectionHead head = ProjectionHead::seeded(6, 12, 8, 30.0);
  const BaseEmbedding base{{0.5f, 0.25f, -0.5f, 0.75f, -0.25f, 1.0f}};

  std::vector<Particle> particles;
  for (int i = 0; i < 8; ++i) particles.push_back({30.0 + i * 10.0, 30.0, 0.125});
  particles.push_back({-5.0, 0.0, 0.0});  // out of bounds, never projected

  head.reset_counts();
  pseudo_similarity(particles, base, store, grid, 0.0, head);
  CHECK(head.prepare_count() == 1);
  CHECK(head.apply_count() == 8);
}

TEST_CASE("pseudo similarity validates store and head agreement") {
  const TileGrid grid({0, 0}, 60.0, 4, 4);
  const BaseEmbedding base{{1.0f, 0.0f}};
  const std::vector<Particle> particles{{30.0, 30.0, 1.0}};

  const EmbeddingStore unbound = EmbeddingStore::random(3, 4, 6, 1);
  const ProjectionHead head = ProjectionHead::seeded(2, 6, 1, 30.0);
  CHECK_THROWS_AS(pseudo_similarity(particles, base, unbound, grid, 0.0, head),
                  std::invalid_argument);

  const EmbeddingStore store = EmbeddingStore::random(4, 4, 6, 1);
  const ProjectionHead narrow = ProjectionHead::seeded(2, 5, 1, 30.0);
  CHECK_THROWS_AS(pseudo_similarity(particles, base, store, grid, 0.0, narrow),
                  std::invalid_argument);
}

TEST_CASE("synthetic world validates its parameters and mask") {
  SyntheticWorld::Params params;
  params.kernel_scale = 0.0;
  CHECK_THROWS_AS(SyntheticWorld(params, 4, 4), std::invalid_argument);
  params = {};
  params.heading_sensitivity = -1.0;
  CHECK_THROWS_AS(SyntheticWorld(params, 4, 4), std::invalid_argument);
  params = {};
  params.observation_noise = -0.1;
  CHECK_THROWS_AS(SyntheticWorld(params, 4, 4), std::invalid_argument);
  params = {};
  params.floor_score = 1.5;
  CHECK_THROWS_AS(SyntheticWorld(params, 4, 4), std::invalid_argument);
  params = {};
  CHECK_THROWS_AS(SyntheticWorld(params, 0, 4), std::invalid_argument);

  SyntheticWorld world(params, 4, 4);
  CHECK_THROWS_AS(world.mask_tile({4, 0}), std::invalid_argument);
  CHECK_THROWS_AS(world.mask_rect(2, 2, 1, 3), std::invalid_argument);
  CHECK_THROWS_AS(world.mask_rect(0, 0, 1, 4), std::invalid_argument);
  world.mask_rect(1, 1, 2, 2);
  CHECK(world.masked({1, 1}));
  CHECK(world.masked({2, 2}));
  CHECK_FALSE(world.masked({0, 0}));
  CHECK_FALSE(world.masked({3, 3}));
}

TEST_CASE("synthetic scores peak at the true pose") {
  const TileGrid grid({0, 0}, 60.0, 8, 8);
  SyntheticWorld::Params params;
  params.kernel_scale = 60.0;
  params.heading_sensitivity = 4.0;
  const SyntheticWorld world(params, 8, 8);
  const WorldPose truth{250.0, 200.0, 0.5};
  RngStream rng(1);
  const SyntheticObservation obs =
      synth_observe(world, grid, truth, AblationMode::pose_aware, rng);

  CHECK(obs.score(truth.x, truth.y, truth.psi, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // 60 m off with kernel scale 60: the position kernel alone is exp(-1/2).
  CHECK(obs.score(truth.x + 60.0, truth.y, truth.psi, 0) ==
        doctest::Approx(0.6065306597126334).epsilon(1e-12));

  // Reversed heading at the true position: exp(-kappa * 2).
  CHECK(obs.score(truth.x, truth.y, truth.psi + 3.14159265358979, 1) ==
        doctest::Approx(std::exp(-8.0)).epsilon(1e-9));

  // No other sampled pose beats the truth.
  const double peak = obs.score(truth.x, truth.y, truth.psi, 0);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const WorldPoint center = grid.tile_center({r, c});
      CHECK(obs.score(center.x, center.y, truth.psi, 0) <= peak + 1e-12);
    }
  }
}

TEST_CASE("masked tiles return the floor with no noise") {
  const TileGrid grid({0, 0}, 60.0, 4, 4);
  SyntheticWorld::Params params;
  params.observation_noise = 0.5;
  params.floor_score = -0.25;
  SyntheticWorld world(params, 4, 4);
  world.mask_tile({1, 1});
  RngStream rng(9);
  const SyntheticObservation obs =
      synth_observe(world, grid, {30.0, 30.0, 0.0}, AblationMode::pose_aware, rng);

  // (90, 90) lies in the masked tile (1, 1): the floor comes back exactly,
  // every time, for every particle index.
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(obs.score(90.0, 90.0, 0.0, i) == -0.25);
  }
  CHECK(is_no_observation(obs.score(-10.0, 30.0, 0.0, 0)));
  CHECK(is_no_observation(obs.score(30.0, 500.0, 0.0, 0)));
}

TEST_CASE("confuser kernels add to the true kernel") {
  const TileGrid grid({0, 0}, 60.0, 16, 16);
  SyntheticWorld::Params params;
  params.kernel_scale = 90.0;
  params.heading_sensitivity = 4.0;
  SyntheticWorld world(params, 16, 16);
  const WorldPose truth{150.0, 150.0, 0.0};
  const ConfuserPose confuser{450.0, 150.0, 0.0};
  world.add_confuser(confuser);
  RngStream rng(2);
  const SyntheticObservation obs =
      synth_observe(world, grid, truth, AblationMode::pose_aware, rng);

  // Halfway between truth and confuser both kernels contribute equally.
  const double mid_x = 300.0, mid_y = 150.0;
  const double d_sq = (mid_x - 150.0) * (mid_x - 150.0) + (mid_y - 150.0) * (mid_y - 150.0);
  const double one_kernel = std::exp(-d_sq / (2.0 * 90.0 * 90.0));
  CHECK(one_kernel > 0.2);  // a substantive overlap, not tail noise
  CHECK(obs.score(mid_x, mid_y, 0.0, 0) ==
        doctest::Approx(2.0 * one_kernel).epsilon(1e-12));

  // At the confuser the sum would exceed one only by the distant true
  // kernel; the score still reports a full-strength peak.
  CHECK(obs.score(confuser.x, confuser.y, confuser.psi, 0) ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("scores clamp to the similarity range") {
  const TileGrid grid({0, 0}, 60.0, 4, 4);
  SyntheticWorld::Params params;
  params.kernel_scale = 500.0;
  params.heading_sensitivity = 0.0;
  SyntheticWorld world(params, 4, 4);
  // Stacked confusers at the same spot push the raw sum far above 1.
  for (int i = 0; i < 5; ++i) world.add_confuser({120.0, 120.0, 0.0});
  RngStream rng(3);
  const SyntheticObservation obs =
      synth_observe(world, grid, {120.0, 120.0, 0.0}, AblationMode::pose_aware, rng);
  CHECK(obs.score(120.0, 120.0, 0.0, 0) == 1.0);
}

TEST_CASE("observation noise is seeded per particle index") {
  const TileGrid grid({0, 0}, 60.0, 8, 8);
  SyntheticWorld::Params params;
  params.kernel_scale = 120.0;
  params.observation_noise = 0.1;
  const SyntheticWorld world(params, 8, 8);
  const WorldPose truth{240.0, 240.0, 0.0};

  RngStream rng_a(14);
  const SyntheticObservation a =
      synth_observe(world, grid, truth, AblationMode::pose_aware, rng_a);
  RngStream rng_b(14);
  const SyntheticObservation b =
      synth_observe(world, grid, truth, AblationMode::pose_aware, rng_b);

  // Same step seed: identical noise. Evaluation order is irrelevant because
  // each index draws from its own substream.
  const double a5 = a.score(200.0, 200.0, 0.0, 5);
  for (std::size_t i = 0; i < 5; ++i) b.score(200.0, 200.0, 0.0, i);
  CHECK(b.score(200.0, 200.0, 0.0, 5) == a5);
  CHECK(a.score(200.0, 200.0, 0.0, 5) == a5);  // repeatable within one step

  // Across indices the noise is independent. Query (140, 140) sits 141 m
  // from the truth, so the clean kernel is near 0.5 and the clamp at +-1
  // stays out of reach; the sample mean and spread must match the kernel
  // and the configured sigma.
  const double clean = std::exp(-20000.0 / (2.0 * 120.0 * 120.0));
  double sum = 0.0, sumsq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double s = a.score(140.0, 140.0, 0.0, static_cast<std::size_t>(i) + 100);
    sum += s;
    sumsq += s * s;
  }
  const double mean = sum / n;
  const double std_dev = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::abs(mean - clean) < 3.0 * 0.1 / std::sqrt(static_cast<double>(n)) + 1e-6);
  CHECK(std_dev == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("ablation modes degrade the query pose") {
  const TileGrid grid({0, 0}, 60.0, 8, 8);
  SyntheticWorld::Params params;
  params.kernel_scale = 60.0;
  params.heading_sensitivity = 4.0;
  const SyntheticWorld world(params, 8, 8);
  // Truth away from its tile center: (250, 200) lives in tile (3, 4) with
  // center (270, 210).
  const WorldPose truth{250.0, 200.0, 0.4};
  RngStream rng(8);

  const SyntheticObservation aware =
      synth_observe(world, grid, truth, AblationMode::pose_aware, rng);
  const SyntheticObservation heading =
      synth_observe(world, grid, truth, AblationMode::heading_only, rng);
  const SyntheticObservation blind =
      synth_observe(world, grid, truth, AblationMode::orientation_blind, rng);

  // Pose-aware scores the exact query position: a perfect match.
  CHECK(aware.score(truth.x, truth.y, truth.psi, 0) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Heading-only snaps the query to its tile center (270, 210).
  const double center_d_sq = 20.0 * 20.0 + 10.0 * 10.0;
  const double center_kernel = std::exp(-center_d_sq / (2.0 * 60.0 * 60.0));
  CHECK(heading.score(truth.x, truth.y, truth.psi, 0) ==
        doctest::Approx(center_kernel).epsilon(1e-12));

  // Orientation-blind also ignores the heading entirely.
  CHECK(blind.score(truth.x, truth.y, truth.psi, 0) ==
        doctest::Approx(center_kernel).epsilon(1e-12));
  CHECK(blind.score(truth.x, truth.y, truth.psi + 2.0, 0) ==
        blind.score(truth.x, truth.y, truth.psi, 0));

  // Heading-only still penalizes a heading mismatch.
  CHECK(heading.score(truth.x, truth.y, truth.psi + 2.0, 0) <
        heading.score(truth.x, truth.y, truth.psi, 0));
}

TEST_CASE("observation setup validates world, grid and pose") {
  const TileGrid grid({0, 0}, 60.0, 4, 4);
  SyntheticWorld::Params params;
  const SyntheticWorld wrong_shape(params, 5, 4);
  RngStream rng(6);
  CHECK_THROWS_AS(
      synth_observe(wrong_shape, grid, {30.0, 30.0, 0.0}, AblationMode::pose_aware, rng),
      std::invalid_argument);

  const SyntheticWorld world(params, 4, 4);
  CHECK_THROWS_AS(
      synth_observe(world, grid, {-5.0, 30.0, 0.0}, AblationMode::pose_aware, rng),
      std::invalid_argument);
}

TEST_CASE("observation call accounting") {
  const TileGrid grid({0, 0}, 60.0, 4, 4);
  SyntheticWorld::Params params;
  const SyntheticWorld world(params, 4, 4);
  RngStream rng(11);
  const SyntheticObservation obs =
      synth_observe(world, grid, {30.0, 30.0, 0.0}, AblationMode::pose_aware, rng);

  world.reset_observe_count();
  for (int i = 0; i < 12; ++i) obs.score(30.0, 30.0, 0.0, static_cast<std::size_t>(i));
  CHECK(world.observe_count() == 12);
  world.reset_observe_count();
  CHECK(world.observe_count() == 0);

  // The base surrogate is a small finite vector, stable for a fixed seed.
  CHECK(obs.base_surrogate().values.size() == 8);
  for (float v : obs.base_surrogate().values) CHECK(std::isfinite(v));
  RngStream rng2(11);
  const SyntheticObservation repeat =
      synth_observe(world, grid, {30.0, 30.0, 0.0}, AblationMode::pose_aware, rng2);
  CHECK(repeat.base_surrogate().values == obs.base_surrogate().values);
}

TEST_SUITE_END();
