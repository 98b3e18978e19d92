#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>

namespace geopf {

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const WorldPoint&) const = default;
};

struct WorldPose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;  // heading, radians
  bool operator==(const WorldPose&) const = default;
};

// Wraps an angle into [-pi, pi).
double wrap_angle(double theta);

struct TileIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const TileIndex&) const = default;
};

// Displacement from a tile center plus the shared compass heading.
struct PoseTriplet {
  double dx = 0.0;   // meters, |dx| <= spacing/2
  double dy = 0.0;   // meters, |dy| <= spacing/2
  double psi = 0.0;  // wrapped into [-pi, pi)
};

class GridBoundsError : public std::out_of_range {
 public:
  GridBoundsError(double x, double y);
  double x;
  double y;
};

// Uniform tile partition of the search area. Tile (r, c) spans
// [origin + (c*s, r*s), origin + ((c+1)*s, (r+1)*s)); min edges inclusive,
// max edges exclusive, so every in-bounds point lies in exactly one tile.
class TileGrid {
 public:
  TileGrid(WorldPoint origin, double spacing, std::size_t rows, std::size_t cols);

  WorldPoint origin() const { return origin_; }
  double spacing() const { return spacing_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t tile_count() const { return rows_ * cols_; }
  double width() const { return spacing_ * static_cast<double>(cols_); }
  double height() const { return spacing_ * static_cast<double>(rows_); }

  bool contains(WorldPoint p) const { return try_tile_of(p).has_value(); }

  std::optional<TileIndex> try_tile_of(WorldPoint p) const;

  // Throws GridBoundsError for out-of-bounds positions.
  TileIndex tile_of(WorldPoint p) const;

  WorldPoint tile_center(TileIndex t) const;

  PoseTriplet displacement_in_tile(WorldPoint p, double heading) const;

  bool operator==(const TileGrid&) const = default;

 private:
  WorldPoint origin_;
  double spacing_;
  std::size_t rows_;
  std::size_t cols_;
};

}  // namespace geopf
