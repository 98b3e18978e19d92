#include "geopf/grid.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace geopf {

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(theta + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

GridBoundsError::GridBoundsError(double x_, double y_)
    : std::out_of_range("position (" + std::to_string(x_) + ", " + std::to_string(y_) +
                        ") outside grid bounds"),
      x(x_),
      y(y_) {}

TileGrid::TileGrid(WorldPoint origin, double spacing, std::size_t rows, std::size_t cols)
    : origin_(origin), spacing_(spacing), rows_(rows), cols_(cols) {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw std::invalid_argument("tile spacing must be positive and finite");
  }
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("grid must have at least one row and one column");
  }
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y)) {
    throw std::invalid_argument("grid origin must be finite");
  }
}

std::optional<TileIndex> TileGrid::try_tile_of(WorldPoint p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
  double fc = std::floor((p.x - origin_.x) / spacing_);
  double fr = std::floor((p.y - origin_.y) / spacing_);
  if (fc < 0.0 || fr < 0.0 || fc >= static_cast<double>(cols_) ||
      fr >= static_cast<double>(rows_)) {
    return std::nullopt;
  }
  return TileIndex{static_cast<std::size_t>(fr), static_cast<std::size_t>(fc)};
}

TileIndex TileGrid::tile_of(WorldPoint p) const {
  auto t = try_tile_of(p);
  if (!t) throw GridBoundsError(p.x, p.y);
  return *t;
}

WorldPoint TileGrid::tile_center(TileIndex t) const {
  return {origin_.x + (static_cast<double>(t.col) + 0.5) * spacing_,
          origin_.y + (static_cast<double>(t.row) + 0.5) * spacing_};
}

PoseTriplet TileGrid::displacement_in_tile(WorldPoint p, double heading) const {
  WorldPoint c = tile_center(tile_of(p));
  return {p.x - c.x, p.y - c.y, wrap_angle(heading)};
}

}  // namespace geopf
