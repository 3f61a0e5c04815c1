#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nemo/geometry.hpp"

namespace nemo {

class HeightField;

enum class TerrainKind { flat, gaussian_hills, sinusoid, composite };

const char* to_string(TerrainKind kind);
TerrainKind terrain_kind_from_string(const std::string& name);

struct TerrainComponent {
  Vec2 center{0.0, 0.0};
  double amplitude = 1.0;
  double width = 1.0;  // gaussian std-dev / sinusoid length scale, scene units
};

// Analytic ground-truth terrain for synthetic experiments.
//
//   flat            z = base_height
//   gaussian_hills  z = base + sum_k A_k * exp(-(|p - c_k|^2) / (2 w_k^2))
//   sinusoid        z = base + sum_k A_k * sin((x-cx)/w_k) * sin((y-cy)/w_k)
//   composite       z = base + sum_k (gaussian_k + sinusoid_k)
struct TerrainSpec {
  TerrainKind kind = TerrainKind::flat;
  std::vector<TerrainComponent> components;
  double base_height = 0.0;
  Rect bounds{-1.0, 1.0, -1.0, 1.0};

  void validate() const;
};

// Total function: the analytic formula applies outside bounds as well.
double surface_height(const TerrainSpec& spec, double x, double y);

std::string terrain_to_json(const TerrainSpec& spec);
TerrainSpec terrain_from_json(const std::string& text);
TerrainSpec load_terrain_file(const std::string& path);
void save_terrain_file(const TerrainSpec& spec, const std::string& path);

// Regular raster of heights over a bounding rectangle. Row-major storage,
// first stored row is the northernmost one (ESRI convention).
struct GridMap {
  int n_cols = 0;
  int n_rows = 0;
  double x_ll = 0.0;  // west edge of the lower-left cell
  double y_ll = 0.0;  // south edge of the lower-left cell
  double cell_size = 1.0;
  double nodata_value = -9999.0;
  std::vector<double> heights;

  double& at(int row, int col) { return heights[static_cast<std::size_t>(row) * n_cols + col]; }
  double at(int row, int col) const { return heights[static_cast<std::size_t>(row) * n_cols + col]; }
  bool is_nodata(int row, int col) const { return at(row, col) == nodata_value; }
  bool has_nodata() const;

  // Scene coordinates of a cell center. Row 0 has the largest y.
  Vec2 cell_center(int row, int col) const {
    return {x_ll + (col + 0.5) * cell_size,
            y_ll + (n_rows - row - 0.5) * cell_size};
  }

  void validate() const;
};

// ESRI ASCII grid (.asc) I/O. Parse errors carry 1-based line numbers.
GridMap load_asc(std::istream& in);
GridMap load_asc_file(const std::string& path);
std::string save_asc(const GridMap& grid);
void save_asc_file(const GridMap& grid, const std::string& path);

// Samples fn at cell centers over bounds. Requires square cells: the counts
// must match the bounds aspect ratio within 1e-6 relative.
GridMap rasterize(const std::function<double(double, double)>& fn, Rect bounds,
                  int n_cols, int n_rows, double nodata_value = -9999.0);

// Discretization of a trained height field for grid planning and DEM export.
GridMap rasterize_field(const HeightField& field, Rect bounds, int n_cols,
                        int n_rows);

}  // namespace nemo
