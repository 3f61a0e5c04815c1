#include "nemo/terrain.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "nemo/height_field.hpp"

namespace nemo {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double parse_number(const std::string& token, int line_no, const char* what) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("line " + std::to_string(line_no) + ": expected numeric " +
                          what + ", got \"" + token + "\"");
  }
  return value;
}

void format_height(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  out += buf;
}

}  // namespace

const char* to_string(TerrainKind kind) {
  switch (kind) {
    case TerrainKind::flat: return "flat";
    case TerrainKind::gaussian_hills: return "gaussian_hills";
    case TerrainKind::sinusoid: return "sinusoid";
    case TerrainKind::composite: return "composite";
  }
  return "flat";
}

TerrainKind terrain_kind_from_string(const std::string& name) {
  const std::string k = lower(name);
  if (k == "flat") return TerrainKind::flat;
  if (k == "gaussian_hills" || k == "gaussian") return TerrainKind::gaussian_hills;
  if (k == "sinusoid") return TerrainKind::sinusoid;
  if (k == "composite") return TerrainKind::composite;
  throw ValidationError("unknown terrain kind \"" + name + "\"");
}

void TerrainSpec::validate() const {
  bounds.validate();
  for (const TerrainComponent& c : components) {
    if (!(c.width > 0.0)) {
      throw ValidationError("terrain component width must be strictly positive");
    }
  }
}

double surface_height(const TerrainSpec& spec, double x, double y) {
  double z = spec.base_height;
  auto gaussian = [&](const TerrainComponent& c) {
    const double dx = x - c.center.x();
    const double dy = y - c.center.y();
    return c.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * c.width * c.width));
  };
  auto sinusoid = [&](const TerrainComponent& c) {
    return c.amplitude * std::sin((x - c.center.x()) / c.width) *
           std::sin((y - c.center.y()) / c.width);
  };
  switch (spec.kind) {
    case TerrainKind::flat:
      break;
    case TerrainKind::gaussian_hills:
      for (const auto& c : spec.components) z += gaussian(c);
      break;
    case TerrainKind::sinusoid:
      for (const auto& c : spec.components) z += sinusoid(c);
      break;
    case TerrainKind::composite:
      for (const auto& c : spec.components) z += gaussian(c) + sinusoid(c);
      break;
  }
  return z;
}

std::string terrain_to_json(const TerrainSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  j["parameters"] = nlohmann::json::array();
  for (const auto& c : spec.components) {
    j["parameters"].push_back({{"center", {c.center.x(), c.center.y()}},
                               {"amplitude", c.amplitude},
                               {"width", c.width}});
  }
  j["base_height"] = spec.base_height;
  j["bounds"] = {spec.bounds.x_min, spec.bounds.x_max, spec.bounds.y_min,
                 spec.bounds.y_max};
  return j.dump(2) + "\n";
}

TerrainSpec terrain_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid terrain JSON: ") + e.what());
  }
  TerrainSpec spec;
  try {
    spec.kind = terrain_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("parameters")) {
      for (const auto& p : j.at("parameters")) {
        TerrainComponent c;
        c.center = {p.at("center").at(0).get<double>(), p.at("center").at(1).get<double>()};
        c.amplitude = p.at("amplitude").get<double>();
        c.width = p.at("width").get<double>();
        spec.components.push_back(c);
      }
    }
    spec.base_height = j.value("base_height", 0.0);
    const auto& b = j.at("bounds");
    spec.bounds = Rect{b.at(0).get<double>(), b.at(1).get<double>(),
                       b.at(2).get<double>(), b.at(3).get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid terrain JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

TerrainSpec load_terrain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open terrain file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return terrain_from_json(buf.str());
}

void save_terrain_file(const TerrainSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write terrain file: " + path);
  out << terrain_to_json(spec);
}

bool GridMap::has_nodata() const {
  for (double h : heights) {
    if (h == nodata_value) return true;
  }
  return false;
}

void GridMap::validate() const {
  if (n_cols < 1 || n_rows < 1) throw ValidationError("grid: dimensions must be positive");
  if (!(cell_size > 0.0)) throw ValidationError("grid: cell_size must be positive");
  if (heights.size() != static_cast<std::size_t>(n_cols) * n_rows) {
    throw ValidationError("grid: heights length does not match n_rows * n_cols");
  }
}

GridMap load_asc(std::istream& in) {
  GridMap grid;
  int line_no = 0;
  std::string line;

  struct HeaderField {
    const char* key;
    double* target;
    bool integer;
  };
  double ncols = 0, nrows = 0;
  HeaderField header[] = {
      {"ncols", &ncols, true},          {"nrows", &nrows, true},
      {"xllcorner", &grid.x_ll, false}, {"yllcorner", &grid.y_ll, false},
      {"cellsize", &grid.cell_size, false},
  };

  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) {
      throw ValidationError("line " + std::to_string(line_no + 1) +
                            ": unexpected end of input, expected " + what);
    }
    ++line_no;
  };

  for (const HeaderField& field : header) {
    next_line(field.key);
    std::istringstream ls(line);
    std::string key, value, extra;
    if (!(ls >> key >> value)) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed header, expected \"" +
                            field.key + " <value>\"");
    }
    if (lower(key) != field.key) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected header key \"" +
                            field.key + "\", got \"" + key + "\"");
    }
    *field.target = parse_number(value, line_no, field.key);
    if (field.integer && *field.target != std::floor(*field.target)) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + field.key +
                            " must be an integer");
    }
  }
  grid.n_cols = static_cast<int>(ncols);
  grid.n_rows = static_cast<int>(nrows);
  if (grid.n_cols < 1 || grid.n_rows < 1) {
    throw ValidationError("line 1: grid dimensions must be positive");
  }
  if (!(grid.cell_size > 0.0)) {
    throw ValidationError("line 5: cellsize must be positive");
  }

  // Optional NODATA_value line, then data rows (northernmost first).
  grid.heights.reserve(static_cast<std::size_t>(grid.n_cols) * grid.n_rows);
  int rows_read = 0;
  bool first_data_line = true;
  while (rows_read < grid.n_rows) {
    next_line("a data row");
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;  // blank line
    if (first_data_line && lower(token) == "nodata_value") {
      std::string value;
      if (!(ls >> value)) {
        throw ValidationError("line " + std::to_string(line_no) + ": NODATA_value without a value");
      }
      grid.nodata_value = parse_number(value, line_no, "NODATA_value");
      first_data_line = false;
      continue;
    }
    first_data_line = false;
    int count = 0;
    do {
      grid.heights.push_back(parse_number(token, line_no, "height"));
      ++count;
    } while (ls >> token);
    if (count != grid.n_cols) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(grid.n_cols) + " values in row, got " +
                            std::to_string(count));
    }
    ++rows_read;
  }
  grid.validate();
  return grid;
}

GridMap load_asc_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open raster file: " + path);
  return load_asc(in);
}

std::string save_asc(const GridMap& grid) {
  grid.validate();
  std::string out;
  out.reserve(grid.heights.size() * 12 + 128);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "ncols %d\nnrows %d\n", grid.n_cols, grid.n_rows);
  out += buf;
  std::snprintf(buf, sizeof(buf), "xllcorner %.10g\nyllcorner %.10g\ncellsize %.10g\n",
                grid.x_ll, grid.y_ll, grid.cell_size);
  out += buf;
  std::snprintf(buf, sizeof(buf), "NODATA_value %.10g\n", grid.nodata_value);
  out += buf;
  for (int r = 0; r < grid.n_rows; ++r) {
    for (int c = 0; c < grid.n_cols; ++c) {
      if (c > 0) out += ' ';
      format_height(out, grid.at(r, c));
    }
    out += '\n';
  }
  return out;
}

void save_asc_file(const GridMap& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write raster file: " + path);
  out << save_asc(grid);
}

GridMap rasterize(const std::function<double(double, double)>& fn, Rect bounds,
                  int n_cols, int n_rows, double nodata_value) {
  bounds.validate();
  if (n_cols < 2 || n_rows < 2) {
    throw ValidationError("rasterize: n_cols and n_rows must be >= 2");
  }
  const double cs_x = bounds.width() / n_cols;
  const double cs_y = bounds.height() / n_rows;
  if (std::abs(cs_x - cs_y) > 1e-6 * std::max(cs_x, cs_y)) {
    throw ValidationError(
        "rasterize: non-square cells (column spacing " + std::to_string(cs_x) +
        " vs row spacing " + std::to_string(cs_y) +
        "); adjust n_cols/n_rows to match the bounds aspect ratio");
  }
  GridMap grid;
  grid.n_cols = n_cols;
  grid.n_rows = n_rows;
  grid.x_ll = bounds.x_min;
  grid.y_ll = bounds.y_min;
  grid.cell_size = cs_x;
  grid.nodata_value = nodata_value;
  grid.heights.resize(static_cast<std::size_t>(n_cols) * n_rows);
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_cols; ++c) {
      const Vec2 p = grid.cell_center(r, c);
      grid.at(r, c) = fn(p.x(), p.y());
    }
  }
  return grid;
}

GridMap rasterize_field(const HeightField& field, Rect bounds, int n_cols,
                        int n_rows) {
  return rasterize([&field](double x, double y) { return field.query(x, y); },
                   bounds, n_cols, n_rows);
}

}  // namespace nemo
