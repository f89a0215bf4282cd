#pragma once

// Point-cloud ingestion and the sparse voxel grid that every block consumes
// and produces: voxelization, coordinate normalization, absolute position
// encoding, Z-axis compression between blocks, and BEV flattening.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hmt/numerics.hpp"

namespace hmt {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

struct PointCloud {
  std::vector<Point> points;
};

/// Integer voxel coordinate. Comparison is lexicographic over (x, y, z).
struct Coord3 {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend auto operator<=>(const Coord3&, const Coord3&) = default;
};

/// Packs an in-extent coordinate (each component in [0, 2^21)) into one key.
inline std::uint64_t pack_coord(Coord3 c) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x)) << 42) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y)) << 21) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z));
}

struct GridSpec {
  std::array<double, 3> range_min{};
  std::array<double, 3> range_max{};
  std::array<double, 3> voxel_size{};
  std::array<int, 3> extents{};

  static GridSpec make(std::array<double, 3> range_min, std::array<double, 3> range_max,
                       std::array<double, 3> voxel_size) {
    GridSpec s;
    s.range_min = range_min;
    s.range_max = range_max;
    s.voxel_size = voxel_size;
    for (int a = 0; a < 3; ++a) {
      if (!(voxel_size[a] > 0.0)) throw std::invalid_argument("GridSpec: voxel size must be positive");
      if (!(range_max[a] > range_min[a]))
        throw std::invalid_argument("GridSpec: range_max must exceed range_min");
      s.extents[a] = static_cast<int>(std::ceil((range_max[a] - range_min[a]) / voxel_size[a]));
      if (s.extents[a] <= 0) throw std::invalid_argument("GridSpec: empty extent");
    }
    return s;
  }

  bool contains(Coord3 c) const {
    return c.x >= 0 && c.x < extents[0] && c.y >= 0 && c.y < extents[1] && c.z >= 0 &&
           c.z < extents[2];
  }
};

/// Occupied voxels only, coordinate -> d-dimensional feature. Entry order is
/// the insertion order; the voxel id is the entry index.
class SparseVoxelGrid {
 public:
  GridSpec spec;

  SparseVoxelGrid() = default;
  SparseVoxelGrid(GridSpec s, int feature_dim) : spec(s), feature_dim_(feature_dim) {
    if (feature_dim < 1) throw std::invalid_argument("SparseVoxelGrid: feature_dim must be >= 1");
  }

  int size() const { return static_cast<int>(coords_.size()); }
  bool empty() const { return coords_.empty(); }
  int feature_dim() const { return feature_dim_; }

  const std::vector<Coord3>& coords() const { return coords_; }
  Coord3 coord(int id) const { return coords_[static_cast<std::size_t>(id)]; }

  std::span<const double> feature(int id) const {
    return {features_.data() + static_cast<std::size_t>(id) * feature_dim_,
            static_cast<std::size_t>(feature_dim_)};
  }
  std::span<double> feature(int id) {
    return {features_.data() + static_cast<std::size_t>(id) * feature_dim_,
            static_cast<std::size_t>(feature_dim_)};
  }

  /// Entry index for a coordinate, or -1 when the cell is empty.
  std::int32_t find(Coord3 c) const {
    if (!spec.contains(c)) return -1;
    auto it = index_.find(pack_coord(c));
    return it == index_.end() ? -1 : it->second;
  }

  void insert(Coord3 c, std::span<const double> f) {
    if (!spec.contains(c)) throw std::out_of_range("SparseVoxelGrid::insert: coordinate outside extents");
    if (static_cast<int>(f.size()) != feature_dim_)
      throw std::invalid_argument("SparseVoxelGrid::insert: feature dimension mismatch");
    auto [it, fresh] = index_.emplace(pack_coord(c), static_cast<std::int32_t>(coords_.size()));
    if (!fresh) throw std::invalid_argument("SparseVoxelGrid::insert: duplicate coordinate");
    coords_.push_back(c);
    features_.insert(features_.end(), f.begin(), f.end());
  }

  /// Replaces every feature; row i of `features` must belong to voxel id i.
  void set_features(Matrix features) {
    if (features.rows != size() || features.cols != feature_dim_)
      throw std::invalid_argument("SparseVoxelGrid::set_features: shape mismatch");
    features_ = std::move(features.data);
  }

  Matrix features_matrix() const {
    Matrix m(size(), feature_dim_);
    m.data = features_;
    return m;
  }

 private:
  int feature_dim_ = 0;
  std::vector<Coord3> coords_;
  std::vector<double> features_;
  std::unordered_map<std::uint64_t, std::int32_t> index_;
};

namespace detail {

inline float float_from_le(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

inline void float_to_le(float v, unsigned char* p) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  p[0] = static_cast<unsigned char>(u & 0xff);
  p[1] = static_cast<unsigned char>((u >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((u >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((u >> 24) & 0xff);
}

}  // namespace detail

/// Reads a velodyne-style binary: packed little-endian float32 records of
/// (x, y, z, intensity), no header.
inline PointCloud read_kitti_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("read_kitti_bin: cannot open " + path.string());
  const std::streamsize bytes = in.tellg();
  if (bytes % 16 != 0)
    throw std::runtime_error("read_kitti_bin: " + path.string() +
                             ": size is not a multiple of 16 bytes (truncated record)");
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(bytes));
  if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()), bytes))
    throw std::runtime_error("read_kitti_bin: short read on " + path.string());

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(bytes / 16));
  for (std::size_t i = 0; i + 16 <= buf.size(); i += 16) {
    float v[4];
    for (int k = 0; k < 4; ++k) v[k] = detail::float_from_le(buf.data() + i + 4 * k);
    for (int k = 0; k < 4; ++k) {
      if (!std::isfinite(v[k]))
        throw std::runtime_error("read_kitti_bin: non-finite value at point index " +
                                 std::to_string(i / 16));
    }
    cloud.points.push_back({v[0], v[1], v[2], v[3]});
  }
  return cloud;
}

/// Inverse of read_kitti_bin; coordinates are narrowed to float32.
inline void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_kitti_bin: cannot open " + path.string());
  unsigned char rec[16];
  for (const Point& p : cloud.points) {
    detail::float_to_le(static_cast<float>(p.x), rec);
    detail::float_to_le(static_cast<float>(p.y), rec + 4);
    detail::float_to_le(static_cast<float>(p.z), rec + 8);
    detail::float_to_le(static_cast<float>(p.intensity), rec + 12);
    out.write(reinterpret_cast<const char*>(rec), 16);
  }
  if (!out) throw std::runtime_error("write_kitti_bin: short write on " + path.string());
}

/// Bins points into voxels over half-open cells [min, max) per axis. The raw
/// per-voxel feature is the mean (x, y, z, intensity) of its points, lifted
/// to `feature_dim` channels by a linear map drawn from `rng`. Points are
/// summed in a canonical sorted order, so the result is exactly independent
/// of the input point order.
inline SparseVoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec, int feature_dim,
                                Rng& rng) {
  if (feature_dim < 4) throw std::invalid_argument("voxelize: feature_dim must be >= 4");
  const Matrix lift = Matrix::fan_in_init(4, feature_dim, rng);

  struct Binned {
    std::uint64_t key;
    std::array<double, 4> value;
  };
  std::vector<Binned> binned;
  binned.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    const double v[3] = {p.x, p.y, p.z};
    Coord3 c;
    std::int32_t* idx[3] = {&c.x, &c.y, &c.z};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      if (v[a] < spec.range_min[a] || v[a] >= spec.range_max[a]) {
        inside = false;
        break;
      }
      const double bin = std::floor((v[a] - spec.range_min[a]) / spec.voxel_size[a]);
      if (bin < 0.0 || bin >= static_cast<double>(spec.extents[a])) {
        inside = false;
        break;
      }
      *idx[a] = static_cast<std::int32_t>(bin);
    }
    if (!inside) continue;
    binned.push_back({pack_coord(c), {p.x, p.y, p.z, p.intensity}});
  }
  std::sort(binned.begin(), binned.end(), [](const Binned& a, const Binned& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.value < b.value;
  });

  std::vector<std::uint64_t> keys;
  std::vector<std::array<double, 4>> means;
  for (std::size_t i = 0; i < binned.size();) {
    const std::uint64_t key = binned[i].key;
    std::array<double, 4> sum{0, 0, 0, 0};
    std::int64_t count = 0;
    for (; i < binned.size() && binned[i].key == key; ++i) {
      for (int k = 0; k < 4; ++k) sum[k] += binned[i].value[k];
      ++count;
    }
    for (int k = 0; k < 4; ++k) sum[k] /= static_cast<double>(count);
    keys.push_back(key);
    means.push_back(sum);
  }

  Matrix raw(static_cast<int>(keys.size()), 4);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (int k = 0; k < 4; ++k) raw.at(static_cast<int>(i), k) = means[i][k];
  }
  const Matrix lifted = matmul(raw, lift);

  SparseVoxelGrid grid(spec, feature_dim);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::uint64_t key = keys[i];
    Coord3 c{static_cast<std::int32_t>((key >> 42) & 0x1fffff),
             static_cast<std::int32_t>((key >> 21) & 0x1fffff),
             static_cast<std::int32_t>(key & 0x1fffff)};
    grid.insert(c, lifted.row(static_cast<int>(i)));
  }
  return grid;
}

/// Position scaled by the grid extents, each component in [0, 1).
inline std::array<double, 3> normalize_coord(Coord3 c, const GridSpec& spec) {
  if (!spec.contains(c)) throw std::out_of_range("normalize_coord: coordinate outside extents");
  return {static_cast<double>(c.x) / spec.extents[0], static_cast<double>(c.y) / spec.extents[1],
          static_cast<double>(c.z) / spec.extents[2]};
}

/// Batched absolute position encoding: MLP applied to 2*pi times the
/// normalized coordinate of each row.
inline Matrix pos_encode_rows(std::span<const Coord3> coords, const GridSpec& spec,
                              const MlpParams& encoder) {
  if (encoder.input_dim() != 3)
    throw std::invalid_argument("pos_encode_rows: encoder input dim must be 3");
  constexpr double two_pi = 6.283185307179586476925286766559;
  Matrix in(static_cast<int>(coords.size()), 3);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto c = normalize_coord(coords[i], spec);
    for (int a = 0; a < 3; ++a) in.at(static_cast<int>(i), a) = two_pi * c[a];
  }
  return mlp_forward(in, encoder);
}

inline std::vector<double> absolute_pos_encode(Coord3 c, const GridSpec& spec,
                                               const MlpParams& encoder) {
  const Matrix out = pos_encode_rows(std::span<const Coord3>{&c, 1}, spec, encoder);
  return {out.data.begin(), out.data.end()};
}

/// Merges voxels sharing (x, y, floor(z/2)) by element-wise max, then applies
/// a linear projection. The merged grid keeps the world range, doubling the
/// voxel height; the new Z extent is ceil(Z/2).
inline SparseVoxelGrid z_compress(const SparseVoxelGrid& grid, const Matrix& projection) {
  const int d = grid.feature_dim();
  if (projection.rows != d || projection.cols != d)
    throw std::invalid_argument("z_compress: projection must be feature_dim x feature_dim");

  GridSpec merged_spec = grid.spec;
  merged_spec.voxel_size[2] *= 2.0;
  merged_spec.extents[2] = (grid.spec.extents[2] + 1) / 2;

  std::map<Coord3, std::vector<double>> merged;
  for (int i = 0; i < grid.size(); ++i) {
    const Coord3 c = grid.coord(i);
    const Coord3 target{c.x, c.y, c.z / 2};
    auto [it, fresh] = merged.try_emplace(target);
    const auto f = grid.feature(i);
    if (fresh) {
      it->second.assign(f.begin(), f.end());
    } else {
      for (int k = 0; k < d; ++k) it->second[k] = std::max(it->second[k], f[k]);
    }
  }

  Matrix pooled(static_cast<int>(merged.size()), d);
  int row = 0;
  for (const auto& [c, f] : merged) {
    std::copy(f.begin(), f.end(), pooled.row(row).begin());
    ++row;
  }
  const Matrix projected = matmul(pooled, projection);

  SparseVoxelGrid out(merged_spec, d);
  row = 0;
  for (const auto& [c, f] : merged) {
    out.insert(c, projected.row(row));
    ++row;
  }
  return out;
}

/// Dense (X, Y, Z*d) map; channel block z*d..(z+1)*d of cell (x, y) holds the
/// feature of voxel (x, y, z), zeros where the cell is empty.
struct BevMap {
  int size_x = 0;
  int size_y = 0;
  int channels = 0;
  std::vector<double> data;

  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(x) * size_y + y) * channels + c];
  }
};

inline BevMap bev_flatten(const SparseVoxelGrid& grid) {
  BevMap map;
  map.size_x = grid.spec.extents[0];
  map.size_y = grid.spec.extents[1];
  map.channels = grid.spec.extents[2] * grid.feature_dim();
  map.data.assign(static_cast<std::size_t>(map.size_x) * map.size_y * map.channels, 0.0);
  const int d = grid.feature_dim();
  for (int i = 0; i < grid.size(); ++i) {
    const Coord3 c = grid.coord(i);
    const auto f = grid.feature(i);
    double* cell = map.data.data() +
                   (static_cast<std::size_t>(c.x) * map.size_y + c.y) * map.channels +
                   static_cast<std::size_t>(c.z) * d;
    std::copy(f.begin(), f.end(), cell);
  }
  return map;
}

}  // namespace hmt
