#pragma once

// Physics-inspired voxel generation: every occupied voxel diffuses three
// candidates away from the sensor in the XY plane, the union of initial and
// candidate sites is convolved with a submanifold sparse kernel, candidates
// are scored and the top-P join the grid alongside the convolved initial
// voxels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmt/numerics.hpp"
#include "hmt/parallel.hpp"
#include "hmt/voxel_grid.hpp"

namespace hmt {

/// Sensor position expressed in the grid's (fractional) voxel coordinate
/// frame.
struct SensorPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static SensorPose from_world(std::array<double, 3> world, const GridSpec& spec) {
    SensorPose p;
    p.x = (world[0] - spec.range_min[0]) / spec.voxel_size[0];
    p.y = (world[1] - spec.range_min[1]) / spec.voxel_size[1];
    p.z = (world[2] - spec.range_min[2]) / spec.voxel_size[2];
    return p;
  }
};

/// Diffusion direction signs; sign(0) is +1 so a voxel exactly on a sensor
/// axis still diffuses.
inline std::int32_t diffusion_sign(double delta) { return delta < 0.0 ? -1 : 1; }

/// The three candidate coordinates of a voxel: one step along X, one along
/// Y, one along both, each moving away from the sensor. No Z component.
inline std::array<Coord3, 3> diffusion_offsets(Coord3 c, const SensorPose& sensor) {
  const std::int32_t rx = diffusion_sign(static_cast<double>(c.x) - sensor.x);
  const std::int32_t ry = diffusion_sign(static_cast<double>(c.y) - sensor.y);
  return {Coord3{c.x + rx, c.y, c.z}, Coord3{c.x, c.y + ry, c.z}, Coord3{c.x + rx, c.y + ry, c.z}};
}

/// As above, but with candidates outside the grid extents dropped.
inline std::vector<Coord3> diffusion_offsets(Coord3 c, const SensorPose& sensor,
                                             const GridSpec& spec) {
  std::vector<Coord3> out;
  out.reserve(3);
  for (const Coord3& cand : diffusion_offsets(c, sensor)) {
    if (spec.contains(cand)) out.push_back(cand);
  }
  return out;
}

/// Candidate voxels produced by diffusion. Features start as copies of the
/// parent feature; after convolution they are replaced by the convolved
/// values that scoring sees. raw_count is the candidate count before
/// deduplication (and after extent clipping and collision removal).
struct DiffusedVoxelSet {
  int feature_dim = 0;
  int raw_count = 0;
  std::vector<Coord3> coords;        // unique, ascending
  std::vector<std::int32_t> parents;  // lowest parent id per candidate
  std::vector<double> features;       // size() x feature_dim
  std::vector<double> scores;
  std::vector<std::uint8_t> selected;

  int size() const { return static_cast<int>(coords.size()); }
  std::span<const double> feature(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * feature_dim,
            static_cast<std::size_t>(feature_dim)};
  }
  std::span<double> feature(int i) {
    return {features.data() + static_cast<std::size_t>(i) * feature_dim,
            static_cast<std::size_t>(feature_dim)};
  }
};

/// Diffuses every occupied voxel, drops candidates that leave the grid or
/// land on an occupied cell, and merges duplicate coordinates by
/// element-wise max feature, keeping the lowest parent id.
inline DiffusedVoxelSet diffuse_voxels(const SparseVoxelGrid& grid, const SensorPose& sensor) {
  DiffusedVoxelSet set;
  set.feature_dim = grid.feature_dim();

  std::vector<std::pair<Coord3, std::int32_t>> cands;
  cands.reserve(static_cast<std::size_t>(grid.size()) * 3);
  for (int i = 0; i < grid.size(); ++i) {
    for (const Coord3& cand : diffusion_offsets(grid.coord(i), sensor)) {
      if (!grid.spec.contains(cand)) continue;
      if (grid.find(cand) >= 0) continue;
      cands.emplace_back(cand, i);
    }
  }
  set.raw_count = static_cast<int>(cands.size());
  std::sort(cands.begin(), cands.end());

  const int dim = set.feature_dim;
  for (std::size_t i = 0; i < cands.size();) {
    const Coord3 c = cands[i].first;
    set.coords.push_back(c);
    set.parents.push_back(cands[i].second);
    const std::size_t base = set.features.size();
    const auto f0 = grid.feature(cands[i].second);
    set.features.insert(set.features.end(), f0.begin(), f0.end());
    for (++i; i < cands.size() && cands[i].first == c; ++i) {
      const auto f = grid.feature(cands[i].second);
      for (int k = 0; k < dim; ++k)
        set.features[base + k] = std::max(set.features[base + k], f[k]);
    }
  }
  set.scores.assign(set.coords.size(), 0.0);
  set.selected.assign(set.coords.size(), 0);
  return set;
}

/// 3x3x3 convolution weights, laid out offset-major: w(dx, dy, dz, ci, co)
/// with each offset component in {-1, 0, +1}.
struct ConvKernel {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weights;  // 27 * in_dim * out_dim
  std::vector<double> bias;     // out_dim

  static int offset_index(int dx, int dy, int dz) {
    return ((dx + 1) * 3 + (dy + 1)) * 3 + (dz + 1);
  }

  double& w(int dx, int dy, int dz, int ci, int co) {
    return weights[(static_cast<std::size_t>(offset_index(dx, dy, dz)) * in_dim + ci) * out_dim +
                   co];
  }
  double w(int dx, int dy, int dz, int ci, int co) const {
    return weights[(static_cast<std::size_t>(offset_index(dx, dy, dz)) * in_dim + ci) * out_dim +
                   co];
  }

  static ConvKernel random(int in_dim, int out_dim, Rng& rng) {
    ConvKernel k;
    k.in_dim = in_dim;
    k.out_dim = out_dim;
    const double s = 1.0 / std::sqrt(27.0 * in_dim);
    k.weights.resize(static_cast<std::size_t>(27) * in_dim * out_dim);
    for (double& v : k.weights) v = rng.uniform(-s, s);
    k.bias.assign(out_dim, 0.0);
    return k;
  }

  /// Center tap is the identity, everything else zero.
  static ConvKernel identity(int dim) {
    ConvKernel k;
    k.in_dim = dim;
    k.out_dim = dim;
    k.weights.assign(static_cast<std::size_t>(27) * dim * dim, 0.0);
    k.bias.assign(dim, 0.0);
    for (int c = 0; c < dim; ++c) k.w(0, 0, 0, c, c) = 1.0;
    return k;
  }
};

/// Submanifold sparse convolution: output sites equal input sites; each
/// output feature sums the kernel taps over occupied neighbors only.
inline SparseVoxelGrid subm_sparse_conv(const SparseVoxelGrid& grid, const ConvKernel& kernel) {
  if (kernel.in_dim != grid.feature_dim())
    throw std::invalid_argument("subm_sparse_conv: kernel input dim mismatch");
  if (static_cast<int>(kernel.bias.size()) != kernel.out_dim)
    throw std::invalid_argument("subm_sparse_conv: bias length mismatch");

  Matrix out(grid.size(), kernel.out_dim);
  parallel_for(grid.size(), [&](int i) {
    const Coord3 c = grid.coord(i);
    auto orow = out.row(i);
    std::copy(kernel.bias.begin(), kernel.bias.end(), orow.begin());
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const std::int32_t j = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (j < 0) continue;
          const auto f = grid.feature(j);
          const std::size_t tap =
              static_cast<std::size_t>(ConvKernel::offset_index(dx, dy, dz)) * kernel.in_dim *
              kernel.out_dim;
          for (int ci = 0; ci < kernel.in_dim; ++ci) {
            const double x = f[ci];
            const double* wrow = kernel.weights.data() + tap +
                                 static_cast<std::size_t>(ci) * kernel.out_dim;
            for (int co = 0; co < kernel.out_dim; ++co) orow[co] += x * wrow[co];
          }
        }
      }
    }
  });

  SparseVoxelGrid result(grid.spec, kernel.out_dim);
  for (int i = 0; i < grid.size(); ++i) result.insert(grid.coord(i), out.row(i));
  return result;
}

/// Sigmoid of a linear map of the candidate feature.
struct ScoreParams {
  std::vector<double> w;
  double bias = 0.0;

  static ScoreParams init(int dim, Rng& rng) {
    ScoreParams p;
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    p.w.resize(dim);
    for (double& v : p.w) v = rng.uniform(-s, s);
    p.bias = 0.0;
    return p;
  }
};

/// Scores every candidate, then keeps the P = max(1, floor(L_d * r)) best
/// (ties by ascending coordinate). Fills scores and selected flags; returns
/// the selected candidate indices in ascending coordinate order.
inline std::vector<std::int32_t> score_and_select(DiffusedVoxelSet& set, double ratio,
                                                  const ScoreParams& score) {
  if (!(ratio > 0.0) || ratio > 1.0)
    throw std::invalid_argument("score_and_select: ratio must be in (0, 1]");
  if (static_cast<int>(score.w.size()) != set.feature_dim)
    throw std::invalid_argument("score_and_select: score weight dim mismatch");

  const int count = set.size();
  set.selected.assign(count, 0);
  set.scores.assign(count, 0.0);
  if (count == 0) return {};
  for (int i = 0; i < count; ++i) {
    const auto f = set.feature(i);
    double z = score.bias;
    for (int k = 0; k < set.feature_dim; ++k) z += score.w[k] * f[k];
    set.scores[i] = 1.0 / (1.0 + std::exp(-z));
  }

  const int keep = std::max(1, static_cast<int>(std::floor(static_cast<double>(count) * ratio)));
  std::vector<std::int32_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (set.scores[a] != set.scores[b]) return set.scores[a] > set.scores[b];
    return set.coords[a] < set.coords[b];
  });
  order.resize(keep);
  for (std::int32_t i : order) set.selected[i] = 1;
  std::sort(order.begin(), order.end());
  return order;
}

/// Full generation block. The union of initial and candidate sites is
/// convolved once; initial voxels take their convolved features and the
/// top-P candidates are appended (in ascending coordinate order) with
/// theirs. Initial occupancy is never removed. When `audit` is given it
/// receives the scored candidate set for inspection.
inline SparseVoxelGrid voxel_generation_block(const SparseVoxelGrid& grid,
                                              const SensorPose& sensor, double ratio,
                                              const ConvKernel& kernel, const ScoreParams& score,
                                              DiffusedVoxelSet* audit = nullptr) {
  if (grid.empty()) {
    if (audit) *audit = DiffusedVoxelSet{grid.feature_dim(), 0, {}, {}, {}, {}, {}};
    return grid;
  }
  if (kernel.in_dim != grid.feature_dim() || kernel.out_dim != grid.feature_dim())
    throw std::invalid_argument("voxel_generation_block: kernel must preserve feature dim");

  DiffusedVoxelSet set = diffuse_voxels(grid, sensor);

  SparseVoxelGrid unioned(grid.spec, grid.feature_dim());
  for (int i = 0; i < grid.size(); ++i) unioned.insert(grid.coord(i), grid.feature(i));
  for (int i = 0; i < set.size(); ++i) unioned.insert(set.coords[i], set.feature(i));

  const SparseVoxelGrid convolved = subm_sparse_conv(unioned, kernel);
  for (int i = 0; i < set.size(); ++i) {
    const auto f = convolved.feature(grid.size() + i);
    std::copy(f.begin(), f.end(), set.feature(i).begin());
  }

  const std::vector<std::int32_t> chosen = score_and_select(set, ratio, score);

  SparseVoxelGrid out(grid.spec, grid.feature_dim());
  for (int i = 0; i < grid.size(); ++i) out.insert(grid.coord(i), convolved.feature(i));
  for (std::int32_t i : chosen) out.insert(set.coords[i], set.feature(i));
  if (audit) *audit = std::move(set);
  return out;
}

}  // namespace hmt
