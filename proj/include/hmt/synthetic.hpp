#pragma once

// Deterministic synthetic LiDAR scenes for demos and end-to-end tests:
// a ground plane, a handful of box-shaped clusters and some volume noise.
// All values are generated through float32 so a scene written with
// write_kitti_bin reads back bit-identically.

#include <algorithm>
#include <array>

#include "hmt/numerics.hpp"
#include "hmt/voxel_grid.hpp"

namespace hmt {

inline PointCloud make_synthetic_scene(std::uint64_t seed, int point_count, const GridSpec& spec) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(point_count);

  auto span = [&spec](int a) { return spec.range_max[a] - spec.range_min[a]; };
  auto emit = [&cloud](double x, double y, double z, double i) {
    cloud.points.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z),
                            static_cast<float>(i)});
  };

  constexpr int clusters = 8;
  std::array<std::array<double, 3>, clusters> centers;
  for (auto& c : centers) {
    for (int a = 0; a < 3; ++a) {
      c[a] = spec.range_min[a] + span(a) * (0.15 + 0.7 * rng.uniform());
    }
  }

  for (int i = 0; i < point_count; ++i) {
    const double pick = rng.uniform();
    if (pick < 0.6) {
      // ground plane near the bottom of the z range
      emit(spec.range_min[0] + span(0) * rng.uniform(),
           spec.range_min[1] + span(1) * rng.uniform(),
           spec.range_min[2] + span(2) * 0.05 * rng.uniform(), rng.uniform());
    } else if (pick < 0.9) {
      const auto& c = centers[static_cast<std::size_t>(rng.next_u64() % clusters)];
      emit(c[0] + span(0) * 0.02 * (rng.uniform() - 0.5),
           c[1] + span(1) * 0.02 * (rng.uniform() - 0.5),
           std::clamp(c[2] + span(2) * 0.1 * (rng.uniform() - 0.5),
                      spec.range_min[2], spec.range_max[2] - 1e-3),
           rng.uniform());
    } else {
      emit(spec.range_min[0] + span(0) * rng.uniform(),
           spec.range_min[1] + span(1) * rng.uniform(),
           spec.range_min[2] + span(2) * rng.uniform(), rng.uniform());
    }
  }
  return cloud;
}

}  // namespace hmt
