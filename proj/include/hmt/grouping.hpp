#pragma once

// The two grouping layouts. The sequence path splits a globally sorted voxel
// sequence into equal-size groups whose adjacent overlaps differ by at most
// one; the window path splits each window's curve-sorted members into
// fixed-size padded groups with validity masks.

#include <algorithm>
#include <array>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmt/curves.hpp"
#include "hmt/voxel_grid.hpp"

namespace hmt {

/// Start offsets and adjacent-pair overlaps of equal-size groups over a
/// sorted sequence of `total` positions.
struct GroupLayout {
  int group_size = 0;  // effective size, min(m, total)
  int total = 0;
  std::vector<int> starts;
  std::vector<int> overlaps;

  int group_count() const { return static_cast<int>(starts.size()); }
};

/// G = ceil(L/m) groups of exactly min(m, L) positions covering [0, L). The
/// excess G*m - L is spread over the G-1 adjacent pairs as overlaps that
/// differ by at most one, larger overlaps on earlier pairs.
inline GroupLayout equal_overlap_groups(int total, int group_size) {
  if (total < 0) throw std::invalid_argument("equal_overlap_groups: negative length");
  if (group_size < 1) throw std::invalid_argument("equal_overlap_groups: group size must be >= 1");
  GroupLayout layout;
  layout.total = total;
  if (total == 0) return layout;
  layout.group_size = std::min(group_size, total);
  const int count = (total + group_size - 1) / group_size;
  if (count == 1) {
    layout.starts = {0};
    return layout;
  }
  const int excess = count * group_size - total;
  const int pairs = count - 1;
  const int base = excess / pairs;
  const int extra = excess % pairs;
  layout.overlaps.resize(pairs);
  layout.starts.resize(count);
  layout.starts[0] = 0;
  for (int i = 0; i < pairs; ++i) {
    layout.overlaps[i] = base + (i < extra ? 1 : 0);
    layout.starts[i + 1] = layout.starts[i] + group_size - layout.overlaps[i];
  }
  return layout;
}

struct VoxelWindow {
  Coord3 window_id;
  std::vector<std::int32_t> members;  // voxel ids, ascending
};

/// Disjoint 3D windows of `window_shape` cells; a voxel belongs to the
/// window given by floored division of its coordinate.
struct WindowPartition {
  std::array<int, 3> window_shape{};
  std::vector<VoxelWindow> windows;  // sorted by window id
};

inline Coord3 window_id_of(Coord3 c, std::array<int, 3> shape) {
  return {c.x / shape[0], c.y / shape[1], c.z / shape[2]};
}

inline WindowPartition window_partition(const SparseVoxelGrid& grid, std::array<int, 3> shape) {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw std::invalid_argument("window_partition: window shape must be positive");
  }
  std::map<Coord3, std::vector<std::int32_t>> buckets;
  for (int i = 0; i < grid.size(); ++i) {
    buckets[window_id_of(grid.coord(i), shape)].push_back(i);
  }
  WindowPartition part;
  part.window_shape = shape;
  part.windows.reserve(buckets.size());
  for (auto& [id, members] : buckets) part.windows.push_back({id, std::move(members)});
  return part;
}

/// Fixed-size groups over one window's members under one curve ordering.
/// slots holds group_count * group_size voxel ids, -1 where padded; mask is
/// true exactly on real slots.
struct PaddedGroupBatch {
  int group_size = 0;
  CurveKind order = CurveKind::Hilbert;
  int group_count = 0;
  std::vector<std::int32_t> slots;
  std::vector<std::uint8_t> mask;

  std::span<const std::int32_t> group_slots(int g) const {
    return {slots.data() + static_cast<std::size_t>(g) * group_size,
            static_cast<std::size_t>(group_size)};
  }
  std::span<const std::uint8_t> group_mask(int g) const {
    return {mask.data() + static_cast<std::size_t>(g) * group_size,
            static_cast<std::size_t>(group_size)};
  }
};

/// Sorts the window's members along the curve (in window-local coordinates),
/// splits them into ceil(l/g) contiguous parts whose sizes differ by at most
/// one (earlier parts take the extra member), and pads each part to g with
/// masked tail slots.
inline PaddedGroupBatch group_within_window(const SparseVoxelGrid& grid, const VoxelWindow& window,
                                            std::array<int, 3> window_shape, CurveKind order,
                                            int order_bits, int group_size) {
  if (group_size < 1) throw std::invalid_argument("group_within_window: group size must be >= 1");
  if (order != CurveKind::Hilbert && order != CurveKind::TransHilbert)
    throw std::invalid_argument("group_within_window: expects a Hilbert ordering");

  PaddedGroupBatch batch;
  batch.group_size = group_size;
  batch.order = order;
  const int count = static_cast<int>(window.members.size());
  if (count == 0) return batch;

  const Coord3 origin{window.window_id.x * window_shape[0], window.window_id.y * window_shape[1],
                      window.window_id.z * window_shape[2]};
  std::vector<Coord3> local(count);
  for (int i = 0; i < count; ++i) {
    const Coord3 c = grid.coord(window.members[i]);
    local[i] = {c.x - origin.x, c.y - origin.y, c.z - origin.z};
  }
  const std::vector<std::int32_t> perm = sequence_voxels(local, {order, order_bits});

  const int groups = (count + group_size - 1) / group_size;
  const int base = count / groups;
  const int extra = count % groups;
  batch.group_count = groups;
  batch.slots.assign(static_cast<std::size_t>(groups) * group_size, -1);
  batch.mask.assign(static_cast<std::size_t>(groups) * group_size, 0);
  int cursor = 0;
  for (int g = 0; g < groups; ++g) {
    const int real = base + (g < extra ? 1 : 0);
    for (int s = 0; s < real; ++s) {
      const std::size_t slot = static_cast<std::size_t>(g) * group_size + s;
      batch.slots[slot] = window.members[perm[cursor++]];
      batch.mask[slot] = 1;
    }
  }
  return batch;
}

}  // namespace hmt
