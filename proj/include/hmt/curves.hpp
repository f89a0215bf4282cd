#pragma once

// Orderings that turn sparse 3D voxel sets into 1D sequences: axis
// lexicographic sorts (z innermost, low to high) and the 3D Hilbert curve in
// its Gray-code transpose form, plus the transposed variant that runs the
// same curve over (y, x, z).

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmt/voxel_grid.hpp"

namespace hmt {

enum class CurveKind { AxisX, AxisY, Hilbert, TransHilbert };

struct CurveOrder {
  CurveKind kind = CurveKind::AxisX;
  int order_bits = 0;  // Hilbert kinds only; 2^order_bits must cover the window
};

/// Lexicographic sort key. AxisX orders by (x, y, z), AxisY by (y, x, z);
/// z is always the innermost, low-to-high key.
inline std::array<std::int32_t, 3> axis_sort_key(Coord3 c, CurveKind kind) {
  switch (kind) {
    case CurveKind::AxisX:
      return {c.x, c.y, c.z};
    case CurveKind::AxisY:
      return {c.y, c.x, c.z};
    default:
      throw std::invalid_argument("axis_sort_key: expects AxisX or AxisY");
  }
}

namespace detail {

inline void check_order_bits(int order_bits) {
  if (order_bits < 1 || order_bits > 20)
    throw std::out_of_range("hilbert: order_bits must be in [1, 20]");
}

}  // namespace detail

/// Hilbert index of a cell, bits per axis = order_bits. Gray-code transpose
/// construction (Skilling): convert axes to the transposed index form, then
/// interleave bits with axis x most significant.
inline std::uint64_t hilbert_index(Coord3 c, int order_bits) {
  detail::check_order_bits(order_bits);
  const std::uint32_t limit = 1u << order_bits;
  if (c.x < 0 || c.y < 0 || c.z < 0 || static_cast<std::uint32_t>(c.x) >= limit ||
      static_cast<std::uint32_t>(c.y) >= limit || static_cast<std::uint32_t>(c.z) >= limit)
    throw std::out_of_range("hilbert_index: coordinate outside [0, 2^order_bits)");

  std::uint32_t ax[3] = {static_cast<std::uint32_t>(c.x), static_cast<std::uint32_t>(c.y),
                         static_cast<std::uint32_t>(c.z)};
  // inverse undo
  for (std::uint32_t q = 1u << (order_bits - 1); q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < 3; ++i) {
      if (ax[i] & q) {
        ax[0] ^= p;
      } else {
        const std::uint32_t t = (ax[0] ^ ax[i]) & p;
        ax[0] ^= t;
        ax[i] ^= t;
      }
    }
  }
  // Gray encode
  for (int i = 1; i < 3; ++i) ax[i] ^= ax[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = 1u << (order_bits - 1); q > 1; q >>= 1) {
    if (ax[2] & q) t ^= q - 1;
  }
  for (int i = 0; i < 3; ++i) ax[i] ^= t;

  std::uint64_t h = 0;
  for (int bit = order_bits - 1; bit >= 0; --bit) {
    for (int i = 0; i < 3; ++i) h = (h << 1) | ((ax[i] >> bit) & 1u);
  }
  return h;
}

/// Exact inverse of hilbert_index.
inline Coord3 hilbert_coord(std::uint64_t index, int order_bits) {
  detail::check_order_bits(order_bits);
  if (index >= (std::uint64_t{1} << (3 * order_bits)))
    throw std::out_of_range("hilbert_coord: index outside [0, 2^(3*order_bits))");

  std::uint32_t ax[3] = {0, 0, 0};
  for (int bit = order_bits - 1; bit >= 0; --bit) {
    for (int i = 0; i < 3; ++i) {
      const int shift = 3 * bit + (2 - i);
      ax[i] |= static_cast<std::uint32_t>((index >> shift) & 1u) << bit;
    }
  }
  // Gray decode
  std::uint32_t t = ax[2] >> 1;
  for (int i = 2; i > 0; --i) ax[i] ^= ax[i - 1];
  ax[0] ^= t;
  // undo excess work
  const std::uint32_t top = 2u << (order_bits - 1);
  for (std::uint32_t q = 2; q != top; q <<= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 2; i >= 0; --i) {
      if (ax[i] & q) {
        ax[0] ^= p;
      } else {
        const std::uint32_t tt = (ax[0] ^ ax[i]) & p;
        ax[0] ^= tt;
        ax[i] ^= tt;
      }
    }
  }
  return {static_cast<std::int32_t>(ax[0]), static_cast<std::int32_t>(ax[1]),
          static_cast<std::int32_t>(ax[2])};
}

/// The same curve over axis-permuted coordinates (y, x, z).
inline std::uint64_t trans_hilbert_index(Coord3 c, int order_bits) {
  return hilbert_index({c.y, c.x, c.z}, order_bits);
}

/// Stable sort of voxel ids (positions in `coords`) by the order's key; ties
/// keep the original id order. Hilbert kinds expect window-local coordinates.
inline std::vector<std::int32_t> sequence_voxels(std::span<const Coord3> coords,
                                                 CurveOrder order) {
  std::vector<std::int32_t> ids(coords.size());
  std::iota(ids.begin(), ids.end(), 0);
  if (order.kind == CurveKind::AxisX || order.kind == CurveKind::AxisY) {
    std::stable_sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
      return axis_sort_key(coords[a], order.kind) < axis_sort_key(coords[b], order.kind);
    });
    return ids;
  }
  std::vector<std::uint64_t> keys(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    keys[i] = order.kind == CurveKind::Hilbert ? hilbert_index(coords[i], order.order_bits)
                                               : trans_hilbert_index(coords[i], order.order_bits);
  }
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::int32_t a, std::int32_t b) { return keys[a] < keys[b]; });
  return ids;
}

}  // namespace hmt
