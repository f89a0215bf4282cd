#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "hmt/curves.hpp"

using namespace hmt;

namespace {

int manhattan(Coord3 a, Coord3 b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z);
}

std::vector<Coord3> random_coords(Rng& rng, int n, int side) {
  std::vector<Coord3> out;
  std::set<std::uint64_t> seen;
  while (static_cast<int>(out.size()) < n) {
    Coord3 c{static_cast<std::int32_t>(rng.next_u64() % side),
             static_cast<std::int32_t>(rng.next_u64() % side),
             static_cast<std::int32_t>(rng.next_u64() % side)};
    if (seen.insert(pack_coord(c)).second) out.push_back(c);
  }
  return out;
}

}  // namespace

TEST_CASE("axis sort keys") {
  SECTION("AxisX orders by x first") {
    REQUIRE(axis_sort_key({0, 5, 1}, CurveKind::AxisX) < axis_sort_key({1, 0, 0}, CurveKind::AxisX));
  }
  SECTION("z runs low to high as the innermost key") {
    REQUIRE(axis_sort_key({2, 3, 1}, CurveKind::AxisX) < axis_sort_key({2, 3, 4}, CurveKind::AxisX));
    REQUIRE(axis_sort_key({3, 2, 1}, CurveKind::AxisY) < axis_sort_key({3, 2, 4}, CurveKind::AxisY));
  }
  SECTION("AxisY orders by y first") {
    REQUIRE(axis_sort_key({9, 0, 0}, CurveKind::AxisY) < axis_sort_key({0, 1, 0}, CurveKind::AxisY));
  }
  SECTION("curve kinds are rejected") {
    REQUIRE_THROWS_AS(axis_sort_key({0, 0, 0}, CurveKind::Hilbert), std::invalid_argument);
  }
}

TEST_CASE("sorting by axis key matches an independent comparison sort") {
  Rng rng(101);
  const std::vector<Coord3> coords = random_coords(rng, 200, 32);
  for (CurveKind kind : {CurveKind::AxisX, CurveKind::AxisY}) {
    const auto ids = sequence_voxels(coords, {kind, 0});

    // oracle: sort coordinate copies directly with the same comparator
    std::vector<Coord3> sorted = coords;
    std::sort(sorted.begin(), sorted.end(), [&](Coord3 a, Coord3 b) {
      return axis_sort_key(a, kind) < axis_sort_key(b, kind);
    });
    REQUIRE(ids.size() == coords.size());
    for (std::size_t i = 0; i < ids.size(); ++i) REQUIRE(coords[ids[i]] == sorted[i]);
  }
}

TEST_CASE("hilbert curve origin and bounds") {
  REQUIRE(hilbert_index({0, 0, 0}, 1) == 0);
  REQUIRE(hilbert_coord(0, 1) == Coord3{0, 0, 0});
  REQUIRE_THROWS_AS(hilbert_index({2, 0, 0}, 1), std::out_of_range);
  REQUIRE_THROWS_AS(hilbert_index({-1, 0, 0}, 3), std::out_of_range);
  REQUIRE_THROWS_AS(hilbert_coord(8, 1), std::out_of_range);
  REQUIRE_THROWS_AS(hilbert_index({0, 0, 0}, 0), std::out_of_range);
}

TEST_CASE("hilbert curve is a unit-step bijection at small orders") {
  for (int bits = 1; bits <= 4; ++bits) {
    const std::uint64_t cells = std::uint64_t{1} << (3 * bits);
    std::set<std::uint64_t> seen;
    Coord3 prev{};
    for (std::uint64_t idx = 0; idx < cells; ++idx) {
      const Coord3 c = hilbert_coord(idx, bits);
      REQUIRE(hilbert_index(c, bits) == idx);
      REQUIRE(seen.insert(pack_coord(c)).second);
      if (idx > 0 && bits <= 3) REQUIRE(manhattan(prev, c) == 1);
      prev = c;
    }
    REQUIRE(seen.size() == cells);
  }
}

TEST_CASE("trans-hilbert is the curve over swapped x and y") {
  for (int bits : {1, 2}) {
    const int side = 1 << bits;
    for (int x = 0; x < side; ++x) {
      for (int y = 0; y < side; ++y) {
        for (int z = 0; z < side; ++z) {
          REQUIRE(trans_hilbert_index({x, y, z}, bits) == hilbert_index({y, x, z}, bits));
        }
      }
    }
  }
}

TEST_CASE("trans-hilbert visits every cell once and differs from hilbert") {
  const int bits = 2;
  std::set<std::uint64_t> indices;
  std::vector<Coord3> cells;
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      for (int z = 0; z < 4; ++z) cells.push_back({x, y, z});
    }
  }
  for (Coord3 c : cells) REQUIRE(indices.insert(trans_hilbert_index(c, bits)).second);
  REQUIRE(indices.size() == 64);
  REQUIRE(*indices.rbegin() < 64);

  const auto h_order = sequence_voxels(cells, {CurveKind::Hilbert, bits});
  const auto ht_order = sequence_voxels(cells, {CurveKind::TransHilbert, bits});
  REQUIRE(h_order != ht_order);
}

TEST_CASE("sequence_voxels under hilbert matches a precomputed-index sort") {
  Rng rng(303);
  const std::vector<Coord3> coords = random_coords(rng, 50, 8);
  const auto ids = sequence_voxels(coords, {CurveKind::Hilbert, 3});

  std::vector<std::pair<std::uint64_t, std::int32_t>> keyed;
  for (std::size_t i = 0; i < coords.size(); ++i)
    keyed.emplace_back(hilbert_index(coords[i], 3), static_cast<std::int32_t>(i));
  std::sort(keyed.begin(), keyed.end());
  REQUIRE(ids.size() == keyed.size());
  for (std::size_t i = 0; i < ids.size(); ++i) REQUIRE(ids[i] == keyed[i].second);
}

TEST_CASE("sequence_voxels is total, duplicate free and idempotent") {
  SECTION("empty and singleton") {
    REQUIRE(sequence_voxels({}, {CurveKind::AxisX, 0}).empty());
    const std::vector<Coord3> one{{3, 2, 1}};
    const auto ids = sequence_voxels(one, {CurveKind::AxisY, 0});
    REQUIRE(ids == std::vector<std::int32_t>{0});
  }
  SECTION("random sets") {
    Rng rng(505);
    const std::vector<Coord3> coords = random_coords(rng, 120, 16);
    const auto ids = sequence_voxels(coords, {CurveKind::AxisX, 0});
    REQUIRE(ids.size() == coords.size());
    std::set<std::int32_t> unique(ids.begin(), ids.end());
    REQUIRE(unique.size() == ids.size());

    // sorting the already-sorted sequence changes nothing
    std::vector<Coord3> sorted_coords;
    for (auto id : ids) sorted_coords.push_back(coords[id]);
    const auto again = sequence_voxels(sorted_coords, {CurveKind::AxisX, 0});
    for (std::size_t i = 0; i < again.size(); ++i) REQUIRE(again[i] == static_cast<std::int32_t>(i));
  }
}
