// Built-in oracle sweep behind `hmt selftest`: each module's core operation
// is checked against an independent brute-force computation. Exits nonzero
// on the first failing group.

#include <cmath>
#include <iostream>
#include <set>
#include <vector>

#include "hmt/hmt.hpp"

namespace {

using namespace hmt;

int failures = 0;

void check(bool ok, const char* name) {
  std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << '\n';
  if (!ok) ++failures;
}

bool check_matmul() {
  Rng rng(1001);
  const Matrix a = Matrix::random_uniform(7, 5, rng, -2, 2);
  const Matrix b = Matrix::random_uniform(5, 3, rng, -2, 2);
  const Matrix out = matmul(a, b);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 3; ++j) {
      double sum = 0.0;
      for (int k = 0; k < 5; ++k) sum += a.at(i, k) * b.at(k, j);
      if (std::abs(out.at(i, j) - sum) > 1e-12) return false;
    }
  }
  return true;
}

bool check_masked_softmax() {
  Rng rng(1002);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> logits(8);
    std::vector<std::uint8_t> mask(8);
    for (int i = 0; i < 8; ++i) {
      logits[i] = rng.uniform(-5, 5);
      mask[i] = rng.uniform() < 0.6 ? 1 : 0;
    }
    mask[0] = 1;
    const auto w = softmax_masked(logits, mask);
    double denom = 0.0;
    for (int i = 0; i < 8; ++i) {
      if (mask[i]) denom += std::exp(logits[i]);
    }
    for (int i = 0; i < 8; ++i) {
      const double expect = mask[i] ? std::exp(logits[i]) / denom : 0.0;
      if (std::abs(w[i] - expect) > 1e-9) return false;
    }
  }
  return true;
}

bool check_hilbert() {
  for (int bits = 1; bits <= 3; ++bits) {
    const std::uint64_t cells = std::uint64_t{1} << (3 * bits);
    std::set<std::uint64_t> seen;
    Coord3 prev{};
    for (std::uint64_t i = 0; i < cells; ++i) {
      const Coord3 c = hilbert_coord(i, bits);
      if (hilbert_index(c, bits) != i) return false;
      if (!seen.insert(pack_coord(c)).second) return false;
      if (i > 0) {
        const int dist = std::abs(c.x - prev.x) + std::abs(c.y - prev.y) + std::abs(c.z - prev.z);
        if (dist != 1) return false;
      }
      prev = c;
    }
  }
  return true;
}

bool check_grouping() {
  for (int total = 0; total <= 64; ++total) {
    for (int m = 1; m <= 16; ++m) {
      const GroupLayout lay = equal_overlap_groups(total, m);
      if (total == 0) {
        if (lay.group_count() != 0) return false;
        continue;
      }
      if (lay.group_count() != (total + m - 1) / m) return false;
      std::vector<int> hits(total, 0);
      for (int start : lay.starts) {
        if (start < 0 || start + lay.group_size > total) return false;
        for (int i = 0; i < lay.group_size; ++i) hits[start + i] += 1;
      }
      for (int h : hits) {
        if (h < 1) return false;
      }
      if (lay.starts.back() + lay.group_size != total) return false;
      if (!lay.overlaps.empty()) {
        int lo = lay.overlaps[0], hi = lay.overlaps[0];
        for (int o : lay.overlaps) {
          lo = std::min(lo, o);
          hi = std::max(hi, o);
        }
        if (hi - lo > 1) return false;
      }
    }
  }
  return true;
}

bool check_scan() {
  Rng rng(1003);
  for (int rep = 0; rep < 20; ++rep) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 6);
    const int states = 1 + static_cast<int>(rng.next_u64() % 6);
    const int steps = 1 + static_cast<int>(rng.next_u64() % 40);
    ScanParams p;
    p.decay = Matrix(dim, states);
    for (double& v : p.decay.data) v = -rng.uniform(0.1, 3.0);
    p.w_delta = Matrix::random_uniform(dim, dim, rng, -0.5, 0.5);
    p.b_delta.assign(dim, 0.0);
    p.w_b = Matrix::random_uniform(dim, states, rng, -0.5, 0.5);
    p.w_c = Matrix::random_uniform(dim, states, rng, -0.5, 0.5);
    p.skip.assign(dim, 1.0);
    const Matrix tokens = Matrix::random_uniform(steps, dim, rng, -1, 1);
    const Matrix fast = selective_scan(tokens, p, ScanDirection::Forward);

    std::vector<std::vector<double>> h(dim, std::vector<double>(states, 0.0));
    for (int t = 0; t < steps; ++t) {
      for (int c = 0; c < dim; ++c) {
        double raw = 0.0;
        for (int k = 0; k < dim; ++k) raw += tokens.at(t, k) * p.w_delta.at(k, c);
        const double dt = std::log1p(std::exp(raw));
        double y = 0.0;
        for (int j = 0; j < states; ++j) {
          double bj = 0.0, cj = 0.0;
          for (int k = 0; k < dim; ++k) {
            bj += tokens.at(t, k) * p.w_b.at(k, j);
            cj += tokens.at(t, k) * p.w_c.at(k, j);
          }
          h[c][j] = std::exp(dt * p.decay.at(c, j)) * h[c][j] + dt * bj * tokens.at(t, c);
          y += cj * h[c][j];
        }
        if (std::abs(fast.at(t, c) - (y + tokens.at(t, c))) > 1e-9) return false;
      }
    }
  }
  return true;
}

bool check_attention() {
  Rng rng(1004);
  const int g = 6, dk = 4;
  const Matrix q = Matrix::random_uniform(g, dk, rng, -1, 1);
  const Matrix k = Matrix::random_uniform(g, dk, rng, -1, 1);
  const Matrix v = Matrix::random_uniform(g, dk, rng, -1, 1);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 1};
  const Matrix out = scaled_dot_attention(q, k, v, mask);
  for (int i = 0; i < g; ++i) {
    double denom = 0.0;
    std::vector<double> weights(g, 0.0);
    for (int j = 0; j < g; ++j) {
      if (!mask[j]) continue;
      double dot = 0.0;
      for (int c = 0; c < dk; ++c) dot += q.at(i, c) * k.at(j, c);
      weights[j] = std::exp(dot / std::sqrt(static_cast<double>(dk)));
      denom += weights[j];
    }
    for (int c = 0; c < dk; ++c) {
      double acc = 0.0;
      for (int j = 0; j < g; ++j) acc += (weights[j] / denom) * v.at(j, c) * (mask[j] ? 1.0 : 0.0);
      if (std::abs(out.at(i, c) - acc) > 1e-9) return false;
    }
  }
  return true;
}

bool check_knn() {
  Rng rng(1005);
  std::vector<Coord3> coords;
  std::set<std::uint64_t> used;
  while (coords.size() < 40) {
    Coord3 c{static_cast<std::int32_t>(rng.next_u64() % 16),
             static_cast<std::int32_t>(rng.next_u64() % 16),
             static_cast<std::int32_t>(rng.next_u64() % 16)};
    if (used.insert(pack_coord(c)).second) coords.push_back(c);
  }
  const NeighborTable table = knn_neighbors(coords, 8);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::vector<std::pair<std::int64_t, int>> all;
    for (std::size_t j = 0; j < coords.size(); ++j) {
      if (i == j) continue;
      const std::int64_t dx = coords[j].x - coords[i].x;
      const std::int64_t dy = coords[j].y - coords[i].y;
      const std::int64_t dz = coords[j].z - coords[i].z;
      all.emplace_back(dx * dx + dy * dy + dz * dz, static_cast<int>(j));
    }
    std::sort(all.begin(), all.end());
    if (table.neighbors[i].size() != 7) return false;
    for (int t = 0; t < 7; ++t) {
      if (table.neighbors[i][t].id != all[t].second) return false;
    }
  }
  return true;
}

bool check_conv() {
  Rng rng(1006);
  const GridSpec spec = GridSpec::make({0, 0, 0}, {10, 10, 6}, {1, 1, 1});
  SparseVoxelGrid grid(spec, 3);
  std::set<std::uint64_t> used;
  while (grid.size() < 30) {
    Coord3 c{static_cast<std::int32_t>(rng.next_u64() % 10),
             static_cast<std::int32_t>(rng.next_u64() % 10),
             static_cast<std::int32_t>(rng.next_u64() % 6)};
    if (!used.insert(pack_coord(c)).second) continue;
    grid.insert(c, std::vector<double>{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  ConvKernel kernel = ConvKernel::random(3, 3, rng);
  const SparseVoxelGrid out = subm_sparse_conv(grid, kernel);
  for (int i = 0; i < out.size(); ++i) {
    const Coord3 c = out.coord(i);
    for (int co = 0; co < 3; ++co) {
      double acc = kernel.bias[co];
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dz = -1; dz <= 1; ++dz) {
            const std::int32_t j = grid.find({c.x + dx, c.y + dy, c.z + dz});
            if (j < 0) continue;
            for (int ci = 0; ci < 3; ++ci) acc += grid.feature(j)[ci] * kernel.w(dx, dy, dz, ci, co);
          }
        }
      }
      if (std::abs(out.feature(i)[co] - acc) > 1e-10) return false;
    }
  }
  return true;
}

bool check_selection() {
  Rng rng(1007);
  const GridSpec spec = GridSpec::make({0, 0, 0}, {20, 20, 4}, {1, 1, 1});
  SparseVoxelGrid grid(spec, 4);
  std::set<std::uint64_t> used;
  while (grid.size() < 25) {
    Coord3 c{static_cast<std::int32_t>(rng.next_u64() % 20),
             static_cast<std::int32_t>(rng.next_u64() % 20),
             static_cast<std::int32_t>(rng.next_u64() % 4)};
    if (!used.insert(pack_coord(c)).second) continue;
    std::vector<double> f(4);
    for (double& v : f) v = rng.uniform(-1, 1);
    grid.insert(c, f);
  }
  ConvKernel kernel = ConvKernel::random(4, 4, rng);
  ScoreParams score = ScoreParams::init(4, rng);
  DiffusedVoxelSet audit;
  const SparseVoxelGrid out =
      voxel_generation_block(grid, SensorPose{10, 10, 0}, 0.2, kernel, score, &audit);
  if (audit.raw_count > 3 * grid.size()) return false;
  const int expect =
      audit.size() > 0 ? std::max(1, static_cast<int>(std::floor(audit.size() * 0.2))) : 0;
  if (out.size() != grid.size() + expect) return false;
  for (int i = 0; i < grid.size(); ++i) {
    if (out.find(grid.coord(i)) < 0) return false;
  }
  return true;
}

bool check_voxelize() {
  Rng rng(1008);
  const GridSpec spec = GridSpec::make({0, -8, -2}, {16, 8, 2}, {0.5, 0.5, 0.25});
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    cloud.points.push_back({rng.uniform(-1, 17), rng.uniform(-9, 9), rng.uniform(-3, 3),
                            rng.uniform()});
  }
  Rng lift(1);
  const SparseVoxelGrid grid = voxelize(cloud, spec, 8, lift);
  std::set<std::uint64_t> oracle;
  for (const Point& p : cloud.points) {
    const double v[3] = {p.x, p.y, p.z};
    bool ok = true;
    Coord3 c;
    std::int32_t* idx[3] = {&c.x, &c.y, &c.z};
    for (int a = 0; a < 3; ++a) {
      if (v[a] < spec.range_min[a] || v[a] >= spec.range_max[a]) {
        ok = false;
        break;
      }
      *idx[a] = static_cast<std::int32_t>(std::floor((v[a] - spec.range_min[a]) / spec.voxel_size[a]));
    }
    if (ok) oracle.insert(pack_coord(c));
  }
  if (grid.size() != static_cast<int>(oracle.size())) return false;
  for (int i = 0; i < grid.size(); ++i) {
    if (oracle.count(pack_coord(grid.coord(i))) != 1) return false;
  }
  return true;
}

bool check_pipeline_determinism() {
  BackboneConfig cfg = BackboneConfig::kitti();
  cfg.profile = "custom";
  cfg.grid = GridSpec::make({0, 0, 0}, {32, 32, 8}, {1, 1, 1});
  cfg.feature_dim = 8;
  cfg.ssm_state_dim = 4;
  cfg.attn_heads = 2;
  cfg.block_count = 2;
  cfg.mamba_group_sizes = {16, 8};
  cfg.window_shape = {16, 16, 8};
  cfg.attn_group_size = 9;
  cfg.seed = 7;
  const PointCloud cloud = make_synthetic_scene(11, 300, cfg.grid);
  const ForwardResult a = backbone_forward(cloud, cfg);
  const ForwardResult b = backbone_forward(cloud, cfg);
  return a.report.bev_checksum == b.report.bev_checksum && !a.report.empty_scene;
}

}  // namespace

int run_selftest() {
  check(check_matmul(), "matmul vs triple-loop oracle");
  check(check_masked_softmax(), "masked softmax vs dense oracle");
  check(check_hilbert(), "hilbert bijectivity and unit steps (bits 1-3)");
  check(check_grouping(), "equal-overlap grouping constraints (L<=64, m<=16)");
  check(check_scan(), "selective scan vs naive recurrence");
  check(check_attention(), "masked attention vs explicit softmax");
  check(check_knn(), "knn tables vs all-pairs sort");
  check(check_conv(), "submanifold conv vs per-site gather");
  check(check_selection(), "generation counting laws");
  check(check_voxelize(), "voxelize occupancy vs independent binning");
  check(check_pipeline_determinism(), "two-run pipeline determinism");
  if (failures == 0) {
    std::cout << "selftest: all checks passed\n";
    return 0;
  }
  std::cout << "selftest: " << failures << " check(s) failed\n";
  return 1;
}
