#pragma once

// Backbone assembly: each block runs SSM(X) -> grouped transformer ->
// SSM(Y) -> voxel generation, blocks are chained with Z compression in
// between, and the final grid is flattened into a dense BEV map. All weights
// derive deterministically from the config seed.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmt/attention.hpp"
#include "hmt/curves.hpp"
#include "hmt/numerics.hpp"
#include "hmt/ssm.hpp"
#include "hmt/voxel_gen.hpp"
#include "hmt/voxel_grid.hpp"

namespace hmt {

struct BackboneConfig {
  int block_count = 5;
  std::vector<int> mamba_group_sizes{4096, 2048, 1024, 512, 512};
  std::array<int, 3> window_shape{64, 64, 32};
  int attn_group_size = 90;
  int knn_k = 8;
  double gen_ratio = 0.2;
  int feature_dim = 64;
  int ssm_state_dim = 16;
  int attn_heads = 4;
  std::string profile = "kitti";
  std::uint64_t seed = 0;
  GridSpec grid;
  std::array<double, 3> sensor_world{0.0, 0.0, 0.0};

  static BackboneConfig kitti() {
    BackboneConfig c;
    c.profile = "kitti";
    c.feature_dim = 64;
    c.grid = GridSpec::make({0.0, -40.0, -3.0}, {70.4, 40.0, 1.0}, {0.2, 0.2, 0.125});
    return c;
  }

  static BackboneConfig once() {
    BackboneConfig c;
    c.profile = "once";
    c.feature_dim = 128;
    c.grid = GridSpec::make({-75.2, -75.2, -5.0}, {75.2, 75.2, 3.0}, {0.4, 0.4, 0.25});
    return c;
  }

  void validate() const {
    if (block_count < 1) throw std::invalid_argument("config: block_count must be >= 1");
    if (static_cast<int>(mamba_group_sizes.size()) != block_count)
      throw std::invalid_argument("config: need one mamba group size per block");
    for (int m : mamba_group_sizes) {
      if (m < 1) throw std::invalid_argument("config: mamba group sizes must be positive");
    }
    for (int t : window_shape) {
      if (t < 1) throw std::invalid_argument("config: window shape must be positive");
    }
    if (attn_group_size < 1) throw std::invalid_argument("config: attn_group_size must be >= 1");
    if (knn_k < 2) throw std::invalid_argument("config: knn_k must be >= 2");
    if (!(gen_ratio > 0.0) || gen_ratio > 1.0)
      throw std::invalid_argument("config: gen_ratio must be in (0, 1]");
    if (feature_dim < 4) throw std::invalid_argument("config: feature_dim must be >= 4");
    if (ssm_state_dim < 1) throw std::invalid_argument("config: ssm_state_dim must be >= 1");
    if (attn_heads < 1 || feature_dim % attn_heads != 0)
      throw std::invalid_argument("config: attn_heads must divide feature_dim");
  }
};

/// All weights of one block.
struct BlockParams {
  SerializedMambaParams mamba_x;
  SerializedMambaParams mamba_y;
  GtbParams gtb;
  ConvKernel vgb_kernel;
  ScoreParams vgb_score;
};

struct BackboneParams {
  std::vector<BlockParams> blocks;
  std::vector<Matrix> z_projections;  // block_count - 1 maps
};

inline BackboneParams init_backbone_params(const BackboneConfig& config) {
  config.validate();
  const Rng root(config.seed);
  BackboneParams params;
  params.blocks.resize(config.block_count);
  for (int b = 0; b < config.block_count; ++b) {
    const Rng rb = root.fork("block" + std::to_string(b));
    BlockParams& block = params.blocks[b];
    block.mamba_x =
        init_serialized_mamba_params(config.feature_dim, config.ssm_state_dim, rb.fork("mamba_x"));
    block.mamba_y =
        init_serialized_mamba_params(config.feature_dim, config.ssm_state_dim, rb.fork("mamba_y"));
    block.gtb = init_gtb_params(config.feature_dim, config.attn_heads, rb.fork("gtb"));
    Rng rk = rb.fork("vgb_kernel");
    block.vgb_kernel = ConvKernel::random(config.feature_dim, config.feature_dim, rk);
    Rng rs = rb.fork("vgb_score");
    block.vgb_score = ScoreParams::init(config.feature_dim, rs);
  }
  params.z_projections.reserve(std::max(0, config.block_count - 1));
  for (int b = 0; b + 1 < config.block_count; ++b) {
    Rng rz = root.fork("z_proj" + std::to_string(b));
    params.z_projections.push_back(Matrix::fan_in_init(config.feature_dim, config.feature_dim, rz));
  }
  return params;
}

/// Settings one block actually uses.
struct BlockConfig {
  int mamba_group_size = 1;
  std::array<int, 3> window_shape{1, 1, 1};
  int attn_group_size = 1;
  int knn_k = 2;
  double gen_ratio = 1.0;
  std::array<double, 3> sensor_world{0.0, 0.0, 0.0};
};

inline BlockConfig block_config(const BackboneConfig& config, int block_index) {
  if (block_index < 0 || block_index >= static_cast<int>(config.mamba_group_sizes.size()))
    throw std::out_of_range("block_config: block index out of range");
  return {config.mamba_group_sizes[block_index], config.window_shape, config.attn_group_size,
          config.knn_k,                          config.gen_ratio,    config.sensor_world};
}

struct BlockReport {
  int voxels_in = 0;
  int voxels_out = 0;
  int diffused_raw = 0;
  int diffused_unique = 0;
  int selected = 0;
  int z_extent_after = 0;
  double millis = 0.0;
};

struct RunReport {
  BackboneConfig config;
  bool empty_scene = false;
  int input_points = 0;
  int initial_voxels = 0;
  std::vector<BlockReport> blocks;
  int bev_x = 0;
  int bev_y = 0;
  int bev_channels = 0;
  std::string bev_checksum;
  double total_millis = 0.0;
};

/// One backbone block: SSM along X, grouped transformer, SSM along Y, voxel
/// generation. Occupancy can only grow.
inline SparseVoxelGrid hmt_block(const SparseVoxelGrid& grid, const BlockParams& params,
                                 const BlockConfig& config, BlockReport* report = nullptr,
                                 DiffusedVoxelSet* audit = nullptr) {
  if (grid.empty()) throw std::invalid_argument("hmt_block: empty grid");
  const auto started = std::chrono::steady_clock::now();

  SparseVoxelGrid g =
      serialized_mamba_block(grid, CurveKind::AxisX, config.mamba_group_size, params.mamba_x);
  g = grouped_transformer_block(g, config.window_shape, config.attn_group_size, config.knn_k,
                                params.gtb);
  g = serialized_mamba_block(g, CurveKind::AxisY, config.mamba_group_size, params.mamba_y);
  const SensorPose sensor = SensorPose::from_world(config.sensor_world, g.spec);
  DiffusedVoxelSet set;
  g = voxel_generation_block(g, sensor, config.gen_ratio, params.vgb_kernel, params.vgb_score,
                             &set);

  if (report) {
    report->voxels_in = grid.size();
    report->voxels_out = g.size();
    report->diffused_raw = set.raw_count;
    report->diffused_unique = set.size();
    report->selected = g.size() - grid.size();
    report->z_extent_after = g.spec.extents[2];
    report->millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               started)
                         .count();
  }
  if (audit) *audit = std::move(set);
  return g;
}

/// FNV-1a over the BEV header and the little-endian bytes of every value.
inline std::uint64_t bev_checksum(const BevMap& map) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      h ^= (v >> (8 * i)) & 0xffull;
      h *= 0x100000001b3ull;
    }
  };
  mix(static_cast<std::uint64_t>(map.size_x), 4);
  mix(static_cast<std::uint64_t>(map.size_y), 4);
  mix(static_cast<std::uint64_t>(map.channels), 4);
  for (double v : map.data) mix(std::bit_cast<std::uint64_t>(v), 8);
  return h;
}

inline std::string checksum_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

struct ForwardResult {
  BevMap bev;
  RunReport report;
  std::vector<DiffusedVoxelSet> heatmaps;  // one per block when collected
};

/// End-to-end forward pass: voxelize, run the blocks with Z compression
/// between consecutive ones, flatten to BEV. An empty post-voxelization grid
/// yields an all-zero BEV of the final extents and empty_scene = true.
inline ForwardResult backbone_forward(const PointCloud& cloud, const BackboneConfig& config,
                                      bool collect_heatmaps = false) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const BackboneParams params = init_backbone_params(config);

  ForwardResult result;
  result.report.config = config;
  result.report.input_points = static_cast<int>(cloud.points.size());

  Rng lift_rng = Rng(config.seed).fork("voxel_lift");
  SparseVoxelGrid grid = voxelize(cloud, config.grid, config.feature_dim, lift_rng);
  result.report.initial_voxels = grid.size();

  if (grid.empty()) {
    result.report.empty_scene = true;
    GridSpec final_spec = config.grid;
    for (int b = 0; b + 1 < config.block_count; ++b) {
      final_spec.voxel_size[2] *= 2.0;
      final_spec.extents[2] = (final_spec.extents[2] + 1) / 2;
    }
    SparseVoxelGrid empty(final_spec, config.feature_dim);
    result.bev = bev_flatten(empty);
  } else {
    for (int b = 0; b < config.block_count; ++b) {
      BlockReport block_report;
      DiffusedVoxelSet audit;
      grid = hmt_block(grid, params.blocks[b], block_config(config, b), &block_report,
                       collect_heatmaps ? &audit : nullptr);
      if (collect_heatmaps) result.heatmaps.push_back(std::move(audit));
      if (b + 1 < config.block_count) {
        grid = z_compress(grid, params.z_projections[b]);
        block_report.z_extent_after = grid.spec.extents[2];
      }
      result.report.blocks.push_back(block_report);
    }
    result.bev = bev_flatten(grid);
  }

  result.report.bev_x = result.bev.size_x;
  result.report.bev_y = result.bev.size_y;
  result.report.bev_channels = result.bev.channels;
  result.report.bev_checksum = checksum_hex(bev_checksum(result.bev));
  result.report.total_millis =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

/// BEV dump: header of X, Y, channels as little-endian uint32, then the map
/// row-major as little-endian float64.
inline void write_bev_bin(const std::filesystem::path& path, const BevMap& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_bev_bin: cannot open " + path.string());
  auto put_u32 = [&out](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(map.size_x));
  put_u32(static_cast<std::uint32_t>(map.size_y));
  put_u32(static_cast<std::uint32_t>(map.channels));
  for (double v : map.data) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!out) throw std::runtime_error("write_bev_bin: short write on " + path.string());
}

}  // namespace hmt
