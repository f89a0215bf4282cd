// Command-line front end: forward passes over point-cloud binaries plus
// debug dumps of the serialization, grouping and generation stages.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmt/config_json.hpp"
#include "hmt/hmt.hpp"

namespace {

using nlohmann::json;

struct ConfigCli {
  std::string profile = "kitti";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> blocks;
  std::optional<std::vector<int>> mamba_sizes;
  std::optional<int> group_size;
  std::optional<int> knn_k;
  std::optional<double> ratio;
  std::optional<int> feature_dim;
};

void add_config_flags(CLI::App* cmd, ConfigCli& c) {
  cmd->add_option("--profile", c.profile, "grid profile: kitti, once or custom");
  cmd->add_option("--config", c.config_path, "JSON config file; flags override its values");
  cmd->add_option("--seed", c.seed, "weight seed");
  cmd->add_option("--blocks", c.blocks, "backbone block count");
  cmd->add_option("--mamba-sizes", c.mamba_sizes, "per-block sequence group sizes");
  cmd->add_option("--group-size", c.group_size, "transformer group size g");
  cmd->add_option("--knn", c.knn_k, "neighbor count K for relative encoding");
  cmd->add_option("--ratio", c.ratio, "generation ratio r");
  cmd->add_option("--dim", c.feature_dim, "feature dimension");
}

hmt::BackboneConfig resolve_config(const ConfigCli& c, const CLI::App* cmd) {
  hmt::BackboneConfig config;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw std::runtime_error("cannot open config file " + c.config_path);
    json j = json::parse(in);
    if (cmd->count("--profile") > 0) j["profile"] = c.profile;
    config = hmt::config_from_json(j);
  } else {
    config = hmt::config_from_profile(c.profile);
  }
  if (c.seed) config.seed = *c.seed;
  if (c.blocks) config.block_count = *c.blocks;
  if (c.mamba_sizes) config.mamba_group_sizes = *c.mamba_sizes;
  if (c.group_size) config.attn_group_size = *c.group_size;
  if (c.knn_k) config.knn_k = *c.knn_k;
  if (c.ratio) config.gen_ratio = *c.ratio;
  if (c.feature_dim) config.feature_dim = *c.feature_dim;
  config.validate();
  return config;
}

void write_heatmap_csv(std::ostream& out, const std::vector<hmt::DiffusedVoxelSet>& sets) {
  out << "x,y,z,score,selected\n";
  for (const hmt::DiffusedVoxelSet& set : sets) {
    for (int i = 0; i < set.size(); ++i) {
      out << set.coords[i].x << ',' << set.coords[i].y << ',' << set.coords[i].z << ','
          << set.scores[i] << ',' << static_cast<int>(set.selected[i]) << '\n';
    }
  }
}

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  return out;
}

int run_forward(const ConfigCli& cli_cfg, const CLI::App* cmd, const std::string& input,
                const std::string& report_path, const std::string& bev_path,
                const std::string& heatmap_path) {
  const hmt::BackboneConfig config = resolve_config(cli_cfg, cmd);
  const hmt::PointCloud cloud = hmt::read_kitti_bin(input);
  const hmt::ForwardResult result = hmt::backbone_forward(cloud, config, !heatmap_path.empty());

  const json report = hmt::report_to_json(result.report);
  if (report_path.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    open_or_throw(report_path) << report.dump(2) << '\n';
    std::cout << "report: " << report_path << '\n';
  }
  if (!bev_path.empty()) {
    hmt::write_bev_bin(bev_path, result.bev);
    std::cout << "bev: " << bev_path << " (" << result.bev.size_x << " x " << result.bev.size_y
              << " x " << result.bev.channels << ")\n";
  }
  if (!heatmap_path.empty()) {
    auto out = open_or_throw(heatmap_path);
    write_heatmap_csv(out, result.heatmaps);
    std::cout << "heatmap: " << heatmap_path << '\n';
  }
  std::cout << "bev_checksum: " << result.report.bev_checksum << '\n';
  return 0;
}

int run_curve(const std::string& order, int bits, const std::string& out_path) {
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_or_throw(out_path);
    out = &file;
  }
  const std::uint64_t cells = std::uint64_t{1} << (3 * bits);
  *out << "index,x,y,z\n";
  for (std::uint64_t i = 0; i < cells; ++i) {
    hmt::Coord3 c = hmt::hilbert_coord(i, bits);
    if (order == "trans-hilbert") {
      std::swap(c.x, c.y);  // inverse of the (y, x, z) input permutation
    }
    *out << i << ',' << c.x << ',' << c.y << ',' << c.z << '\n';
  }
  return 0;
}

int run_groups(const ConfigCli& cli_cfg, const CLI::App* cmd, const std::string& input, int length,
               int mamba_size, const std::string& out_path) {
  json result;
  if (length >= 0) {
    result["group_layout"] = hmt::layout_to_json(hmt::equal_overlap_groups(length, mamba_size));
  }
  if (!input.empty()) {
    const hmt::BackboneConfig config = resolve_config(cli_cfg, cmd);
    hmt::Rng lift = hmt::Rng(config.seed).fork("voxel_lift");
    const hmt::SparseVoxelGrid grid =
        hmt::voxelize(hmt::read_kitti_bin(input), config.grid, config.feature_dim, lift);
    result["voxels"] = grid.size();
    result["group_layout"] =
        hmt::layout_to_json(hmt::equal_overlap_groups(grid.size(), mamba_size));

    const hmt::WindowPartition part = hmt::window_partition(grid, config.window_shape);
    int bits = 1;
    while ((1 << bits) < std::max({config.window_shape[0], config.window_shape[1],
                                   config.window_shape[2]}))
      ++bits;
    json windows = json::array();
    for (const hmt::VoxelWindow& w : part.windows) {
      json entry;
      entry["window_id"] = {w.window_id.x, w.window_id.y, w.window_id.z};
      entry["members"] = w.members;
      entry["hilbert"] = hmt::batch_to_json(hmt::group_within_window(
          grid, w, config.window_shape, hmt::CurveKind::Hilbert, bits, config.attn_group_size));
      entry["trans_hilbert"] = hmt::batch_to_json(
          hmt::group_within_window(grid, w, config.window_shape, hmt::CurveKind::TransHilbert,
                                   bits, config.attn_group_size));
      windows.push_back(entry);
    }
    result["windows"] = windows;
  }
  if (out_path.empty()) {
    std::cout << result.dump(2) << '\n';
  } else {
    open_or_throw(out_path) << result.dump(2) << '\n';
  }
  return 0;
}

int run_heatmap(const ConfigCli& cli_cfg, const CLI::App* cmd, const std::string& input,
                const std::string& out_path) {
  const hmt::BackboneConfig config = resolve_config(cli_cfg, cmd);
  hmt::Rng lift = hmt::Rng(config.seed).fork("voxel_lift");
  const hmt::SparseVoxelGrid grid =
      hmt::voxelize(hmt::read_kitti_bin(input), config.grid, config.feature_dim, lift);
  if (grid.empty()) throw std::runtime_error("no voxels inside the grid range");

  const hmt::Rng root(config.seed);
  hmt::Rng kr = root.fork("block0").fork("vgb_kernel");
  const hmt::ConvKernel kernel =
      hmt::ConvKernel::random(config.feature_dim, config.feature_dim, kr);
  hmt::Rng sr = root.fork("block0").fork("vgb_score");
  const hmt::ScoreParams score = hmt::ScoreParams::init(config.feature_dim, sr);
  const hmt::SensorPose sensor = hmt::SensorPose::from_world(config.sensor_world, grid.spec);

  hmt::DiffusedVoxelSet audit;
  hmt::voxel_generation_block(grid, sensor, config.gen_ratio, kernel, score, &audit);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_or_throw(out_path);
    out = &file;
  }
  write_heatmap_csv(*out, {audit});
  return 0;
}

}  // namespace

int run_selftest();

int main(int argc, char** argv) {
  CLI::App app{"hybrid SSM / transformer voxel backbone"};
  app.require_subcommand(1);

  ConfigCli run_cfg;
  std::string run_input, run_report, run_bev, run_heatmap_path;
  CLI::App* run = app.add_subcommand("run", "forward pass over a point-cloud binary");
  run->add_option("--input", run_input, "velodyne-style .bin input")->required();
  run->add_option("--report", run_report, "write the run report JSON here (default stdout)");
  run->add_option("--bev", run_bev, "dump the BEV map to this file");
  run->add_option("--emit-heatmap", run_heatmap_path,
                  "write per-block generation candidates as CSV");
  add_config_flags(run, run_cfg);

  std::string curve_order = "hilbert";
  int curve_bits = 2;
  std::string curve_out;
  CLI::App* curve = app.add_subcommand("curve", "emit a curve visit list as CSV");
  curve->add_option("--order", curve_order, "hilbert or trans-hilbert")
      ->check(CLI::IsMember({"hilbert", "trans-hilbert"}));
  curve->add_option("--bits", curve_bits, "bits per axis")->check(CLI::Range(1, 6));
  curve->add_option("--out", curve_out, "output path (default stdout)");

  ConfigCli groups_cfg;
  std::string groups_input, groups_out;
  int groups_length = -1;
  int groups_m = 4;
  CLI::App* groups = app.add_subcommand("groups", "dump grouping layouts as JSON");
  groups->add_option("--length", groups_length, "sequence length for a bare layout dump");
  groups->add_option("--m", groups_m, "sequence group size m");
  groups->add_option("--input", groups_input, "optional .bin input for window batches");
  groups->add_option("--out", groups_out, "output path (default stdout)");
  add_config_flags(groups, groups_cfg);

  ConfigCli heatmap_cfg;
  std::string heatmap_input, heatmap_out;
  CLI::App* heatmap = app.add_subcommand("heatmap", "voxelize, run one generation block, dump CSV");
  heatmap->add_option("--input", heatmap_input, "velodyne-style .bin input")->required();
  heatmap->add_option("--out", heatmap_out, "output path (default stdout)");
  add_config_flags(heatmap, heatmap_cfg);

  CLI::App* selftest = app.add_subcommand("selftest", "run the built-in oracle checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_forward(run_cfg, run, run_input, run_report, run_bev,
                                          run_heatmap_path);
    if (curve->parsed()) return run_curve(curve_order, curve_bits, curve_out);
    if (groups->parsed())
      return run_groups(groups_cfg, groups, groups_input, groups_length, groups_m, groups_out);
    if (heatmap->parsed()) return run_heatmap(heatmap_cfg, heatmap, heatmap_input, heatmap_out);
    if (selftest->parsed()) return run_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
