#pragma once

// JSON (de)serialization of the backbone config, run reports and the
// grouping debug dumps. Parsing starts from the named profile preset, then
// any explicitly present key overrides it, so serialize(parse(x)) is
// idempotent.

#include <string>

#include <json.hpp>

#include "hmt/grouping.hpp"
#include "hmt/pipeline.hpp"

namespace hmt {

inline nlohmann::json grid_to_json(const GridSpec& spec) {
  return {{"range_min", spec.range_min},
          {"range_max", spec.range_max},
          {"voxel_size", spec.voxel_size},
          {"extents", spec.extents}};
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
  return GridSpec::make(j.at("range_min").get<std::array<double, 3>>(),
                        j.at("range_max").get<std::array<double, 3>>(),
                        j.at("voxel_size").get<std::array<double, 3>>());
}

inline nlohmann::json config_to_json(const BackboneConfig& c) {
  return {{"profile", c.profile},
          {"block_count", c.block_count},
          {"mamba_group_sizes", c.mamba_group_sizes},
          {"window_shape", c.window_shape},
          {"attn_group_size", c.attn_group_size},
          {"knn_k", c.knn_k},
          {"gen_ratio", c.gen_ratio},
          {"feature_dim", c.feature_dim},
          {"ssm_state_dim", c.ssm_state_dim},
          {"attn_heads", c.attn_heads},
          {"seed", c.seed},
          {"grid", grid_to_json(c.grid)},
          {"sensor", c.sensor_world}};
}

inline BackboneConfig config_from_profile(const std::string& profile) {
  if (profile == "kitti") return BackboneConfig::kitti();
  if (profile == "once") return BackboneConfig::once();
  if (profile == "custom") {
    BackboneConfig c = BackboneConfig::kitti();
    c.profile = "custom";
    return c;
  }
  throw std::invalid_argument("unknown profile '" + profile + "' (kitti, once, custom)");
}

inline BackboneConfig config_from_json(const nlohmann::json& j) {
  BackboneConfig c = config_from_profile(j.value("profile", std::string("kitti")));
  if (j.contains("block_count")) c.block_count = j.at("block_count").get<int>();
  if (j.contains("mamba_group_sizes"))
    c.mamba_group_sizes = j.at("mamba_group_sizes").get<std::vector<int>>();
  if (j.contains("window_shape")) c.window_shape = j.at("window_shape").get<std::array<int, 3>>();
  if (j.contains("attn_group_size")) c.attn_group_size = j.at("attn_group_size").get<int>();
  if (j.contains("knn_k")) c.knn_k = j.at("knn_k").get<int>();
  if (j.contains("gen_ratio")) c.gen_ratio = j.at("gen_ratio").get<double>();
  if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<int>();
  if (j.contains("ssm_state_dim")) c.ssm_state_dim = j.at("ssm_state_dim").get<int>();
  if (j.contains("attn_heads")) c.attn_heads = j.at("attn_heads").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
  if (j.contains("sensor")) c.sensor_world = j.at("sensor").get<std::array<double, 3>>();
  c.validate();
  return c;
}

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockReport& b : r.blocks) {
    blocks.push_back({{"voxels_in", b.voxels_in},
                      {"voxels_out", b.voxels_out},
                      {"diffused_raw", b.diffused_raw},
                      {"diffused_unique", b.diffused_unique},
                      {"selected", b.selected},
                      {"z_extent_after", b.z_extent_after},
                      {"millis", b.millis}});
  }
  return {{"config", config_to_json(r.config)},
          {"empty_scene", r.empty_scene},
          {"input_points", r.input_points},
          {"initial_voxels", r.initial_voxels},
          {"blocks", blocks},
          {"bev", {{"x", r.bev_x}, {"y", r.bev_y}, {"channels", r.bev_channels}}},
          {"bev_checksum", r.bev_checksum},
          {"total_millis", r.total_millis}};
}

inline nlohmann::json layout_to_json(const GroupLayout& layout) {
  return {{"total", layout.total},
          {"group_size", layout.group_size},
          {"group_count", layout.group_count()},
          {"starts", layout.starts},
          {"overlaps", layout.overlaps}};
}

inline nlohmann::json batch_to_json(const PaddedGroupBatch& batch) {
  nlohmann::json groups = nlohmann::json::array();
  for (int g = 0; g < batch.group_count; ++g) {
    nlohmann::json slots = nlohmann::json::array();
    nlohmann::json mask = nlohmann::json::array();
    for (int s = 0; s < batch.group_size; ++s) {
      slots.push_back(batch.group_slots(g)[s]);
      mask.push_back(batch.group_mask(g)[s] != 0);
    }
    groups.push_back({{"slots", slots}, {"mask", mask}});
  }
  return {{"order", batch.order == CurveKind::Hilbert ? "hilbert" : "trans-hilbert"},
          {"group_size", batch.group_size},
          {"group_count", batch.group_count},
          {"groups", groups}};
}

}  // namespace hmt
