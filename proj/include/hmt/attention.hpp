#pragma once

// Local geometry path: KNN relative position encoding inside each window,
// then masked multi-head cross-attention between the Hilbert-ordered and
// Trans-Hilbert-ordered group sequences of the same window.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hmt/curves.hpp"
#include "hmt/grouping.hpp"
#include "hmt/numerics.hpp"
#include "hmt/parallel.hpp"
#include "hmt/voxel_grid.hpp"

namespace hmt {

/// Multi-head cross-attention weights for the two query directions plus the
/// relative position encoder (3 -> dim MLP).
struct AttentionParams {
  int heads = 0;
  int head_dim = 0;  // heads * head_dim == dim
  Matrix wq_h, wk_h, wv_h, wo_h;      // queries from the Hilbert sequence
  Matrix wq_ht, wk_ht, wv_ht, wo_ht;  // queries from the Trans-Hilbert sequence
  MlpParams rel_encoder;
};

inline AttentionParams init_attention_params(int dim, int heads, Rng rng) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument("init_attention_params: heads must divide dim");
  AttentionParams p;
  p.heads = heads;
  p.head_dim = dim / heads;
  auto mk = [&](const char* tag) {
    Rng r = rng.fork(tag);
    return Matrix::fan_in_init(dim, dim, r);
  };
  p.wq_h = mk("q_h");
  p.wk_h = mk("k_h");
  p.wv_h = mk("v_h");
  p.wo_h = mk("o_h");
  p.wq_ht = mk("q_ht");
  p.wk_ht = mk("k_ht");
  p.wv_ht = mk("v_ht");
  p.wo_ht = mk("o_ht");
  Rng rr = rng.fork("rel");
  p.rel_encoder = MlpParams::init(3, dim, dim, rr);
  return p;
}

/// Row-wise softmax(Q K^T / sqrt(d_k)) V over the unmasked keys. Masked keys
/// get weight exactly zero and are skipped in the weighted sum, so their
/// contents never reach the output. Rows for masked queries are still
/// computed; callers discard them.
inline Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   std::span<const std::uint8_t> key_mask) {
  if (q.cols != k.cols || k.rows != v.rows || static_cast<int>(key_mask.size()) != k.rows)
    throw std::invalid_argument("scaled_dot_attention: shape mismatch");
  bool any = false;
  for (std::uint8_t m : key_mask) any = any || (m != 0);
  if (!any) throw std::invalid_argument("scaled_dot_attention: every key is masked");

  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Matrix out(q.rows, v.cols);
  std::vector<double> logits(k.rows, 0.0);
  for (int i = 0; i < q.rows; ++i) {
    const auto qrow = q.row(i);
    for (int j = 0; j < k.rows; ++j) {
      if (!key_mask[j]) continue;
      const auto krow = k.row(j);
      double dot = 0.0;
      for (int c = 0; c < q.cols; ++c) dot += qrow[c] * krow[c];
      logits[j] = dot * scale;
    }
    const std::vector<double> w = softmax_masked(logits, key_mask);
    auto orow = out.row(i);
    for (int j = 0; j < k.rows; ++j) {
      if (!key_mask[j]) continue;
      const double wj = w[j];
      const auto vrow = v.row(j);
      for (int c = 0; c < v.cols; ++c) orow[c] += wj * vrow[c];
    }
  }
  return out;
}

namespace detail {

inline Matrix column_block(const Matrix& m, int first, int width) {
  Matrix out(m.rows, width);
  for (int i = 0; i < m.rows; ++i) {
    const double* src = m.data.data() + static_cast<std::size_t>(i) * m.cols + first;
    std::copy(src, src + width, out.row(i).begin());
  }
  return out;
}

inline Matrix multi_head_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                   const Matrix& wq, const Matrix& wk, const Matrix& wv,
                                   const Matrix& wo, int heads, int head_dim,
                                   std::span<const std::uint8_t> key_mask) {
  const Matrix q = matmul(queries, wq);
  const Matrix k = matmul(keys, wk);
  const Matrix v = matmul(values, wv);
  Matrix concat(q.rows, heads * head_dim);
  for (int h = 0; h < heads; ++h) {
    const Matrix qh = column_block(q, h * head_dim, head_dim);
    const Matrix kh = column_block(k, h * head_dim, head_dim);
    const Matrix vh = column_block(v, h * head_dim, head_dim);
    const Matrix oh = scaled_dot_attention(qh, kh, vh, key_mask);
    for (int i = 0; i < oh.rows; ++i) {
      std::copy(oh.row(i).begin(), oh.row(i).end(),
                concat.row(i).begin() + static_cast<std::ptrdiff_t>(h) * head_dim);
    }
  }
  return matmul(concat, wo);
}

}  // namespace detail

/// Cross-attention between the two orderings of the same group index:
/// out_h attends from the Hilbert sequence into the Trans-Hilbert one and
/// out_ht the other way around. mask_h / mask_ht flag the real slots of the
/// respective sequence.
inline std::pair<Matrix, Matrix> cross_attention_pair(const Matrix& seq_h, const Matrix& seq_ht,
                                                      const AttentionParams& params,
                                                      std::span<const std::uint8_t> mask_h,
                                                      std::span<const std::uint8_t> mask_ht) {
  if (seq_h.rows != seq_ht.rows || seq_h.cols != seq_ht.cols)
    throw std::invalid_argument("cross_attention_pair: sequence shapes differ");
  if (params.heads * params.head_dim != seq_h.cols)
    throw std::invalid_argument("cross_attention_pair: heads * head_dim != dim");
  Matrix out_h = detail::multi_head_attention(seq_h, seq_ht, seq_ht, params.wq_h, params.wk_h,
                                              params.wv_h, params.wo_h, params.heads,
                                              params.head_dim, mask_ht);
  Matrix out_ht = detail::multi_head_attention(seq_ht, seq_h, seq_h, params.wq_ht, params.wk_ht,
                                               params.wv_ht, params.wo_ht, params.heads,
                                               params.head_dim, mask_h);
  return {std::move(out_h), std::move(out_ht)};
}

/// K-nearest-neighbor table over one window's real voxels. Entry ids are
/// positions in the input span; each voxel lists up to k-1 neighbors sorted
/// by ascending squared Euclidean distance, ties by ascending id. Self is
/// excluded.
struct NeighborTable {
  struct Entry {
    std::int32_t id;
    Coord3 offset;  // neighbor minus self
  };
  std::vector<std::vector<Entry>> neighbors;
};

inline NeighborTable knn_neighbors(std::span<const Coord3> coords, int k) {
  if (k < 2) throw std::invalid_argument("knn_neighbors: k must be >= 2");
  const int n = static_cast<int>(coords.size());
  const int want = k - 1;
  NeighborTable table;
  table.neighbors.resize(n);
  std::vector<std::pair<std::int64_t, std::int32_t>> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    cand.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const std::int64_t dx = coords[j].x - coords[i].x;
      const std::int64_t dy = coords[j].y - coords[i].y;
      const std::int64_t dz = coords[j].z - coords[i].z;
      cand.emplace_back(dx * dx + dy * dy + dz * dz, j);
    }
    const int take = std::min<int>(want, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
    auto& out = table.neighbors[i];
    out.reserve(take);
    for (int t = 0; t < take; ++t) {
      const std::int32_t j = cand[t].second;
      out.push_back({j,
                     {coords[j].x - coords[i].x, coords[j].y - coords[i].y,
                      coords[j].z - coords[i].z}});
    }
  }
  return table;
}

/// Per-voxel geometry feature: each neighbor offset is encoded by the MLP
/// and the encodings are pooled by element-wise max. Voxels with no
/// neighbors get a zero delta.
inline Matrix knn_relative_encode(std::span<const Coord3> coords, int k,
                                  const MlpParams& encoder) {
  if (encoder.input_dim() != 3)
    throw std::invalid_argument("knn_relative_encode: encoder input dim must be 3");
  const int n = static_cast<int>(coords.size());
  const int dim = encoder.output_dim();
  const NeighborTable table = knn_neighbors(coords, k);

  int total = 0;
  for (const auto& row : table.neighbors) total += static_cast<int>(row.size());
  Matrix offsets(total, 3);
  int r = 0;
  for (const auto& row : table.neighbors) {
    for (const auto& e : row) {
      offsets.at(r, 0) = static_cast<double>(e.offset.x);
      offsets.at(r, 1) = static_cast<double>(e.offset.y);
      offsets.at(r, 2) = static_cast<double>(e.offset.z);
      ++r;
    }
  }
  const Matrix encoded = mlp_forward(offsets, encoder);

  Matrix delta(n, dim);
  r = 0;
  for (int i = 0; i < n; ++i) {
    auto drow = delta.row(i);
    const int count = static_cast<int>(table.neighbors[i].size());
    for (int t = 0; t < count; ++t, ++r) {
      const auto erow = encoded.row(r);
      if (t == 0) {
        std::copy(erow.begin(), erow.end(), drow.begin());
      } else {
        for (int c = 0; c < dim; ++c) drow[c] = std::max(drow[c], erow[c]);
      }
    }
  }
  return delta;
}

/// Feed-forward and normalization wrapper around the cross-attention core.
struct GtbParams {
  AttentionParams attn;
  MlpParams ffn;
  NormParams norm_attn;
  NormParams norm_ffn;
};

inline GtbParams init_gtb_params(int dim, int heads, Rng rng) {
  GtbParams p;
  p.attn = init_attention_params(dim, heads, rng.fork("attn"));
  Rng rf = rng.fork("ffn");
  p.ffn = MlpParams::init(dim, dim, dim, rf);
  p.norm_attn = NormParams::identity(dim);
  p.norm_ffn = NormParams::identity(dim);
  return p;
}

namespace detail {

inline int window_order_bits(std::array<int, 3> shape) {
  int side = std::max(shape[0], std::max(shape[1], shape[2]));
  int bits = 1;
  while ((1 << bits) < side) ++bits;
  return bits;
}

}  // namespace detail

/// Local feature block. Per window: KNN relative encoding fused into the
/// features, dual-curve padded grouping over the same members, masked
/// cross-attention per paired group, then per voxel the two attention
/// outputs are summed and passed through a feed-forward layer, each step
/// with residual and normalization. Windows are independent.
inline SparseVoxelGrid grouped_transformer_block(const SparseVoxelGrid& grid,
                                                 std::array<int, 3> window_shape, int group_size,
                                                 int knn_k, const GtbParams& params) {
  if (grid.empty()) return grid;
  const int dim = grid.feature_dim();
  if (params.attn.heads * params.attn.head_dim != dim)
    throw std::invalid_argument("grouped_transformer_block: attention dim mismatch");
  if (group_size < 1) throw std::invalid_argument("grouped_transformer_block: group size must be >= 1");

  const WindowPartition part = window_partition(grid, window_shape);
  const int order_bits = detail::window_order_bits(window_shape);

  Matrix result = grid.features_matrix();
  parallel_for(static_cast<int>(part.windows.size()), [&](int w) {
    const VoxelWindow& window = part.windows[w];
    const int members = static_cast<int>(window.members.size());

    std::vector<Coord3> coords(members);
    for (int i = 0; i < members; ++i) coords[i] = grid.coord(window.members[i]);
    const Matrix delta = knn_relative_encode(coords, knn_k, params.attn.rel_encoder);

    Matrix tokens(members, dim);
    for (int i = 0; i < members; ++i) {
      const auto f = grid.feature(window.members[i]);
      const auto d = delta.row(i);
      auto t = tokens.row(i);
      for (int c = 0; c < dim; ++c) t[c] = f[c] + d[c];
    }

    const PaddedGroupBatch batch_h = group_within_window(grid, window, window_shape,
                                                         CurveKind::Hilbert, order_bits, group_size);
    const PaddedGroupBatch batch_ht = group_within_window(
        grid, window, window_shape, CurveKind::TransHilbert, order_bits, group_size);

    // member id -> row in tokens
    std::vector<std::int32_t> row_of;
    {
      std::int32_t max_id = 0;
      for (std::int32_t id : window.members) max_id = std::max(max_id, id);
      row_of.assign(max_id + 1, -1);
      for (int i = 0; i < members; ++i) row_of[window.members[i]] = i;
    }

    auto fill_group = [&](const PaddedGroupBatch& batch, int g, Matrix& block) {
      const auto slots = batch.group_slots(g);
      for (int s = 0; s < batch.group_size; ++s) {
        auto dst = block.row(s);
        if (slots[s] < 0) {
          std::fill(dst.begin(), dst.end(), 0.0);
        } else {
          const auto src = tokens.row(row_of[slots[s]]);
          std::copy(src.begin(), src.end(), dst.begin());
        }
      }
    };

    Matrix attn_sum(members, dim);
    Matrix block_h(group_size, dim);
    Matrix block_ht(group_size, dim);
    for (int g = 0; g < batch_h.group_count; ++g) {
      fill_group(batch_h, g, block_h);
      fill_group(batch_ht, g, block_ht);
      const auto [out_h, out_ht] = cross_attention_pair(block_h, block_ht, params.attn,
                                                        batch_h.group_mask(g),
                                                        batch_ht.group_mask(g));
      const auto slots_h = batch_h.group_slots(g);
      const auto slots_ht = batch_ht.group_slots(g);
      for (int s = 0; s < group_size; ++s) {
        if (slots_h[s] >= 0) {
          auto dst = attn_sum.row(row_of[slots_h[s]]);
          const auto src = out_h.row(s);
          for (int c = 0; c < dim; ++c) dst[c] += src[c];
        }
        if (slots_ht[s] >= 0) {
          auto dst = attn_sum.row(row_of[slots_ht[s]]);
          const auto src = out_ht.row(s);
          for (int c = 0; c < dim; ++c) dst[c] += src[c];
        }
      }
    }

    std::vector<double> mixed(dim);
    Matrix ffn_in(1, dim);
    for (int i = 0; i < members; ++i) {
      const auto t = tokens.row(i);
      const auto a = attn_sum.row(i);
      for (int c = 0; c < dim; ++c) mixed[c] = t[c] + a[c];
      const std::vector<double> u = layer_norm(mixed, params.norm_attn);
      std::copy(u.begin(), u.end(), ffn_in.row(0).begin());
      const Matrix f = mlp_forward(ffn_in, params.ffn);
      for (int c = 0; c < dim; ++c) mixed[c] = u[c] + f.at(0, c);
      const std::vector<double> o = layer_norm(mixed, params.norm_ffn);
      std::copy(o.begin(), o.end(), result.row(window.members[i]).begin());
    }
  });

  SparseVoxelGrid out = grid;
  out.set_features(std::move(result));
  return out;
}

}  // namespace hmt
