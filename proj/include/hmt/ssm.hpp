#pragma once

// Bidirectional selective-scan state-space block over serialized voxel
// sequences. Per channel c and state j the recurrence is
//   h_t = exp(dt * A[c][j]) * h_{t-1} + dt * B[t][j] * x[t][c],   h_0 = 0
//   y[t][c] = sum_j C[t][j] * h_t + D[c] * x[t][c]
// with dt = softplus of a learned per-token, per-channel projection and
// B, C projected per token. Linear in sequence length.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hmt/curves.hpp"
#include "hmt/grouping.hpp"
#include "hmt/numerics.hpp"
#include "hmt/parallel.hpp"
#include "hmt/voxel_grid.hpp"

namespace hmt {

enum class ScanDirection { Forward, Backward };

/// Parameters of one scan direction.
struct ScanParams {
  Matrix decay;                 // A, dim x state_dim, strictly negative
  Matrix w_delta;               // dim x dim
  std::vector<double> b_delta;  // dim
  Matrix w_b;                   // dim x state_dim
  Matrix w_c;                   // dim x state_dim
  std::vector<double> skip;     // D, dim
};

/// Full block parameters: pre-normalization, input and gate projections,
/// the two scan directions and the output projection.
struct SSMParams {
  int dim = 0;
  int state_dim = 0;
  NormParams pre_norm;
  Matrix w_in;    // dim x dim
  Matrix w_gate;  // dim x dim
  Matrix w_out;   // dim x dim
  ScanParams forward;
  ScanParams backward;
};

inline ScanParams init_scan_params(int dim, int state_dim, Rng rng) {
  ScanParams p;
  p.decay = Matrix(dim, state_dim);
  for (int c = 0; c < dim; ++c) {
    for (int j = 0; j < state_dim; ++j) p.decay.at(c, j) = -static_cast<double>(j + 1);
  }
  Rng rd = rng.fork("delta");
  p.w_delta = Matrix::fan_in_init(dim, dim, rd);
  p.b_delta.assign(dim, 0.0);
  Rng rb = rng.fork("b");
  p.w_b = Matrix::fan_in_init(dim, state_dim, rb);
  Rng rc = rng.fork("c");
  p.w_c = Matrix::fan_in_init(dim, state_dim, rc);
  p.skip.assign(dim, 1.0);
  return p;
}

inline SSMParams init_ssm_params(int dim, int state_dim, Rng rng) {
  SSMParams p;
  p.dim = dim;
  p.state_dim = state_dim;
  p.pre_norm = NormParams::identity(dim);
  Rng ri = rng.fork("in");
  p.w_in = Matrix::fan_in_init(dim, dim, ri);
  Rng rg = rng.fork("gate");
  p.w_gate = Matrix::fan_in_init(dim, dim, rg);
  Rng ro = rng.fork("out");
  p.w_out = Matrix::fan_in_init(dim, dim, ro);
  p.forward = init_scan_params(dim, state_dim, rng.fork("fwd"));
  p.backward = init_scan_params(dim, state_dim, rng.fork("bwd"));
  return p;
}

namespace detail {

inline void check_scan_shapes(const Matrix& tokens, const ScanParams& p) {
  const int dim = tokens.cols;
  const int state_dim = p.decay.cols;
  if (p.decay.rows != dim || p.w_delta.rows != dim || p.w_delta.cols != dim ||
      static_cast<int>(p.b_delta.size()) != dim || p.w_b.rows != dim || p.w_b.cols != state_dim ||
      p.w_c.rows != dim || p.w_c.cols != state_dim || static_cast<int>(p.skip.size()) != dim)
    throw std::invalid_argument("selective_scan: parameter shapes do not match token dim");
}

inline Matrix reverse_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    const auto src = m.row(m.rows - 1 - i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace detail

/// One scan direction over an m x dim token block. Backward runs the same
/// recurrence over the reversed sequence and re-reverses the output.
inline Matrix selective_scan(const Matrix& tokens, const ScanParams& params,
                             ScanDirection direction) {
  if (tokens.rows < 1) throw std::invalid_argument("selective_scan: empty sequence");
  detail::check_scan_shapes(tokens, params);
  if (direction == ScanDirection::Backward) {
    return detail::reverse_rows(
        selective_scan(detail::reverse_rows(tokens), params, ScanDirection::Forward));
  }

  const int steps = tokens.rows;
  const int dim = tokens.cols;
  const int state_dim = params.decay.cols;
  const Matrix delta_raw = matmul(tokens, params.w_delta);  // steps x dim
  const Matrix b_sel = matmul(tokens, params.w_b);          // steps x state_dim
  const Matrix c_sel = matmul(tokens, params.w_c);          // steps x state_dim

  Matrix out(steps, dim);
  std::vector<double> h(state_dim);
  for (int c = 0; c < dim; ++c) {
    std::fill(h.begin(), h.end(), 0.0);
    const double* decay_row = params.decay.data.data() + static_cast<std::size_t>(c) * state_dim;
    for (int t = 0; t < steps; ++t) {
      const double x = tokens.at(t, c);
      const double dt = softplus(delta_raw.at(t, c) + params.b_delta[c]);
      const double* b_row = b_sel.data.data() + static_cast<std::size_t>(t) * state_dim;
      const double* c_row = c_sel.data.data() + static_cast<std::size_t>(t) * state_dim;
      double y = 0.0;
      for (int j = 0; j < state_dim; ++j) {
        h[j] = std::exp(dt * decay_row[j]) * h[j] + dt * b_row[j] * x;
        y += c_row[j] * h[j];
      }
      out.at(t, c) = y + params.skip[c] * x;
    }
  }
  return out;
}

/// Standard block form around the two scans: pre-norm, input and gate
/// projections, forward + backward scan summed, SiLU gating, output
/// projection, residual.
inline Matrix bidirectional_ssm(const Matrix& tokens, const SSMParams& params) {
  if (tokens.cols != params.dim) throw std::invalid_argument("bidirectional_ssm: dim mismatch");
  if (params.w_in.rows != params.dim || params.w_in.cols != params.dim ||
      params.w_gate.rows != params.dim || params.w_gate.cols != params.dim ||
      params.w_out.rows != params.dim || params.w_out.cols != params.dim)
    throw std::invalid_argument("bidirectional_ssm: projection shape mismatch");

  Matrix normed(tokens.rows, tokens.cols);
  for (int i = 0; i < tokens.rows; ++i) {
    const auto n = layer_norm(tokens.row(i), params.pre_norm);
    std::copy(n.begin(), n.end(), normed.row(i).begin());
  }
  const Matrix inner = matmul(normed, params.w_in);
  const Matrix gate = matmul(normed, params.w_gate);
  Matrix scanned = selective_scan(inner, params.forward, ScanDirection::Forward);
  const Matrix rev = selective_scan(inner, params.backward, ScanDirection::Backward);
  for (std::size_t i = 0; i < scanned.data.size(); ++i) {
    scanned.data[i] = (scanned.data[i] + rev.data[i]) * activate(gate.data[i], Activation::Silu);
  }
  Matrix out = matmul(scanned, params.w_out);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tokens.data[i];
  return out;
}

/// Serialized sequence block parameters: the SSM core plus the absolute
/// position encoder (3 -> dim MLP).
struct SerializedMambaParams {
  SSMParams ssm;
  MlpParams pos_encoder;
};

inline SerializedMambaParams init_serialized_mamba_params(int dim, int state_dim, Rng rng) {
  SerializedMambaParams p;
  p.ssm = init_ssm_params(dim, state_dim, rng.fork("ssm"));
  Rng rp = rng.fork("pos");
  p.pos_encoder = MlpParams::init(3, dim, dim, rp);
  return p;
}

/// Long-range interaction block: add absolute position encoding, sort every
/// voxel along the axis, split into equal-overlap groups, run the
/// bidirectional scan per group, scatter back (averaging positions covered
/// by two groups) and add the block input.
inline SparseVoxelGrid serialized_mamba_block(const SparseVoxelGrid& grid, CurveKind axis,
                                              int group_size, const SerializedMambaParams& params) {
  if (axis != CurveKind::AxisX && axis != CurveKind::AxisY)
    throw std::invalid_argument("serialized_mamba_block: axis must be AxisX or AxisY");
  if (grid.empty()) return grid;
  const int total = grid.size();
  const int dim = grid.feature_dim();
  if (params.ssm.dim != dim)
    throw std::invalid_argument("serialized_mamba_block: parameter dim mismatch");

  const Matrix pos = pos_encode_rows(grid.coords(), grid.spec, params.pos_encoder);
  Matrix tokens = grid.features_matrix();
  for (std::size_t i = 0; i < tokens.data.size(); ++i) tokens.data[i] += pos.data[i];

  const std::vector<std::int32_t> order = sequence_voxels(grid.coords(), {axis, 0});
  const GroupLayout layout = equal_overlap_groups(total, group_size);

  std::vector<Matrix> group_out(layout.group_count());
  parallel_for(layout.group_count(), [&](int g) {
    Matrix block(layout.group_size, dim);
    for (int s = 0; s < layout.group_size; ++s) {
      const auto src = tokens.row(order[layout.starts[g] + s]);
      std::copy(src.begin(), src.end(), block.row(s).begin());
    }
    group_out[g] = bidirectional_ssm(block, params.ssm);
  });

  Matrix sums(total, dim);
  std::vector<int> hits(total, 0);
  for (int g = 0; g < layout.group_count(); ++g) {
    for (int s = 0; s < layout.group_size; ++s) {
      const int id = order[layout.starts[g] + s];
      auto dst = sums.row(id);
      const auto src = group_out[g].row(s);
      for (int k = 0; k < dim; ++k) dst[k] += src[k];
      hits[id] += 1;
    }
  }

  Matrix result = grid.features_matrix();
  for (int i = 0; i < total; ++i) {
    auto dst = result.row(i);
    const auto avg = sums.row(i);
    const double inv = 1.0 / static_cast<double>(hits[i]);
    for (int k = 0; k < dim; ++k) dst[k] += avg[k] * inv;
  }
  SparseVoxelGrid out = grid;
  out.set_features(std::move(result));
  return out;
}

}  // namespace hmt
