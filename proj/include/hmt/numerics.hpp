#pragma once

// Dense double-precision kernels shared by every block: matrices, masked
// softmax, layer normalization and a two-layer MLP. All loops use a fixed
// accumulation order so identical inputs give bit-identical outputs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hmt {

/// SplitMix64 stream. The algorithm is fixed so a given seed produces the
/// same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Independent child stream for a named parameter group. Forking does not
  /// advance the parent, so parameter layouts stay stable when new groups
  /// are added.
  Rng fork(std::string_view tag) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    Rng child(state_ ^ h);
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Matrix random_uniform(int r, int c, Rng& rng, double lo, double hi) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
  }

  /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], fan_in = rows.
  static Matrix fan_in_init(int r, int c, Rng& rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(r));
    return random_uniform(r, c, rng, -s, s);
  }
};

/// Standard product. For every output element the k summation runs left to
/// right, so results are reproducible bit for bit.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                                " vs " + std::to_string(b.rows) + ")");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + static_cast<std::size_t>(i) * a.cols;
    double* orow = out.data.data() + static_cast<std::size_t>(i) * b.cols;
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

/// Softmax over the unmasked entries only. Masked positions get weight
/// exactly 0.0 and never enter the max or the normalizing sum, so their
/// logit values cannot influence the result.
inline std::vector<double> softmax_masked(std::span<const double> logits,
                                          std::span<const std::uint8_t> mask) {
  if (logits.size() != mask.size())
    throw std::invalid_argument("softmax_masked: logits/mask length mismatch");
  double hi = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      any = true;
      if (logits[i] > hi) hi = logits[i];
    }
  }
  if (!any) throw std::invalid_argument("softmax_masked: every entry is masked");
  std::vector<double> w(logits.size(), 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      w[i] = std::exp(logits[i] - hi);
      denom += w[i];
    }
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) w[i] /= denom;
  }
  return w;
}

inline std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                                      std::span<const double> bias, double eps) {
  if (x.size() != gain.size() || x.size() != bias.size())
    throw std::invalid_argument("layer_norm: length mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) {
    const double c = v - mean;
    var += c * c;
  }
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

/// Per-feature affine for layer_norm; identity() gives gain 1, bias 0.
struct NormParams {
  std::vector<double> gain;
  std::vector<double> bias;
  double eps = 1e-5;

  static NormParams identity(int d) {
    NormParams p;
    p.gain.assign(d, 1.0);
    p.bias.assign(d, 0.0);
    return p;
  }
};

inline std::vector<double> layer_norm(std::span<const double> x, const NormParams& p) {
  return layer_norm(x, p.gain, p.bias, p.eps);
}

enum class Activation { Linear, Gelu, Silu };

inline double activate(double x, Activation act) {
  switch (act) {
    case Activation::Linear:
      return x;
    case Activation::Gelu:
      // exact form, 0.5 x (1 + erf(x / sqrt(2)))
      return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
    case Activation::Silu:
      return x / (1.0 + std::exp(-x));
  }
  throw std::invalid_argument("activate: unknown activation");
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

/// Two-layer perceptron, act(x W1 + b1) W2 + b2.
struct MlpParams {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
  Activation activation = Activation::Gelu;

  int input_dim() const { return w1.rows; }
  int output_dim() const { return w2.cols; }

  static MlpParams init(int in, int hidden, int out, Rng& rng,
                        Activation act = Activation::Gelu) {
    MlpParams p;
    p.w1 = Matrix::fan_in_init(in, hidden, rng);
    p.b1.assign(hidden, 0.0);
    p.w2 = Matrix::fan_in_init(hidden, out, rng);
    p.b2.assign(out, 0.0);
    p.activation = act;
    return p;
  }
};

inline Matrix mlp_forward(const Matrix& x, const MlpParams& p) {
  if (static_cast<int>(p.b1.size()) != p.w1.cols || static_cast<int>(p.b2.size()) != p.w2.cols)
    throw std::invalid_argument("mlp_forward: bias length mismatch");
  Matrix h = matmul(x, p.w1);
  for (int i = 0; i < h.rows; ++i) {
    double* row = h.data.data() + static_cast<std::size_t>(i) * h.cols;
    for (int j = 0; j < h.cols; ++j) row[j] = activate(row[j] + p.b1[j], p.activation);
  }
  Matrix out = matmul(h, p.w2);
  for (int i = 0; i < out.rows; ++i) {
    double* row = out.data.data() + static_cast<std::size_t>(i) * out.cols;
    for (int j = 0; j < out.cols; ++j) row[j] += p.b2[j];
  }
  return out;
}

}  // namespace hmt
