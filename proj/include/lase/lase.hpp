#pragma once

#include "lase/common.hpp"
#include "lase/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lase {

/// Coefficients of an L-layer LASE/GLASE stack.
///
/// With shared weights only h1[0], h2[0] exist and every layer reads them.
struct LaseParams {
  int layers = 1;
  int d = 1;
  bool shared = false;
  bool normalize = true;
  Signature q;
  std::vector<Matrix> h1;
  std::vector<Matrix> h2;

  const Matrix& H1(int l) const { return shared ? h1[0] : h1[l]; }
  const Matrix& H2(int l) const { return shared ? h2[0] : h2[l]; }
  Matrix& H1(int l) { return shared ? h1[0] : h1[l]; }
  Matrix& H2(int l) { return shared ? h2[0] : h2[l]; }

  /// Number of distinct coefficient matrices (L, or 1 when shared).
  int stored_layers() const { return shared ? 1 : layers; }
  /// 2 * L * d^2 when decoupled, 2 * d^2 when shared.
  std::int64_t num_parameters() const;
  void validate() const;

  /// H1 = H2 = scale * I in every layer.
  static LaseParams scaled_identity(int layers, int d, double scale, bool shared, bool normalize, Signature q);
  static LaseParams zeros(int layers, int d, bool shared, bool normalize, Signature q);

  /// Same shared coefficients unrolled to a different depth.
  LaseParams with_layers(int new_layers) const;
};

/// One (graph, observation mask, attention mask, X0) instance.
struct LaseInput {
  Graph graph;
  MaskSet obs;
  MaskSet att;
  Embedding x0;

  /// Observation mask 11^T - I, full attention.
  static LaseInput with_defaults(Graph g, Embedding x0);
  void validate() const;
  int n() const { return graph.n(); }
};

/// Quantities shared by every layer of a forward pass on one input.
struct LaseContext {
  SparseMatrix s;  // M_obs o A
  MaskSet w;       // M_obs o M_att
  double c1 = 1.0;
  double c2 = 1.0;
  double p_obs = 1.0;
  double p_att = 1.0;

  static LaseContext build(const LaseInput& in, bool normalize);
};

/// X_{l+1} = X + c1 S X H1 Q - c2 (W o (X Q X^T)) X H2 Q.
Embedding lase_block(const Embedding& x, const Matrix& h1, const Matrix& h2, const Signature& q,
                     const LaseContext& ctx);

/// Intermediate states kept for the backward pass.
struct LaseTape {
  std::vector<Embedding> x;   // X_0 .. X_L
  std::vector<Embedding> sx;  // S X_l
  std::vector<Embedding> gx;  // (W o X_l Q X_l^T) X_l
};

Embedding lase_forward(const LaseInput& in, const LaseParams& p);
Embedding lase_forward(const LaseInput& in, const LaseParams& p, const LaseContext& ctx, LaseTape* tape = nullptr);

/// Gradients laid out like LaseParams::h1 / h2 (one entry when shared).
struct LaseGrads {
  std::vector<Matrix> h1;
  std::vector<Matrix> h2;

  static LaseGrads zeros_like(const LaseParams& p);
  LaseGrads& operator+=(const LaseGrads& o);
  LaseGrads& operator*=(double s);
  double squared_norm() const;
};

/// Reverse pass: accumulates d(loss)/dH into `grads` given dL/dX_L, and
/// returns dL/dX_0.
Embedding lase_backward(const LaseParams& p, const LaseContext& ctx, const LaseTape& tape, const Embedding& x_bar,
                        LaseGrads& grads);

/// Signature from the averaged eigenvalue signs of m random induced subgraphs.
Signature estimate_q(const Graph& g, int d, int num_subgraphs, double fraction, std::uint64_t seed);

/// Row i moves to row perm[i].
Embedding permute_rows(const Embedding& x, std::span<const int> perm);
LaseInput permute_input(const LaseInput& in, std::span<const int> perm);

/// Text format: "LASE L d sharedFlag normalizeFlag", Q as d signed integers,
/// then for each layer H1 and H2 row-major, 17 significant digits.
void save_params(const LaseParams& p, const std::filesystem::path& path);
LaseParams load_params(const std::filesystem::path& path);

}  // namespace lase
