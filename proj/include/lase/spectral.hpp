#pragma once

#include "lase/common.hpp"
#include "lase/graph.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace lase {

/// k eigenpairs sorted by |lambda| descending; columns of `vectors` are orthonormal.
struct EigenPairs {
  Vector values;
  Matrix vectors;

  int size() const { return static_cast<int>(values.size()); }
};

struct EigenOptions {
  /// Absolute residual tolerance is tol * ||A||_F; <= 0 selects 1e-8.
  double tol = 0.0;
  /// Graphs up to this size go to the dense symmetric solver.
  int dense_threshold = 512;
  std::uint64_t seed = 0x5eed;
  /// Block-step budget is max_steps_per_pair * k.
  int max_steps_per_pair = 50;
};

/// Applies a symmetric operator to a block of vectors: out = A * in.
using SymmetricOperator = std::function<void(const Matrix& in, Matrix& out)>;

/// Top-k eigenpairs of the adjacency matrix by magnitude. Eigenvectors use a
/// fixed sign: the entry of largest magnitude is positive.
EigenPairs top_eigenpairs(const Graph& g, int k, const EigenOptions& opts = {});
/// Same contract for an explicit symmetric matrix (weighted input).
EigenPairs top_eigenpairs(const Matrix& sym, int k, const EigenOptions& opts = {});
/// Same contract for a matrix-free operator of size n with Frobenius norm fro_norm.
EigenPairs top_eigenpairs(const SymmetricOperator& op, int n, double fro_norm, int k, const EigenOptions& opts = {});

/// Full spectrum of a small symmetric matrix, sorted by |lambda| descending.
EigenPairs full_eigenpairs(const Matrix& sym);

/// Largest residual ||A v_i - lambda_i v_i|| over the pairs.
double max_residual(const Matrix& sym, const EigenPairs& eig);

struct AseResult {
  Embedding x;
  Signature q;
  EigenPairs eig;
};

/// Adjacency spectral embedding X = V |Lambda|^{1/2} with Q = sign(Lambda)
/// over the d largest-magnitude eigenpairs (zero eigenvalues get +1).
AseResult ase_embed(const Graph& g, int d, const EigenOptions& opts = {});
AseResult ase_embed(const Matrix& sym, int d, const EigenOptions& opts = {});
AseResult ase_from_eigenpairs(const EigenPairs& eig, int d);

/// |lambda| of the k largest-magnitude eigenvalues, descending.
std::vector<double> scree_values(const Graph& g, int k, const EigenOptions& opts = {});

/// Graph Fourier transform V^T x over the basis in `eig`.
Matrix gft(const Matrix& x, const EigenPairs& eig);
/// Inverse transform V c.
Matrix igft(const Matrix& coeffs, const EigenPairs& eig);

// ---------------------------------------------------------------------------
// Polynomial graph filters  X_out = sum_k S^k X_in H_k  with S = A or A / N.

enum class ShiftNormalization { None, DivideByN };

struct GraphFilter {
  std::vector<Matrix> coeffs;  // K + 1 matrices, F_in x F_out
  ShiftNormalization normalization = ShiftNormalization::None;

  int order() const { return static_cast<int>(coeffs.size()) - 1; }
  int f_in() const { return coeffs.empty() ? 0 : static_cast<int>(coeffs[0].rows()); }
  int f_out() const { return coeffs.empty() ? 0 : static_cast<int>(coeffs[0].cols()); }
  void validate() const;

  /// Single-channel filter from scalar taps h_0..h_K.
  static GraphFilter scalar(const std::vector<double>& taps, ShiftNormalization norm = ShiftNormalization::None);
};

/// Horner evaluation of the filter on graph g.
Matrix filter_apply(const GraphFilter& f, const Graph& g, const Matrix& x_in);

/// Eigenvalue of the shift operator for an adjacency eigenvalue.
double shift_eigenvalue(const GraphFilter& f, double adjacency_eigenvalue, int n);

/// sum_k H_k s^k evaluated at a shift eigenvalue s (F_in x F_out).
Matrix frequency_response(const GraphFilter& f, double shift_value);

/// Monte-Carlo per-node variance of a single-channel filter's output under
/// standard Gaussian white-noise input.
Vector filtered_noise_variance(const GraphFilter& f, const Graph& g, int num_samples, std::uint64_t seed);

/// Closed form sum_i h(lambda_i)^2 v_i^2 over the supplied eigenbasis.
Vector spectral_noise_variance(const GraphFilter& f, const EigenPairs& eig, int n);

}  // namespace lase
