#pragma once

#include "lase/common.hpp"

#include <Eigen/SparseCore>

#include <compare>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace lase {

/// Unordered node pair, stored with u <= v.
struct Edge {
  int u = 0;
  int v = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Undirected, unweighted simple graph. Edges are kept sorted with u < v,
/// together with a symmetric CSR neighbour index.
class Graph {
 public:
  Graph() = default;

  /// Validates indices, rejects self-loops, orients pairs as u < v and
  /// removes duplicates (logging a warning when any are found).
  Graph(int n, std::vector<Edge> edges);

  static Graph complete(int n);

  int n() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const int> neighbors(int u) const {
    return {adj_.data() + offsets_[u], adj_.data() + offsets_[u + 1]};
  }
  int degree(int u) const { return offsets_[u + 1] - offsets_[u]; }
  bool has_edge(int u, int v) const;

  /// Symmetric 0/1 adjacency, zero diagonal.
  SparseMatrix adjacency() const;

  /// Dense adjacency; throws if n exceeds max_n.
  Matrix to_dense(int max_n = 8192) const;

  /// Graph with node i relabelled to perm[i].
  Graph permuted(std::span<const int> perm) const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.n_ == b.n_ && a.edges_ == b.edges_; }

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<int> offsets_{0};
  std::vector<int> adj_;
};

/// Binary mask over ordered node pairs (i, j), always symmetric.
///
/// Two storage forms share one CSR layout: `AllExcept` lists the unobserved
/// entries of each row (everything else is observed), `Only` lists the
/// observed ones. Diagonal entries appear in the listing as (i, i).
/// Density is nnz / n^2 over ordered pairs.
class MaskSet {
 public:
  enum class Kind { AllExcept, Only };

  MaskSet() = default;

  /// Every ordered pair observed, the diagonal optionally excluded.
  /// full(n, false) is M = 11^T - I.
  static MaskSet full(int n, bool diagonal_observed = false);

  /// Observed everywhere except `unknown` pairs (u == v allowed for a single
  /// diagonal entry). With include_diagonal_as_unobserved the whole diagonal
  /// is also unobserved.
  static MaskSet from_unknown_pairs(int n, std::vector<Edge> unknown, bool include_diagonal_as_unobserved = true);

  /// Observed only on `observed` pairs (u == v allowed).
  static MaskSet from_observed_pairs(int n, std::vector<Edge> observed);

  int n() const { return n_; }
  Kind kind() const { return kind_; }

  bool observed(int i, int j) const;
  /// Number of observed ordered entries.
  std::int64_t nnz() const;
  double density() const;
  /// True when every diagonal entry is unobserved.
  bool diagonal_unobserved() const;

  /// Row i of the CSR listing (excluded columns for AllExcept, observed ones for Only).
  std::span<const int> listed(int i) const {
    return {cols_.data() + offsets_[i], cols_.data() + offsets_[i + 1]};
  }
  std::size_t listed_count() const { return cols_.size(); }

  /// Unobserved unordered pairs, u <= v, sorted. O(n^2) for `Only` masks.
  std::vector<Edge> unknown_pairs() const;
  /// Observed unordered pairs, u <= v, sorted. O(n^2) for `AllExcept` masks.
  std::vector<Edge> observed_pairs() const;

  /// Entry-wise product of two masks over the same n. The result uses
  /// whichever storage form lists fewer entries.
  MaskSet intersect(const MaskSet& other) const;

  MaskSet permuted(std::span<const int> perm) const;

  Matrix to_dense(int max_n = 8192) const;

  /// Calls f(j) for every observed column j of row i in increasing order.
  template <class F>
  void for_each_observed(int i, F&& f) const {
    const auto row = listed(i);
    if (kind_ == Kind::Only) {
      for (int j : row) f(j);
      return;
    }
    int next = 0;
    for (int skip : row) {
      for (int j = next; j < skip; ++j) f(j);
      next = skip + 1;
    }
    for (int j = next; j < n_; ++j) f(j);
  }

  friend bool operator==(const MaskSet& a, const MaskSet& b);

 private:
  MaskSet(int n, Kind kind, std::vector<Edge> pairs);
  MaskSet converted(Kind kind) const;

  int n_ = 0;
  Kind kind_ = Kind::AllExcept;
  std::vector<int> offsets_{0};
  std::vector<int> cols_;
};

/// Stochastic block model: contiguous blocks of the given sizes and a
/// symmetric matrix of connection probabilities.
struct SbmSpec {
  std::vector<int> block_sizes;
  Matrix pi;

  void validate() const;
  int n() const;
  int num_blocks() const { return static_cast<int>(block_sizes.size()); }
  /// Block index per node.
  std::vector<int> labels() const;

  /// Equal block sizes summing to n (the last block absorbs the remainder).
  static SbmSpec balanced(int n, const Matrix& pi);
  /// Block sizes proportional to `fractions`, rounded, summing to n.
  static SbmSpec with_fractions(int n, const std::vector<double>& fractions, const Matrix& pi);
};

}  // namespace lase
