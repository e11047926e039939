#include "lase/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <string>

namespace lase {

namespace {

void check_index(int n, int u, const char* what) {
  if (u < 0 || u >= n) {
    throw std::invalid_argument(std::string(what) + " index " + std::to_string(u) + " out of range [0," +
                                std::to_string(n) + ")");
  }
}

// Builds a symmetric CSR index from unordered pairs (u <= v, sorted, unique).
void build_csr(int n, const std::vector<Edge>& pairs, std::vector<int>& offsets, std::vector<int>& cols) {
  std::vector<int> count(n + 1, 0);
  for (const auto& e : pairs) {
    ++count[e.u + 1];
    if (e.u != e.v) ++count[e.v + 1];
  }
  std::partial_sum(count.begin(), count.end(), count.begin());
  offsets = count;
  cols.assign(static_cast<std::size_t>(offsets[n]), 0);
  std::vector<int> fill(offsets.begin(), offsets.end() - 1);
  for (const auto& e : pairs) {
    cols[fill[e.u]++] = e.v;
    if (e.u != e.v) cols[fill[e.v]++] = e.u;
  }
  for (int i = 0; i < n; ++i) std::sort(cols.begin() + offsets[i], cols.begin() + offsets[i + 1]);
}

std::vector<int> check_permutation(int n, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != n) throw std::invalid_argument("permutation size mismatch");
  std::vector<int> seen(n, 0);
  for (int p : perm) {
    check_index(n, p, "permutation");
    if (seen[p]++) throw std::invalid_argument("not a permutation");
  }
  return {perm.begin(), perm.end()};
}

}  // namespace

Graph::Graph(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
  if (n < 0) throw std::invalid_argument("negative node count");
  for (auto& e : edges_) {
    check_index(n, e.u, "edge");
    check_index(n, e.v, "edge");
    if (e.u == e.v) throw std::invalid_argument("self-loop at node " + std::to_string(e.u));
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges_.begin(), edges_.end());
  const auto before = edges_.size();
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  if (edges_.size() != before) {
    log_warning("removed " + std::to_string(before - edges_.size()) + " duplicate edge(s)");
  }
  build_csr(n_, edges_, offsets_, adj_);
}

Graph Graph::complete(int n) {
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) edges.push_back({u, v});
  }
  return Graph(n, std::move(edges));
}

bool Graph::has_edge(int u, int v) const {
  if (u < 0 || v < 0 || u >= n_ || v >= n_) return false;
  const auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

SparseMatrix Graph::adjacency() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * edges_.size());
  for (const auto& e : edges_) {
    trips.emplace_back(e.u, e.v, 1.0);
    trips.emplace_back(e.v, e.u, 1.0);
  }
  SparseMatrix a(n_, n_);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

Matrix Graph::to_dense(int max_n) const {
  if (n_ > max_n) throw std::invalid_argument("refusing dense materialization of a graph with n=" + std::to_string(n_));
  Matrix a = Matrix::Zero(n_, n_);
  for (const auto& e : edges_) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

Graph Graph::permuted(std::span<const int> perm) const {
  const auto p = check_permutation(n_, perm);
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const auto& e : edges_) edges.push_back({p[e.u], p[e.v]});
  return Graph(n_, std::move(edges));
}

// ---------------------------------------------------------------------------

MaskSet::MaskSet(int n, Kind kind, std::vector<Edge> pairs) : n_(n), kind_(kind) {
  for (auto& e : pairs) {
    check_index(n, e.u, "mask");
    check_index(n, e.v, "mask");
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  build_csr(n, pairs, offsets_, cols_);
}

MaskSet MaskSet::full(int n, bool diagonal_observed) {
  std::vector<Edge> diag;
  if (!diagonal_observed) {
    diag.reserve(n);
    for (int i = 0; i < n; ++i) diag.push_back({i, i});
  }
  return MaskSet(n, Kind::AllExcept, std::move(diag));
}

MaskSet MaskSet::from_unknown_pairs(int n, std::vector<Edge> unknown, bool include_diagonal_as_unobserved) {
  if (include_diagonal_as_unobserved) {
    for (int i = 0; i < n; ++i) unknown.push_back({i, i});
  }
  return MaskSet(n, Kind::AllExcept, std::move(unknown));
}

MaskSet MaskSet::from_observed_pairs(int n, std::vector<Edge> observed) {
  return MaskSet(n, Kind::Only, std::move(observed));
}

bool MaskSet::observed(int i, int j) const {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) return false;
  const auto row = listed(i);
  const bool in_list = std::binary_search(row.begin(), row.end(), j);
  return kind_ == Kind::Only ? in_list : !in_list;
}

std::int64_t MaskSet::nnz() const {
  const auto listed_entries = static_cast<std::int64_t>(cols_.size());
  return kind_ == Kind::Only ? listed_entries : static_cast<std::int64_t>(n_) * n_ - listed_entries;
}

double MaskSet::density() const {
  if (n_ == 0) return 0.0;
  return static_cast<double>(nnz()) / (static_cast<double>(n_) * n_);
}

bool MaskSet::diagonal_unobserved() const {
  for (int i = 0; i < n_; ++i) {
    if (observed(i, i)) return false;
  }
  return true;
}

std::vector<Edge> MaskSet::unknown_pairs() const {
  std::vector<Edge> out;
  for (int i = 0; i < n_; ++i) {
    if (kind_ == Kind::AllExcept) {
      for (int j : listed(i)) {
        if (j >= i) out.push_back({i, j});
      }
    } else {
      const auto row = listed(i);
      auto it = std::lower_bound(row.begin(), row.end(), i);
      for (int j = i; j < n_; ++j) {
        if (it != row.end() && *it == j) {
          ++it;
        } else {
          out.push_back({i, j});
        }
      }
    }
  }
  return out;
}

std::vector<Edge> MaskSet::observed_pairs() const {
  std::vector<Edge> out;
  for (int i = 0; i < n_; ++i) {
    for_each_observed(i, [&](int j) {
      if (j >= i) out.push_back({i, j});
    });
  }
  return out;
}

MaskSet MaskSet::converted(Kind kind) const {
  if (kind == kind_) return *this;
  return kind == Kind::Only ? MaskSet(n_, Kind::Only, observed_pairs()) : MaskSet(n_, Kind::AllExcept, unknown_pairs());
}

MaskSet MaskSet::intersect(const MaskSet& other) const {
  if (other.n_ != n_) throw std::invalid_argument("mask size mismatch");
  MaskSet result;
  result.n_ = n_;
  result.offsets_.assign(n_ + 1, 0);
  if (kind_ == Kind::AllExcept && other.kind_ == Kind::AllExcept) {
    // Union of the exclusion lists, merged row by row.
    result.kind_ = Kind::AllExcept;
    for (int i = 0; i < n_; ++i) {
      const auto a = listed(i), b = other.listed(i);
      std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(result.cols_));
      result.offsets_[i + 1] = static_cast<int>(result.cols_.size());
    }
  } else {
    // Rows of the listed side filtered by the other mask; rows stay sorted.
    result.kind_ = Kind::Only;
    const MaskSet& sparse = kind_ == Kind::Only ? *this : other;
    const MaskSet& rest = kind_ == Kind::Only ? other : *this;
    for (int i = 0; i < n_; ++i) {
      const auto row = sparse.listed(i);
      const auto skip = rest.listed(i);
      if (rest.kind_ == Kind::AllExcept) {
        std::set_difference(row.begin(), row.end(), skip.begin(), skip.end(), std::back_inserter(result.cols_));
      } else {
        std::set_intersection(row.begin(), row.end(), skip.begin(), skip.end(), std::back_inserter(result.cols_));
      }
      result.offsets_[i + 1] = static_cast<int>(result.cols_.size());
    }
  }
  const Kind kind = result.kind_;
  // Prefer the representation with the shorter listing.
  const auto n2 = static_cast<std::int64_t>(n_) * n_;
  const auto listed_now = static_cast<std::int64_t>(result.cols_.size());
  if (listed_now > n2 - listed_now) {
    return result.converted(kind == Kind::Only ? Kind::AllExcept : Kind::Only);
  }
  return result;
}

MaskSet MaskSet::permuted(std::span<const int> perm) const {
  const auto p = check_permutation(n_, perm);
  std::vector<Edge> pairs;
  pairs.reserve(cols_.size());
  for (int i = 0; i < n_; ++i) {
    for (int j : listed(i)) {
      if (j >= i) pairs.push_back({p[i], p[j]});
    }
  }
  return MaskSet(n_, kind_, std::move(pairs));
}

Matrix MaskSet::to_dense(int max_n) const {
  if (n_ > max_n) throw std::invalid_argument("refusing dense materialization of a mask with n=" + std::to_string(n_));
  Matrix m = Matrix::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for_each_observed(i, [&](int j) { m(i, j) = 1.0; });
  }
  return m;
}

bool operator==(const MaskSet& a, const MaskSet& b) {
  if (a.n_ != b.n_) return false;
  if (a.kind_ == b.kind_) return a.offsets_ == b.offsets_ && a.cols_ == b.cols_;
  const MaskSet c = b.converted(a.kind_);
  return a.offsets_ == c.offsets_ && a.cols_ == c.cols_;
}

// ---------------------------------------------------------------------------

void SbmSpec::validate() const {
  const int c = num_blocks();
  if (c == 0) throw std::invalid_argument("SBM needs at least one block");
  if (pi.rows() != c || pi.cols() != c) throw std::invalid_argument("SBM pi must be C x C");
  for (int s : block_sizes) {
    if (s <= 0) throw std::invalid_argument("SBM block sizes must be positive");
  }
  for (int a = 0; a < c; ++a) {
    for (int b = 0; b < c; ++b) {
      const double p = pi(a, b);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("SBM probability out of [0,1] at (" + std::to_string(a) + "," + std::to_string(b) + ")");
      }
      if (p != pi(b, a)) throw std::invalid_argument("SBM pi is not symmetric");
    }
  }
}

int SbmSpec::n() const { return std::accumulate(block_sizes.begin(), block_sizes.end(), 0); }

std::vector<int> SbmSpec::labels() const {
  std::vector<int> out;
  out.reserve(n());
  for (int b = 0; b < num_blocks(); ++b) out.insert(out.end(), block_sizes[b], b);
  return out;
}

SbmSpec SbmSpec::balanced(int n, const Matrix& pi) {
  const int c = static_cast<int>(pi.rows());
  if (c <= 0 || n < c) throw std::invalid_argument("balanced SBM needs n >= C >= 1");
  SbmSpec spec{std::vector<int>(c, n / c), pi};
  spec.block_sizes.back() += n - (n / c) * c;
  return spec;
}

SbmSpec SbmSpec::with_fractions(int n, const std::vector<double>& fractions, const Matrix& pi) {
  if (fractions.size() != static_cast<std::size_t>(pi.rows())) throw std::invalid_argument("fractions/pi size mismatch");
  SbmSpec spec{{}, pi};
  int used = 0;
  for (std::size_t b = 0; b + 1 < fractions.size(); ++b) {
    const int s = static_cast<int>(std::lround(fractions[b] * n));
    spec.block_sizes.push_back(s);
    used += s;
  }
  spec.block_sizes.push_back(n - used);
  return spec;
}

}  // namespace lase
