#include "doctest.h"

#include "lase/generators.hpp"
#include "lase/graph.hpp"
#include "lase/io.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace lase;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lase_test_" + name);
}

Matrix two_block_pi(double a, double b) {
  Matrix pi(2, 2);
  pi << a, b, b, a;
  return pi;
}

std::int64_t brute_nnz(const MaskSet& m) {
  std::int64_t c = 0;
  for (int i = 0; i < m.n(); ++i)
    for (int j = 0; j < m.n(); ++j) c += m.observed(i, j);
  return c;
}

}  // namespace

TEST_CASE("graph construction normalises and validates") {
  Graph g(4, {{1, 0}, {2, 3}, {0, 1}});
  CHECK(g.num_edges() == 2);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK(g.edges()[0] == Edge{0, 1});
  CHECK(g.degree(0) == 1);
  CHECK_THROWS_AS(Graph(3, {{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(Graph(3, {{0, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(Graph(3, {{-1, 2}}), std::invalid_argument);

  const Matrix a = Graph::complete(4).to_dense();
  CHECK(a.sum() == 12);
  CHECK(a.diagonal().sum() == 0);
  CHECK((a - a.transpose()).norm() == 0);
}

TEST_CASE("sbm_sample trivial specs") {
  SbmSpec zero{{3, 3}, Matrix::Zero(2, 2)};
  CHECK(sbm_sample(zero, 1).num_edges() == 0);
  SbmSpec one{{4}, Matrix::Ones(1, 1)};
  CHECK(sbm_sample(one, 1).num_edges() == 6);
}

TEST_CASE("sbm_sample rejects invalid specs") {
  Matrix asym(2, 2);
  asym << 0.5, 0.2, 0.1, 0.5;
  CHECK_THROWS_AS(sbm_sample(SbmSpec{{2, 2}, asym}, 1), std::invalid_argument);
  CHECK_THROWS_AS(sbm_sample(SbmSpec{{2, 2}, two_block_pi(1.5, 0.1)}, 1), std::invalid_argument);
  CHECK_THROWS_AS(sbm_sample(SbmSpec{{2, 0}, two_block_pi(0.5, 0.1)}, 1), std::invalid_argument);
}

TEST_CASE("sbm_sample edge count concentrates around its expectation") {
  const SbmSpec spec{{100, 100}, two_block_pi(0.5, 0.1)};
  // Within-block pairs: 2 * C(100,2) at 0.5, between: 100*100 at 0.1.
  const double within = 2 * 4950.0;
  const double between = 10000.0;
  const double mean = within * 0.5 + between * 0.1;
  const double sd = std::sqrt(within * 0.25 + between * 0.09);
  CHECK(mean == doctest::Approx(5950.0));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double m = static_cast<double>(sbm_sample(spec, seed).num_edges());
    CHECK(std::abs(m - mean) < 5 * sd);
  }
}

TEST_CASE("generators are deterministic per seed") {
  const SbmSpec spec{{30, 20}, two_block_pi(0.4, 0.05)};
  CHECK(sbm_sample(spec, 7) == sbm_sample(spec, 7));
  CHECK(!(sbm_sample(spec, 7) == sbm_sample(spec, 8)));
  CHECK(er_mask(60, 0.3, 3) == er_mask(60, 0.3, 3));
  CHECK(ws_mask(60, 0.2, 0.1, 3) == ws_mask(60, 0.2, 0.1, 3));
  CHECK(bigbird_mask(60, 0.1, 0.1, 2, 3) == bigbird_mask(60, 0.1, 0.1, 2, 3));
}

TEST_CASE("rdpg_sample trivial and invalid inputs") {
  Embedding ones = Embedding::Zero(5, 2);
  ones.col(0).setOnes();
  CHECK(rdpg_sample(ones, Signature::identity(2), 1).num_edges() == 10);
  CHECK(rdpg_sample(Embedding::Zero(5, 2), Signature::identity(2), 1).num_edges() == 0);
  Embedding big = Embedding::Constant(3, 1, 1.2);
  CHECK_THROWS_WITH_AS(rdpg_sample(big, Signature::identity(1), 1), doctest::Contains("pair (0,1)"),
                       std::invalid_argument);
}

TEST_CASE("rdpg with block latent positions matches the SBM edge-count distribution") {
  const Matrix pi = two_block_pi(0.5, 0.1);
  const Matrix chol = pi.llt().matrixL();
  const int half = 10;
  Embedding x(2 * half, 2);
  for (int i = 0; i < 2 * half; ++i) x.row(i) = chol.row(i < half ? 0 : 1);
  const SbmSpec spec{{half, half}, pi};

  std::vector<double> a, b;
  for (std::uint64_t s = 0; s < 200; ++s) {
    a.push_back(static_cast<double>(rdpg_sample(x, Signature::identity(2), 1000 + s).num_edges()));
    b.push_back(static_cast<double>(sbm_sample(spec, 5000 + s).num_edges()));
  }
  // Two-sample chi-square on quintiles of the pooled sample.
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> cuts;
  for (int q = 1; q < 5; ++q) cuts.push_back(pooled[q * pooled.size() / 5]);
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const auto bin = [&](double v) { return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin()); };
  std::vector<double> ca(cuts.size() + 1, 0.0), cb(cuts.size() + 1, 0.0);
  for (double v : a) ca[bin(v)] += 1;
  for (double v : b) cb[bin(v)] += 1;
  double chi2 = 0.0;
  for (std::size_t k = 0; k < ca.size(); ++k)
    if (ca[k] + cb[k] > 0) chi2 += (ca[k] - cb[k]) * (ca[k] - cb[k]) / (ca[k] + cb[k]);
  // 99.9% quantile of chi-square with 4 degrees of freedom.
  CHECK(chi2 < 18.47);
}

TEST_CASE("mask densities and representations") {
  const MaskSet full = MaskSet::full(10, false);
  CHECK(full.nnz() == 90);
  CHECK(full.density() == doctest::Approx(0.9));
  CHECK(full.diagonal_unobserved());
  CHECK(MaskSet::full(10, true).density() == 1.0);

  const MaskSet m = MaskSet::from_unknown_pairs(6, {{0, 1}, {2, 4}});
  CHECK(!m.observed(0, 1));
  CHECK(!m.observed(1, 0));
  CHECK(!m.observed(3, 3));
  CHECK(m.observed(0, 2));
  CHECK(m.nnz() == 36 - 6 - 4);
  CHECK(m.nnz() == brute_nnz(m));
  CHECK(m.unknown_pairs().size() == 8);  // two pairs + six diagonal entries

  const MaskSet only = MaskSet::from_observed_pairs(6, {{0, 1}, {3, 3}});
  CHECK(only.nnz() == 3);
  CHECK(only.nnz() == brute_nnz(only));
  CHECK(only.observed(3, 3));

  const MaskSet both = m.intersect(only);
  CHECK(both.nnz() == 0);
  const MaskSet same = m.intersect(MaskSet::full(6, true));
  CHECK(same == m);
  CHECK(same.to_dense() == m.to_dense());

  std::vector<int> seen;
  m.for_each_observed(0, [&](int j) { seen.push_back(j); });
  CHECK(seen == std::vector<int>{2, 3, 4, 5});
}

TEST_CASE("mask intersection agrees with the dense product") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::vector<MaskSet> masks{random_unknown_mask(25, 0.3, s), random_unknown_mask(25, 0.1, s + 50),
                                     er_mask(25, 0.4, s + 100), er_mask(25, 0.7, s + 150)};
    for (const MaskSet& a : masks)
      for (const MaskSet& b : masks) {
        const MaskSet c = a.intersect(b);
        CHECK(c.to_dense() == a.to_dense().cwiseProduct(b.to_dense()));
        CHECK(c.nnz() == brute_nnz(c));
      }
  }
}

TEST_CASE("attention mask generators hit their densities") {
  CHECK(er_mask(100, 0.5, 1).density() == doctest::Approx(0.5).epsilon(0.1));
  CHECK(er_mask(300, 0.3, 1).density() == doctest::Approx(0.3).epsilon(0.1));
  CHECK(er_mask(50, 1.0, 1) == MaskSet::full(50, false));
  CHECK_THROWS_AS(er_mask(100, 0.01, 1), std::invalid_argument);

  const MaskSet ws = ws_mask(200, 0.3, 0.1, 2);
  CHECK(ws.density() == doctest::Approx(0.3).epsilon(0.1));
  const MaskSet bb = bigbird_mask(300, 0.2, 0.1, 3, 2);
  CHECK(bb.density() == doctest::Approx(bigbird_expected_density(300, 0.2, 0.1, 3)).epsilon(0.1));
}

TEST_CASE("ws_mask with p = 0 is a ring lattice") {
  const int n = 40;
  const MaskSet ws = ws_mask(n, 0.1, 0.0, 9);  // degree 4
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int dist = std::min((i - j + n) % n, (j - i + n) % n);
      CHECK(ws.observed(i, j) == (dist >= 1 && dist <= 2));
    }
}

TEST_CASE("bigbird_mask without random or global parts is a band") {
  const int n = 30;
  const MaskSet bb = bigbird_mask(n, 0.2, 0.0, 0, 4);  // total width 6, half-width 3
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) CHECK(bb.observed(i, j) == (i != j && std::abs(i - j) <= 3));
}

TEST_CASE("bigbird global nodes attend to everything") {
  const MaskSet bb = bigbird_mask(50, 0.1, 0.0, 2, 4);
  for (int j = 2; j < 50; ++j) {
    CHECK(bb.observed(0, j));
    CHECK(bb.observed(j, 1));
  }
}

TEST_CASE("induced_subgraph") {
  const SbmSpec spec{{40, 40}, two_block_pi(0.3, 0.05)};
  const Graph g = sbm_sample(spec, 3);
  const Subgraph all = induced_subgraph(g, 1.0, 5);
  CHECK(all.graph == g);
  for (int i = 0; i < g.n(); ++i) CHECK(all.parent_index[i] == i);

  const Subgraph part = induced_subgraph(g, 0.25, 5);
  CHECK(part.graph.n() == 20);
  CHECK(part.graph.num_edges() <= g.num_edges());
  CHECK(std::is_sorted(part.parent_index.begin(), part.parent_index.end()));
  for (const Edge& e : part.graph.edges()) CHECK(g.has_edge(part.parent_index[e.u], part.parent_index[e.v]));

  const Subgraph k = induced_subgraph(Graph::complete(30), 0.5, 1);
  CHECK(k.graph == Graph::complete(15));
  CHECK_THROWS_AS(induced_subgraph(g, 0.001, 1), std::invalid_argument);
}

TEST_CASE("edge list round trip and validation") {
  const Graph tri(3, {{0, 1}, {1, 2}, {0, 2}});
  const auto path = temp_file("tri.edges");
  io::save_edge_list(tri, path);
  CHECK(io::load_edge_list(path) == tri);

  const auto bad = temp_file("bad.edges");
  std::ofstream(bad) << "3 0\n0 1\n";
  CHECK_THROWS_WITH_AS(io::load_edge_list(bad), doctest::Contains("declared 0 entries but 1 present"), FormatError);

  std::ofstream(bad) << "# comment\n3 2\n0 1\n0 5\n";
  CHECK_THROWS_AS(io::load_edge_list(bad), FormatError);

  std::ofstream(bad) << "3 2\n0 1\n1 0\n";
  const Graph dedup = io::load_edge_list(bad);
  CHECK(dedup.num_edges() == 1);
}

TEST_CASE("mask round trip preserves density") {
  // Bipartite-style unknown block: every pair between two groups is unknown.
  std::vector<Edge> unknown;
  for (int u = 0; u < 4; ++u)
    for (int v = 4; v < 10; ++v) unknown.push_back({u, v});
  const MaskSet m = MaskSet::from_unknown_pairs(10, unknown);
  const auto path = temp_file("mask.txt");
  io::save_mask(m, path);
  const MaskSet back = io::load_mask(path);
  CHECK(back == m);
  // 24 unknown pairs counted twice plus the diagonal.
  CHECK(1.0 - back.density() == doctest::Approx((48.0 + 10.0) / 100.0));
}

TEST_CASE("embedding, label and split round trips") {
  Embedding x(3, 2);
  x << 0.1, -1.0 / 3.0, 2.5e-17, 7.0, -0.0, 1e10;
  const auto path = temp_file("x.emb");
  io::save_embedding(x, path);
  CHECK(io::load_embedding(path) == x);

  const std::vector<int> labels{0, 2, -1, 1};
  io::save_labels(labels, temp_file("labels.txt"));
  CHECK(io::load_labels(temp_file("labels.txt"), 4) == labels);

  const std::vector<io::Split> splits{io::Split::Train, io::Split::Val, io::Split::Test, io::Split::None};
  io::save_splits(splits, temp_file("splits.txt"));
  CHECK(io::load_splits(temp_file("splits.txt"), 4) == splits);
}

TEST_CASE("permutation keeps graph and mask structure") {
  const Graph g(5, {{0, 1}, {1, 2}, {3, 4}});
  const std::vector<int> perm{4, 2, 0, 1, 3};
  const Graph pg = g.permuted(perm);
  for (const Edge& e : g.edges()) CHECK(pg.has_edge(perm[e.u], perm[e.v]));
  const MaskSet m = MaskSet::from_unknown_pairs(5, {{0, 3}});
  const MaskSet pm = m.permuted(perm);
  CHECK(!pm.observed(perm[0], perm[3]));
  CHECK(pm.nnz() == m.nnz());
}
