#include "doctest.h"

#include "lase/generators.hpp"
#include "lase/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace lase;

namespace {

Matrix two_block_pi(double a, double b) {
  Matrix pi(2, 2);
  pi << a, b, b, a;
  return pi;
}

double orthonormality_error(const Matrix& v) {
  return (v.transpose() * v - Matrix::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
}

void check_contract(const Matrix& a, const EigenPairs& eig, double tol = 1e-8) {
  CHECK(orthonormality_error(eig.vectors) < 1e-8);
  CHECK(max_residual(a, eig) <= tol * std::max(a.norm(), 1.0));
  for (int i = 1; i < eig.size(); ++i) CHECK(std::abs(eig.values[i - 1]) >= std::abs(eig.values[i]) - 1e-12);
}

double full_mask_loss(const Matrix& a, const Embedding& x, const Signature& q) {
  Matrix r = a - x * q.as_matrix() * x.transpose();
  r.diagonal().setZero();
  return r.squaredNorm();
}

}  // namespace

TEST_CASE("complete graph K4 spectrum") {
  const Graph k4 = Graph::complete(4);
  const EigenPairs eig = top_eigenpairs(k4, 4);
  CHECK(eig.values[0] == doctest::Approx(3.0));
  for (int i = 1; i < 4; ++i) CHECK(eig.values[i] == doctest::Approx(-1.0));
  for (int i = 0; i < 4; ++i) CHECK(eig.vectors(i, 0) == doctest::Approx(0.5));
  check_contract(k4.to_dense(), eig);
  const auto scree = scree_values(k4, 4);
  CHECK(scree[0] == doctest::Approx(3.0));
  for (int i = 1; i < 4; ++i) CHECK(scree[i] == doctest::Approx(1.0));
}

TEST_CASE("path graph on three nodes") {
  // det(A - l I) = -l^3 + 2 l, roots sqrt(2), 0, -sqrt(2).
  const Graph p3(3, {{0, 1}, {1, 2}});
  const EigenPairs eig = top_eigenpairs(p3, 3);
  CHECK(std::abs(eig.values[0]) == doctest::Approx(std::sqrt(2.0)));
  CHECK(std::abs(eig.values[1]) == doctest::Approx(std::sqrt(2.0)));
  CHECK(eig.values[0] * eig.values[1] == doctest::Approx(-2.0));
  CHECK(eig.values[2] == doctest::Approx(0.0).epsilon(1e-12));
  const auto scree = scree_values(p3, 3);
  CHECK(scree[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(scree[2] == doctest::Approx(0.0));
}

TEST_CASE("empty graph has zero scree values") {
  const auto scree = scree_values(Graph(5, {}), 3);
  CHECK(scree == std::vector<double>{0.0, 0.0, 0.0});
  CHECK_THROWS_AS(top_eigenpairs(Graph(3, {}), 4), std::invalid_argument);
}

TEST_CASE("sign convention makes the largest entry positive") {
  const Graph g = sbm_sample(SbmSpec{{20, 20}, two_block_pi(0.5, 0.1)}, 2);
  const EigenPairs eig = top_eigenpairs(g, 3);
  for (int c = 0; c < 3; ++c) {
    Eigen::Index arg = 0;
    eig.vectors.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(eig.vectors(arg, c) > 0.0);
  }
}

TEST_CASE("two-block SBM eigenvalues of A/N") {
  const int n = 400;
  const Graph g = sbm_sample(SbmSpec::balanced(n, two_block_pi(0.5, 0.1)), 11);
  const EigenPairs eig = top_eigenpairs(g, 2);
  CHECK(eig.values[0] / n == doctest::Approx(0.3).epsilon(0.05));
  CHECK(eig.values[1] / n == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("block Lanczos agrees with the dense solver") {
  const Graph g = sbm_sample(SbmSpec::balanced(700, two_block_pi(0.2, 0.05)), 4);
  const Matrix a = g.to_dense();
  EigenOptions lanczos;
  lanczos.dense_threshold = 0;
  EigenOptions dense;
  dense.dense_threshold = 10000;
  for (int k : {1, 2, 6}) {
    const EigenPairs l = top_eigenpairs(g, k, lanczos);
    const EigenPairs d = top_eigenpairs(g, k, dense);
    check_contract(a, l);
    for (int i = 0; i < k; ++i) CHECK(l.values[i] == doctest::Approx(d.values[i]).epsilon(1e-9));
  }
}

TEST_CASE("block Lanczos on a disassortative graph finds negative eigenvalues") {
  const Graph g = sbm_sample(SbmSpec::balanced(600, two_block_pi(0.1, 0.5)), 8);
  EigenOptions opts;
  opts.dense_threshold = 0;
  const EigenPairs eig = top_eigenpairs(g, 2, opts);
  check_contract(g.to_dense(), eig);
  CHECK(eig.values[0] > 0);
  CHECK(eig.values[1] < 0);
}

TEST_CASE("ASE recovers an exact low-rank matrix") {
  Rng rng(5);
  Embedding x0(40, 2);
  for (int i = 0; i < 40; ++i) x0.row(i) << 0.3 + 0.5 * rng.uniform(), 0.4 * rng.uniform();
  const Matrix p = x0 * x0.transpose();
  const AseResult r = ase_embed(p, 2);
  CHECK(r.q.is_identity());
  CHECK((p - Matrix(r.x * r.x.transpose())).norm() <= 1e-6);
}

TEST_CASE("ASE signature follows eigenvalue signs") {
  const Graph g = sbm_sample(SbmSpec::balanced(200, two_block_pi(0.1, 0.5)), 3);
  const AseResult r = ase_embed(g, 2);
  CHECK(r.q[0] == 1);
  CHECK(r.q[1] == -1);
  const Graph a = sbm_sample(SbmSpec::balanced(200, two_block_pi(0.5, 0.1)), 3);
  CHECK(ase_embed(a, 2).q.is_identity());
}

TEST_CASE("ASE loss is below random embeddings of the same shape") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Graph g = sbm_sample(SbmSpec::balanced(60, two_block_pi(0.6, 0.2)), s);
    const Matrix a = g.to_dense();
    const AseResult r = ase_embed(g, 2);
    const double best = full_mask_loss(a, r.x, r.q);
    for (std::uint64_t t = 0; t < 100; ++t) {
      const Embedding x = uniform_embedding(60, 2, 1000 * s + t);
      CHECK(best < 0.99 * full_mask_loss(a, x, Signature::identity(2)));
    }
  }
}

TEST_CASE("GFT basics") {
  const Graph g = sbm_sample(SbmSpec::balanced(30, two_block_pi(0.5, 0.2)), 1);
  const EigenPairs full = top_eigenpairs(g, 30);
  const Matrix c = gft(full.vectors.col(0), full);
  CHECK(c(0, 0) == doctest::Approx(1.0));
  CHECK(c.bottomRows(29).norm() < 1e-10);

  Rng rng(9);
  Matrix x(30, 3);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
  const Matrix xt = gft(x, full);
  CHECK(xt.norm() == doctest::Approx(x.norm()));
  CHECK((igft(xt, full) - x).norm() <= 1e-8);
  CHECK_THROWS_AS(gft(Matrix::Ones(29, 1), full), std::invalid_argument);
  CHECK_THROWS_AS(igft(Matrix::Ones(3, 1), full), std::invalid_argument);
}

TEST_CASE("constant signal on a regular graph sits on the top mode") {
  // Ring of 12 nodes with chords to distance 2: 4-regular.
  std::vector<Edge> edges;
  for (int i = 0; i < 12; ++i) {
    edges.push_back({i, (i + 1) % 12});
    edges.push_back({i, (i + 2) % 12});
  }
  const Graph g(12, edges);
  const EigenPairs full = top_eigenpairs(g, 12);
  CHECK(full.values[0] == doctest::Approx(4.0));
  const Matrix c = gft(Matrix::Ones(12, 1), full);
  CHECK(c(0, 0) * c(0, 0) == doctest::Approx(12.0));
  CHECK(c.bottomRows(11).norm() < 1e-8);
}

TEST_CASE("filter_apply") {
  const Graph g = sbm_sample(SbmSpec::balanced(25, two_block_pi(0.5, 0.1)), 6);
  Rng rng(2);
  Matrix x(25, 2);
  for (int i = 0; i < 25; ++i) x.row(i) << rng.normal(), rng.normal();

  GraphFilter k0;
  k0.coeffs = {Matrix::Constant(2, 3, 0.5)};
  CHECK((filter_apply(k0, g, x) - x * k0.coeffs[0]).norm() < 1e-14);

  // Direct evaluation sum_k A^k X H_k.
  GraphFilter f;
  f.coeffs = {Matrix::Random(2, 3), Matrix::Random(2, 3), Matrix::Random(2, 3)};
  for (auto norm : {ShiftNormalization::None, ShiftNormalization::DivideByN}) {
    f.normalization = norm;
    Matrix s = g.to_dense();
    if (norm == ShiftNormalization::DivideByN) s /= 25.0;
    const Matrix direct = x * f.coeffs[0] + s * x * f.coeffs[1] + s * s * x * f.coeffs[2];
    CHECK((filter_apply(f, g, x) - direct).norm() < 1e-10 * direct.norm());
  }
  CHECK_THROWS_AS(filter_apply(f, g, Matrix::Ones(25, 3)), std::invalid_argument);
}

TEST_CASE("eigenvector input is scaled by the frequency response") {
  const Graph g = sbm_sample(SbmSpec::balanced(30, two_block_pi(0.5, 0.1)), 6);
  const EigenPairs eig = top_eigenpairs(g, 30);
  const GraphFilter f = GraphFilter::scalar({0.3, -0.7, 0.2, 0.05}, ShiftNormalization::DivideByN);
  for (int i = 0; i < 30; i += 7) {
    const double h = frequency_response(f, shift_eigenvalue(f, eig.values[i], 30))(0, 0);
    const Matrix out = filter_apply(f, g, eig.vectors.col(i));
    CHECK((out - h * eig.vectors.col(i)).norm() < 1e-10);
  }
}

TEST_CASE("filter_apply commutes with node permutation") {
  const Graph g = sbm_sample(SbmSpec::balanced(20, two_block_pi(0.4, 0.2)), 1);
  const auto perm = random_permutation(20, 3);
  Matrix x = Matrix::Random(20, 2);
  Matrix px(20, 2);
  for (int i = 0; i < 20; ++i) px.row(perm[i]) = x.row(i);
  GraphFilter f;
  f.coeffs = {Matrix::Random(2, 2), Matrix::Random(2, 2)};
  const Matrix y = filter_apply(f, g, x);
  const Matrix py = filter_apply(f, g.permuted(perm), px);
  for (int i = 0; i < 20; ++i) CHECK((py.row(perm[i]) - y.row(i)).norm() < 1e-12);
}

TEST_CASE("filtered white noise variance") {
  const Graph g = sbm_sample(SbmSpec::balanced(40, two_block_pi(0.5, 0.1)), 3);
  const int samples = 4000;

  const Vector id = filtered_noise_variance(GraphFilter::scalar({1.0}), g, samples, 1);
  // Per-node standard error of a chi-square(1) mean is sqrt(2 / samples).
  CHECK((id.array() - 1.0).abs().maxCoeff() < 5 * std::sqrt(2.0 / samples));

  const GraphFilter f = GraphFilter::scalar({0.2, 1.5, -0.8}, ShiftNormalization::DivideByN);
  const Vector mc = filtered_noise_variance(f, g, samples, 2);
  const Vector exact = spectral_noise_variance(f, top_eigenpairs(g, 40), 40);
  // Variance of y^2 for Gaussian y is 2 sigma^4.
  for (int i = 0; i < 40; ++i) CHECK(std::abs(mc[i] - exact[i]) < 4 * std::sqrt(2.0 / samples) * exact[i]);
}

TEST_CASE("dominant-mode filter on a symmetric SBM gives near-constant variance") {
  // With Pi = [[.5,.1],[.1,.5]] the two top modes of A/N are ~0.3 and ~0.2 and
  // their eigenvectors have squared entries ~1/N. A filter with taps on S
  // concentrates output power on these modes.
  const int n = 300;
  const Graph g = sbm_sample(SbmSpec::balanced(n, two_block_pi(0.5, 0.1)), 5);
  const GraphFilter f = GraphFilter::scalar({0.0, 0.0, 0.0, 40.0}, ShiftNormalization::DivideByN);
  const EigenPairs eig = top_eigenpairs(g, 2);
  const double h1 = frequency_response(f, eig.values[0] / n)(0, 0);
  const double h2 = frequency_response(f, eig.values[1] / n)(0, 0);
  const double predicted = (h1 * h1 + h2 * h2) / n;
  const Vector mc = filtered_noise_variance(f, g, 3000, 7);
  CHECK(mc.mean() == doctest::Approx(predicted).epsilon(0.1));
  // Both communities see the same variance, so it carries no class information.
  const double first = mc.head(n / 2).mean();
  const double second = mc.tail(n / 2).mean();
  CHECK(std::abs(first - second) < 0.05 * mc.mean());
  CHECK(std::sqrt((mc.array() - mc.mean()).square().mean()) < 0.3 * mc.mean());
}
