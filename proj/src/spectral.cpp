#include "lase/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lase {
namespace {

void check_k(int n, int k) {
  if (k < 1 || k > n) {
    std::ostringstream os;
    os << "requested " << k << " eigenpairs of a " << n << "-node matrix";
    throw std::invalid_argument(os.str());
  }
}

double effective_tol(const EigenOptions& opts) { return opts.tol > 0.0 ? opts.tol : 1e-8; }

void fix_signs(Matrix& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index arg = 0;
    v.col(c).cwiseAbs().maxCoeff(&arg);
    if (v(arg, c) < 0.0) v.col(c) = -v.col(c);
  }
}

/// Orders (values, vectors) by |lambda| descending, keeps the first k.
EigenPairs sort_by_magnitude(const Vector& values, const Matrix& vectors, int k) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(values[a]) > std::abs(values[b]); });
  EigenPairs out;
  out.values.resize(k);
  out.vectors.resize(vectors.rows(), k);
  for (int i = 0; i < k; ++i) {
    out.values[i] = values[order[i]];
    out.vectors.col(i) = vectors.col(order[i]);
  }
  return out;
}

void warn_on_tie(double kth, double next) {
  const double scale = std::max({std::abs(kth), std::abs(next), 1e-300});
  if (std::abs(std::abs(kth) - std::abs(next)) <= 1e-9 * scale && scale > 1e-12) {
    std::ostringstream os;
    os << "eigenvalue magnitude tie at the cut-off (|lambda| = " << std::abs(kth)
       << "); the returned basis is one of several valid choices";
    log_warning(os.str());
  }
}

EigenPairs dense_top(const Matrix& sym, int k) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("dense symmetric eigensolver failed");
  const int n = static_cast<int>(sym.rows());
  EigenPairs all = sort_by_magnitude(solver.eigenvalues(), solver.eigenvectors(), n);
  if (k < n) warn_on_tie(all.values[k - 1], all.values[k]);
  EigenPairs out;
  out.values = all.values.head(k);
  out.vectors = all.vectors.leftCols(k);
  fix_signs(out.vectors);
  return out;
}

/// Orthonormalises `w` against the columns of basis[:, 0:used] (two passes of
/// classical Gram-Schmidt) and then internally. Returns the numerical rank.
int orthonormalize_block(const Matrix& basis, int used, Matrix& w) {
  for (int pass = 0; pass < 2; ++pass) {
    if (used > 0) {
      const auto b = basis.leftCols(used);
      w.noalias() -= b * (b.transpose() * w);
    }
  }
  const double scale = std::max(1.0, w.norm());
  int rank = 0;
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < rank; ++j) w.col(c) -= w.col(j).dot(w.col(c)) * w.col(j);
      if (used > 0) {
        const auto b = basis.leftCols(used);
        w.col(c) -= b * (b.transpose() * w.col(c));
      }
    }
    const double nrm = w.col(c).norm();
    if (nrm > 1e-10 * scale) {
      w.col(rank) = w.col(c) / nrm;
      ++rank;
    }
  }
  return rank;
}

EigenPairs lanczos_top(const SymmetricOperator& op, int n, double fro, int k, const EigenOptions& opts) {
  const double tol_abs = effective_tol(opts) * fro;
  const int block = std::min(n, std::max(k + 4, 2 * k));
  const int basis_cap = std::min(n, std::max(3 * block, std::max(4 * k + 20, 60)));
  const int steps_per_cycle = std::max(2, basis_cap / block);
  const int budget = opts.max_steps_per_pair * k;

  Rng rng(opts.seed);
  Matrix start(n, block);
  for (Eigen::Index j = 0; j < start.cols(); ++j)
    for (Eigen::Index i = 0; i < n; ++i) start(i, j) = rng.normal();

  Matrix basis(n, steps_per_cycle * block);
  Matrix image(n, steps_per_cycle * block);
  int steps = 0;
  double worst = 0.0;
  while (true) {
    int used = 0;
    Matrix w = start;
    int r = orthonormalize_block(basis, 0, w);
    for (int s = 0; s < steps_per_cycle && used + block <= basis.cols(); ++s) {
      // Refill a rank-deficient block with fresh random directions.
      while (r < block) {
        Matrix extra(n, block - r);
        for (Eigen::Index j = 0; j < extra.cols(); ++j)
          for (Eigen::Index i = 0; i < n; ++i) extra(i, j) = rng.normal();
        Matrix merged(n, block);
        merged.leftCols(r) = w.leftCols(r);
        merged.rightCols(block - r) = extra;
        w = merged;
        r = orthonormalize_block(basis, used, w);
        if (used + r >= n) break;
      }
      const int take = std::min(r, static_cast<int>(basis.cols()) - used);
      if (take <= 0) break;
      basis.middleCols(used, take) = w.leftCols(take);
      Matrix out(n, take);
      op(basis.middleCols(used, take), out);
      image.middleCols(used, take) = out;
      used += take;
      ++steps;
      if (used >= n) break;
      w = out;
      r = orthonormalize_block(basis, used, w);
    }

    const auto b = basis.leftCols(used);
    const auto ab = image.leftCols(used);
    Matrix t = b.transpose() * ab;
    t = 0.5 * (t + t.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> small(t);
    if (small.info() != Eigen::Success) throw NumericalError("projected eigenproblem failed");
    EigenPairs ritz = sort_by_magnitude(small.eigenvalues(), small.eigenvectors(), used);
    const int keep = std::min(used, block);
    Matrix u = b * ritz.vectors.leftCols(keep);
    Matrix au = ab * ritz.vectors.leftCols(keep);
    worst = 0.0;
    for (int i = 0; i < k; ++i) worst = std::max(worst, (au.col(i) - ritz.values[i] * u.col(i)).norm());
    if (worst <= tol_abs || used >= n) {
      if (keep > k) warn_on_tie(ritz.values[k - 1], ritz.values[k]);
      EigenPairs out;
      out.values = ritz.values.head(k);
      out.vectors = u.leftCols(k);
      fix_signs(out.vectors);
      return out;
    }
    if (steps >= budget) {
      std::ostringstream os;
      os << "block Lanczos did not converge after " << steps << " block steps: residual " << worst
         << " > tolerance " << tol_abs;
      throw NumericalError(os.str());
    }
    start = u;
  }
}

}  // namespace

EigenPairs top_eigenpairs(const SymmetricOperator& op, int n, double fro_norm, int k, const EigenOptions& opts) {
  check_k(n, k);
  if (fro_norm == 0.0) {
    EigenPairs out;
    out.values = Vector::Zero(k);
    out.vectors = Matrix::Identity(n, k);
    return out;
  }
  if (n <= opts.dense_threshold) {
    Matrix dense(n, n);
    op(Matrix::Identity(n, n), dense);
    return dense_top(0.5 * (dense + dense.transpose()), k);
  }
  return lanczos_top(op, n, fro_norm, k, opts);
}

EigenPairs top_eigenpairs(const Graph& g, int k, const EigenOptions& opts) {
  const int n = g.n();
  check_k(n, k);
  if (g.num_edges() == 0) return top_eigenpairs(SymmetricOperator{}, n, 0.0, k, opts);
  if (n <= opts.dense_threshold) return dense_top(g.to_dense(), k);
  const SparseMatrix a = g.adjacency();
  const double fro = std::sqrt(2.0 * static_cast<double>(g.num_edges()));
  return lanczos_top([&a](const Matrix& in, Matrix& out) { out.noalias() = a * in; }, n, fro, k, opts);
}

EigenPairs top_eigenpairs(const Matrix& sym, int k, const EigenOptions& opts) {
  if (sym.rows() != sym.cols()) throw std::invalid_argument("eigensolver input must be square");
  const int n = static_cast<int>(sym.rows());
  check_k(n, k);
  const double fro = sym.norm();
  if (fro == 0.0) return top_eigenpairs(SymmetricOperator{}, n, 0.0, k, opts);
  if (n <= opts.dense_threshold) return dense_top(0.5 * (sym + sym.transpose()), k);
  return lanczos_top([&sym](const Matrix& in, Matrix& out) { out.noalias() = sym * in; }, n, fro, k, opts);
}

EigenPairs full_eigenpairs(const Matrix& sym) {
  if (sym.rows() != sym.cols()) throw std::invalid_argument("eigensolver input must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (sym + sym.transpose()));
  if (solver.info() != Eigen::Success) throw NumericalError("dense symmetric eigensolver failed");
  EigenPairs out = sort_by_magnitude(solver.eigenvalues(), solver.eigenvectors(), static_cast<int>(sym.rows()));
  fix_signs(out.vectors);
  return out;
}

double max_residual(const Matrix& sym, const EigenPairs& eig) {
  double worst = 0.0;
  for (int i = 0; i < eig.size(); ++i)
    worst = std::max(worst, (sym * eig.vectors.col(i) - eig.values[i] * eig.vectors.col(i)).norm());
  return worst;
}

AseResult ase_from_eigenpairs(const EigenPairs& eig, int d) {
  if (d < 1 || d > eig.size()) throw std::invalid_argument("embedding dimension exceeds available eigenpairs");
  AseResult r;
  std::vector<int> signs(d);
  r.x.resize(eig.vectors.rows(), d);
  for (int k = 0; k < d; ++k) {
    const double lam = eig.values[k];
    signs[k] = lam < 0.0 ? -1 : 1;
    r.x.col(k) = eig.vectors.col(k) * std::sqrt(std::abs(lam));
  }
  r.q = Signature(std::move(signs));
  r.eig.values = eig.values.head(d);
  r.eig.vectors = eig.vectors.leftCols(d);
  return r;
}

AseResult ase_embed(const Graph& g, int d, const EigenOptions& opts) {
  return ase_from_eigenpairs(top_eigenpairs(g, d, opts), d);
}

AseResult ase_embed(const Matrix& sym, int d, const EigenOptions& opts) {
  return ase_from_eigenpairs(top_eigenpairs(sym, d, opts), d);
}

std::vector<double> scree_values(const Graph& g, int k, const EigenOptions& opts) {
  const EigenPairs eig = top_eigenpairs(g, k, opts);
  std::vector<double> out(k);
  for (int i = 0; i < k; ++i) out[i] = std::abs(eig.values[i]);
  return out;
}

Matrix gft(const Matrix& x, const EigenPairs& eig) {
  if (x.rows() != eig.vectors.rows()) throw std::invalid_argument("signal length does not match the eigenbasis");
  return eig.vectors.transpose() * x;
}

Matrix igft(const Matrix& coeffs, const EigenPairs& eig) {
  if (coeffs.rows() != eig.vectors.cols())
    throw std::invalid_argument("coefficient count does not match the eigenbasis");
  return eig.vectors * coeffs;
}

// ---------------------------------------------------------------------------

void GraphFilter::validate() const {
  if (coeffs.empty()) throw std::invalid_argument("filter needs at least one coefficient matrix");
  for (const auto& h : coeffs)
    if (h.rows() != coeffs[0].rows() || h.cols() != coeffs[0].cols())
      throw std::invalid_argument("filter coefficient matrices differ in shape");
}

GraphFilter GraphFilter::scalar(const std::vector<double>& taps, ShiftNormalization norm) {
  GraphFilter f;
  f.normalization = norm;
  for (double t : taps) f.coeffs.push_back(Matrix::Constant(1, 1, t));
  f.validate();
  return f;
}

Matrix filter_apply(const GraphFilter& f, const Graph& g, const Matrix& x_in) {
  f.validate();
  if (x_in.rows() != g.n() || x_in.cols() != f.f_in()) throw std::invalid_argument("filter input has the wrong shape");
  SparseMatrix s = g.adjacency();
  if (f.normalization == ShiftNormalization::DivideByN) s *= 1.0 / g.n();
  // X_out = X H_0 + S (X H_1 + S (X H_2 + ...))
  Matrix acc = x_in * f.coeffs.back();
  for (int k = f.order() - 1; k >= 0; --k) {
    Matrix shifted = s * acc;
    acc = shifted + x_in * f.coeffs[k];
  }
  return acc;
}

double shift_eigenvalue(const GraphFilter& f, double adjacency_eigenvalue, int n) {
  return f.normalization == ShiftNormalization::DivideByN ? adjacency_eigenvalue / n : adjacency_eigenvalue;
}

Matrix frequency_response(const GraphFilter& f, double s) {
  f.validate();
  Matrix acc = f.coeffs.back();
  for (int k = f.order() - 1; k >= 0; --k) acc = (s * acc + f.coeffs[k]).eval();
  return acc;
}

Vector filtered_noise_variance(const GraphFilter& f, const Graph& g, int num_samples, std::uint64_t seed) {
  f.validate();
  if (f.f_in() != 1 || f.f_out() != 1) throw std::invalid_argument("noise variance needs a single-channel filter");
  if (num_samples < 1) throw std::invalid_argument("need at least one noise sample");
  std::vector<double> taps;
  for (const auto& h : f.coeffs) taps.push_back(h(0, 0));
  SparseMatrix s = g.adjacency();
  if (f.normalization == ShiftNormalization::DivideByN) s *= 1.0 / g.n();

  Rng rng(seed);
  Vector acc = Vector::Zero(g.n());
  constexpr int kChunk = 256;
  for (int done = 0; done < num_samples; done += kChunk) {
    const int m = std::min(kChunk, num_samples - done);
    Matrix x(g.n(), m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < g.n(); ++i) x(i, j) = rng.normal();
    Matrix y = taps.back() * x;
    for (int k = static_cast<int>(taps.size()) - 2; k >= 0; --k) {
      Matrix shifted = s * y;
      y = shifted + taps[k] * x;
    }
    acc += y.cwiseAbs2().rowwise().sum();
  }
  return acc / num_samples;
}

Vector spectral_noise_variance(const GraphFilter& f, const EigenPairs& eig, int n) {
  if (f.f_in() != 1 || f.f_out() != 1) throw std::invalid_argument("noise variance needs a single-channel filter");
  Vector out = Vector::Zero(eig.vectors.rows());
  for (int i = 0; i < eig.size(); ++i) {
    const double h = frequency_response(f, shift_eigenvalue(f, eig.values[i], n))(0, 0);
    out += h * h * eig.vectors.col(i).cwiseAbs2();
  }
  return out;
}

}  // namespace lase
