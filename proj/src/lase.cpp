#include "lase/lase.hpp"

#include "lase/gd.hpp"
#include "lase/generators.hpp"
#include "lase/spectral.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace lase {

std::int64_t LaseParams::num_parameters() const {
  return 2LL * stored_layers() * static_cast<std::int64_t>(d) * d;
}

void LaseParams::validate() const {
  if (layers < 1) throw std::invalid_argument("LASE needs at least one layer");
  if (d < 1) throw std::invalid_argument("LASE embedding dimension must be positive");
  if (q.dim() != d) throw std::invalid_argument("signature dimension does not match d");
  const std::size_t want = static_cast<std::size_t>(stored_layers());
  if (h1.size() != want || h2.size() != want) throw std::invalid_argument("wrong number of coefficient matrices");
  for (std::size_t l = 0; l < want; ++l)
    if (h1[l].rows() != d || h1[l].cols() != d || h2[l].rows() != d || h2[l].cols() != d)
      throw std::invalid_argument("coefficient matrix is not d x d");
}

LaseParams LaseParams::scaled_identity(int layers, int d, double scale, bool shared, bool normalize, Signature q) {
  LaseParams p;
  p.layers = layers;
  p.d = d;
  p.shared = shared;
  p.normalize = normalize;
  p.q = std::move(q);
  const int stored = shared ? 1 : layers;
  p.h1.assign(stored, scale * Matrix::Identity(d, d));
  p.h2.assign(stored, scale * Matrix::Identity(d, d));
  p.validate();
  return p;
}

LaseParams LaseParams::zeros(int layers, int d, bool shared, bool normalize, Signature q) {
  return scaled_identity(layers, d, 0.0, shared, normalize, std::move(q));
}

LaseParams LaseParams::with_layers(int new_layers) const {
  if (!shared) throw std::invalid_argument("changing the depth requires shared weights");
  LaseParams p = *this;
  p.layers = new_layers;
  p.validate();
  return p;
}

LaseInput LaseInput::with_defaults(Graph g, Embedding x0) {
  LaseInput in;
  const int n = g.n();
  in.graph = std::move(g);
  in.obs = MaskSet::full(n, false);
  in.att = MaskSet::full(n, true);
  in.x0 = std::move(x0);
  return in;
}

void LaseInput::validate() const {
  const int n = graph.n();
  if (obs.n() != n || att.n() != n || x0.rows() != n) throw std::invalid_argument("LASE input sizes differ");
  if (obs.nnz() == 0) throw std::invalid_argument("observation mask is empty");
  if (att.nnz() == 0) throw std::invalid_argument("attention mask is empty");
}

LaseContext LaseContext::build(const LaseInput& in, bool normalize) {
  in.validate();
  LaseContext ctx;
  const int n = in.n();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * in.graph.num_edges());
  for (const Edge& e : in.graph.edges()) {
    if (!in.obs.observed(e.u, e.v)) continue;
    trip.emplace_back(e.u, e.v, 1.0);
    trip.emplace_back(e.v, e.u, 1.0);
  }
  ctx.s.resize(n, n);
  ctx.s.setFromTriplets(trip.begin(), trip.end());
  ctx.w = in.obs.intersect(in.att);
  ctx.p_obs = in.obs.density();
  ctx.p_att = in.att.density();
  if (normalize) {
    ctx.c1 = 1.0 / (n * ctx.p_obs);
    ctx.c2 = 1.0 / (n * ctx.p_obs * ctx.p_att);
  }
  return ctx;
}

namespace {

void attention(const Embedding& x, const Embedding& xq, const LaseContext& ctx, Embedding& out) {
  out.setZero(x.rows(), x.cols());
  masked_product(ctx.w, xq, x, x, 1.0, out);
}

}  // namespace

Embedding lase_block(const Embedding& x, const Matrix& h1, const Matrix& h2, const Signature& q,
                     const LaseContext& ctx) {
  const Embedding xq = q.apply(x);
  Embedding gx;
  attention(x, xq, ctx, gx);
  const Embedding sx = ctx.s * x;
  Embedding y = x;
  y.noalias() += ctx.c1 * (sx * q.apply_right(h1));
  y.noalias() -= ctx.c2 * (gx * q.apply_right(h2));
  return y;
}

Embedding lase_forward(const LaseInput& in, const LaseParams& p) {
  return lase_forward(in, p, LaseContext::build(in, p.normalize));
}

Embedding lase_forward(const LaseInput& in, const LaseParams& p, const LaseContext& ctx, LaseTape* tape) {
  p.validate();
  if (in.x0.cols() != p.d) throw std::invalid_argument("X0 has the wrong embedding dimension");
  if (tape) {
    tape->x.assign(1, in.x0);
    tape->sx.clear();
    tape->gx.clear();
  }
  Embedding x = in.x0;
  for (int l = 0; l < p.layers; ++l) {
    const Embedding xq = p.q.apply(x);
    Embedding gx;
    attention(x, xq, ctx, gx);
    Embedding sx = ctx.s * x;
    Embedding y = x;
    y.noalias() += ctx.c1 * (sx * p.q.apply_right(p.H1(l)));
    y.noalias() -= ctx.c2 * (gx * p.q.apply_right(p.H2(l)));
    if (!all_finite(y)) throw NumericalError("non-finite state after LASE layer " + std::to_string(l + 1));
    if (tape) {
      tape->sx.push_back(std::move(sx));
      tape->gx.push_back(std::move(gx));
      tape->x.push_back(y);
    }
    x = std::move(y);
  }
  return x;
}

LaseGrads LaseGrads::zeros_like(const LaseParams& p) {
  LaseGrads g;
  g.h1.assign(p.stored_layers(), Matrix::Zero(p.d, p.d));
  g.h2.assign(p.stored_layers(), Matrix::Zero(p.d, p.d));
  return g;
}

LaseGrads& LaseGrads::operator+=(const LaseGrads& o) {
  for (std::size_t l = 0; l < h1.size(); ++l) {
    h1[l] += o.h1[l];
    h2[l] += o.h2[l];
  }
  return *this;
}

LaseGrads& LaseGrads::operator*=(double s) {
  for (std::size_t l = 0; l < h1.size(); ++l) {
    h1[l] *= s;
    h2[l] *= s;
  }
  return *this;
}

double LaseGrads::squared_norm() const {
  double s = 0.0;
  for (std::size_t l = 0; l < h1.size(); ++l) s += h1[l].squaredNorm() + h2[l].squaredNorm();
  return s;
}

Embedding lase_backward(const LaseParams& p, const LaseContext& ctx, const LaseTape& tape, const Embedding& x_bar,
                        LaseGrads& grads) {
  if (static_cast<int>(tape.sx.size()) != p.layers) throw std::invalid_argument("tape does not match the parameters");
  Embedding ybar = x_bar;
  for (int l = p.layers - 1; l >= 0; --l) {
    const int slot = p.shared ? 0 : l;
    const Embedding& x = tape.x[l];
    const Embedding xq = p.q.apply(x);
    const Matrix ybar_q = p.q.apply_right(Matrix(ybar));

    grads.h1[slot].noalias() += ctx.c1 * (tape.sx[l].transpose() * ybar_q);
    grads.h2[slot].noalias() -= ctx.c2 * (tape.gx[l].transpose() * ybar_q);

    // Adjoints of S X and of (W o XQX^T) X.
    const Embedding sx_bar = ctx.c1 * (ybar * (p.q.apply_right(p.H1(l))).transpose());
    const Embedding gx_bar = -ctx.c2 * (ybar * (p.q.apply_right(p.H2(l))).transpose());

    Embedding xbar = ybar;
    xbar.noalias() += ctx.s * sx_bar;
    masked_product(ctx.w, xq, x, gx_bar, 1.0, xbar);
    masked_product(ctx.w, gx_bar, x, xq, 1.0, xbar);
    masked_product(ctx.w, x, gx_bar, xq, 1.0, xbar);
    ybar = std::move(xbar);
  }
  return ybar;
}

Signature estimate_q(const Graph& g, int d, int num_subgraphs, double fraction, std::uint64_t seed) {
  if (num_subgraphs < 1) throw std::invalid_argument("need at least one subgraph");
  Vector sum = Vector::Zero(d);
  int used = 0;
  for (int s = 0; s < num_subgraphs; ++s) {
    try {
      const Subgraph sub = fraction >= 1.0 ? Subgraph{g, {}} : induced_subgraph(g, fraction, seed + s);
      EigenOptions opts;
      opts.seed = seed + s;
      const EigenPairs eig = top_eigenpairs(sub.graph, d, opts);
      for (int k = 0; k < d; ++k) sum[k] += eig.values[k] < 0.0 ? -1.0 : 1.0;
      ++used;
    } catch (const std::exception& e) {
      log_warning("Q estimation skipped subgraph " + std::to_string(s) + ": " + e.what());
    }
  }
  if (used == 0) throw NumericalError("Q estimation failed on every subgraph");
  std::vector<int> signs(d);
  for (int k = 0; k < d; ++k) signs[k] = sum[k] < 0.0 ? -1 : 1;
  return Signature(std::move(signs));
}

Embedding permute_rows(const Embedding& x, std::span<const int> perm) {
  if (static_cast<Eigen::Index>(perm.size()) != x.rows()) throw std::invalid_argument("permutation size mismatch");
  Embedding out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(perm[i]) = x.row(i);
  return out;
}

LaseInput permute_input(const LaseInput& in, std::span<const int> perm) {
  LaseInput out;
  out.graph = in.graph.permuted(perm);
  out.obs = in.obs.permuted(perm);
  out.att = in.att.permuted(perm);
  out.x0 = permute_rows(in.x0, perm);
  return out;
}

void save_params(const LaseParams& p, const std::filesystem::path& path) {
  p.validate();
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "LASE " << p.layers << ' ' << p.d << ' ' << (p.shared ? 1 : 0) << ' ' << (p.normalize ? 1 : 0) << '\n';
  for (int k = 0; k < p.d; ++k) out << (k ? " " : "") << p.q[k];
  out << '\n';
  auto write = [&](const Matrix& h) {
    for (int r = 0; r < p.d; ++r) {
      for (int c = 0; c < p.d; ++c) out << (c ? " " : "") << h(r, c);
      out << '\n';
    }
  };
  for (int l = 0; l < p.layers; ++l) {
    write(p.H1(l));
    write(p.H2(l));
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

LaseParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream body;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    body << line << '\n';
  }
  std::istringstream tok(body.str());
  const auto fail = [&](const std::string& what) { throw FormatError(path.string() + ": " + what); };
  std::string magic;
  LaseParams p;
  int shared = 0;
  int normalize = 0;
  if (!(tok >> magic) || magic != "LASE") fail("missing LASE header");
  if (!(tok >> p.layers >> p.d >> shared >> normalize)) fail("malformed header");
  if (p.layers < 1 || p.d < 1 || (shared != 0 && shared != 1) || (normalize != 0 && normalize != 1))
    fail("invalid header values");
  p.shared = shared == 1;
  p.normalize = normalize == 1;
  std::vector<int> signs(p.d);
  for (int& s : signs)
    if (!(tok >> s) || (s != 1 && s != -1)) fail("signature entries must be +1 or -1");
  p.q = Signature(signs);
  auto read = [&]() {
    Matrix h(p.d, p.d);
    for (int r = 0; r < p.d; ++r)
      for (int c = 0; c < p.d; ++c)
        if (!(tok >> h(r, c))) fail("truncated coefficient data");
    return h;
  };
  for (int l = 0; l < p.layers; ++l) {
    Matrix a = read();
    Matrix b = read();
    if (p.shared && l > 0) {
      if (a != p.h1[0] || b != p.h2[0]) fail("shared-weight file has differing layers");
      continue;
    }
    p.h1.push_back(std::move(a));
    p.h2.push_back(std::move(b));
  }
  std::string extra;
  if (tok >> extra) fail("trailing data after coefficients");
  p.validate();
  return p;
}

}  // namespace lase
