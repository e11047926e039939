#include "lase/experiments.hpp"

#include "lase/gd.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lase::exp {

namespace {

Matrix constant_pi(int c, double diag, double off) {
  Matrix pi = Matrix::Constant(c, c, off);
  pi.diagonal().setConstant(diag);
  return pi;
}

/// Columns [X, SX, ..., S^K X] with S = A / N.
Matrix krylov_basis(const Graph& g, const Matrix& x_in, int order) {
  const int fin = static_cast<int>(x_in.cols());
  const SparseMatrix s = g.adjacency() / static_cast<double>(g.n());
  Matrix basis(g.n(), (order + 1) * fin);
  Matrix cur = x_in;
  for (int k = 0; k <= order; ++k) {
    basis.middleCols(k * fin, fin) = cur;
    if (k < order) cur = s * cur;
  }
  return basis;
}

}  // namespace

SbmSpec sbm_preset(const std::string& name, int n) {
  auto pick = [n](int def) { return n > 0 ? n : def; };
  if (name == "sbm2" || name == "symmetric")
    return SbmSpec::balanced(pick(name == "sbm2" ? 100 : 200), constant_pi(2, 0.5, 0.1));
  if (name == "sbm3") {
    Matrix pi = constant_pi(3, 0.0, 0.1);
    pi.diagonal() << 0.7, 0.5, 0.3;
    return SbmSpec::balanced(pick(150), pi);
  }
  if (name == "sbm5") {
    Matrix pi = constant_pi(5, 0.0, 0.1);
    pi.diagonal() << 0.7, 0.6, 0.5, 0.4, 0.3;
    return SbmSpec::balanced(pick(300), pi);
  }
  if (name == "sbm10") return SbmSpec::balanced(pick(300), constant_pi(10, 0.7, 0.05));
  if (name == "disassortative") return SbmSpec::balanced(pick(200), constant_pi(2, 0.1, 0.5));
  if (name == "shift") {
    Matrix pi(2, 2);
    pi << 0.5, 0.1, 0.1, 0.3;
    return SbmSpec::with_fractions(pick(100), {0.7, 0.3}, pi);
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"sbm2", "sbm3", "sbm5", "sbm10", "symmetric", "disassortative", "shift"};
  return names;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw std::logic_error("table row width differs from header");
  rows.push_back(std::move(row));
}

void Table::write_csv(std::ostream& os) const {
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

bool Report::passed() const {
  for (const auto& c : checks)
    if (c.gating && !c.passed) return false;
  return true;
}

void Report::check(std::string name, bool ok, std::string detail, bool gating) {
  checks.push_back({std::move(name), ok, std::move(detail), gating});
}

void Report::write_summary(std::ostream& os) const {
  for (const auto& c : checks)
    os << (c.gating ? (c.passed ? "PASS " : "FAIL ") : (c.passed ? "INFO " : "INFO(miss) ")) << experiment << ' '
       << c.name << ": " << c.detail << '\n';
}

TrainResult train_with_backoff(const std::vector<TrainSample>& samples, const LaseParams& init, TrainConfig cfg,
                               std::ostream* log, int attempts) {
  for (int a = 1;; ++a) {
    try {
      return train(samples, init, cfg);
    } catch (const NumericalError& e) {
      if (a >= attempts) throw;
      if (log) *log << "  " << e.what() << "; retrying with learning rate " << cfg.learning_rate / 2 << '\n';
      cfg.learning_rate /= 2;
    }
  }
}

FilterFit fit_filter_embedding(const Graph& g, const Matrix& x_in, int order, int d, std::uint64_t seed) {
  const int n = g.n();
  if (x_in.rows() != n || order < 0 || d < 1) throw std::invalid_argument("invalid filter fit request");
  const int fin = static_cast<int>(x_in.cols());
  const Matrix basis = krylov_basis(g, x_in, order);
  Eigen::BDCSVD<Matrix> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  int r = 0;
  while (r < sv.size() && sv[r] > 1e-6 * sv[0]) ++r;
  const Matrix u = svd.matrixU().leftCols(r);

  const MaskSet m = MaskSet::full(n);
  const Signature q = Signature::identity(d);
  Matrix gmat = u.transpose() * uniform_embedding(n, d, seed);
  Embedding x = u * gmat;
  Embedding grad;
  double loss = masked_loss_grad(g, m, x, q, grad);
  double step = 1.0 / std::max(1.0, std::sqrt(2.0 * g.num_edges()));
  int stall = 0;
  for (int it = 0; it < 5000 && stall < 10; ++it) {
    const Matrix gg = u.transpose() * grad;
    const double gn2 = gg.squaredNorm();
    if (gn2 <= 1e-24 * (1.0 + loss)) break;
    double t = step * 2.0;
    Matrix trial;
    double trial_loss = loss;
    bool accepted = false;
    for (int b = 0; b < 40; ++b) {
      trial = gmat - t * gg;
      trial_loss = masked_loss(g, m, u * trial, q);
      if (trial_loss <= loss - 1e-4 * t * gn2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    stall = (loss - trial_loss) <= 1e-13 * loss ? stall + 1 : 0;
    step = t;
    gmat = trial;
    x = u * gmat;
    loss = masked_loss_grad(g, m, x, q, grad);
  }

  // Y = U G = basis V S^-1 G, so the stacked taps are V S^-1 G.
  const Matrix taps = svd.matrixV().leftCols(r) * sv.head(r).cwiseInverse().asDiagonal() * gmat;
  FilterFit fit;
  fit.filter.normalization = ShiftNormalization::DivideByN;
  for (int k = 0; k <= order; ++k) fit.filter.coeffs.push_back(taps.middleRows(k * fin, fin));
  fit.output = x;
  fit.loss = loss;
  fit.rank = r;
  return fit;
}

FilterFit train_filter_embedding(const std::vector<Graph>& graphs, const std::vector<Matrix>& inputs, int order, int d,
                                 const TrainConfig& cfg) {
  cfg.validate();
  if (graphs.empty() || graphs.size() != inputs.size() || order < 0 || d < 1)
    throw std::invalid_argument("invalid filter training request");
  const int fin = static_cast<int>(inputs[0].cols());
  const int t = static_cast<int>(graphs.size());
  std::vector<Matrix> bases;
  for (int i = 0; i < t; ++i) {
    if (inputs[i].rows() != graphs[i].n() || inputs[i].cols() != fin) throw std::invalid_argument("filter input has the wrong shape");
    bases.push_back(krylov_basis(graphs[i], inputs[i], order));
  }
  // Fixed per-column scaling from the first graph so every tap sees unit-RMS features.
  Vector scale(bases[0].cols());
  for (Eigen::Index c = 0; c < scale.size(); ++c) {
    const double rms = bases[0].col(c).norm() / std::sqrt(static_cast<double>(bases[0].rows()));
    scale[c] = rms > 0 ? 1.0 / rms : 1.0;
  }
  for (Matrix& b : bases) b = b * scale.asDiagonal();

  const Signature q = Signature::identity(d);
  std::vector<MaskSet> masks;
  for (const Graph& g : graphs) masks.push_back(MaskSet::full(g.n()));
  Rng rng(cfg.seed);
  Matrix h(bases[0].cols(), d);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = 0.1 * rng.normal();

  auto batch_loss = [&](const Matrix& taps, const std::vector<int>& idx, Matrix* grad) {
    double total = 0.0;
    if (grad) grad->setZero(taps.rows(), taps.cols());
    Embedding ybar;
    for (int i : idx) {
      const Embedding y = bases[i] * taps;
      if (grad) {
        total += masked_loss_grad(graphs[i], masks[i], y, q, ybar);
        *grad += bases[i].transpose() * ybar;
      } else {
        total += masked_loss(graphs[i], masks[i], y, q);
      }
    }
    if (grad) *grad /= static_cast<double>(idx.size());
    return total / static_cast<double>(idx.size());
  };
  std::vector<int> all(t);
  for (int i = 0; i < t; ++i) all[i] = i;
  Matrix best = h;
  double best_loss = batch_loss(h, all, nullptr);
  Matrix m1 = Matrix::Zero(h.rows(), h.cols()), m2 = m1, grad;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order_idx = all;
    std::shuffle(order_idx.begin(), order_idx.end(), rng.engine());
    for (int start = 0; start < t; start += cfg.batch_size) {
      const std::vector<int> idx(order_idx.begin() + start, order_idx.begin() + std::min(t, start + cfg.batch_size));
      batch_loss(h, idx, &grad);
      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      h.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_eps);
    }
    const double l = batch_loss(h, all, nullptr);
    if (!std::isfinite(l)) throw NumericalError("filter training diverged");
    if (l < best_loss) {
      best_loss = l;
      best = h;
    }
  }

  const Matrix taps = scale.asDiagonal() * best;
  FilterFit fit;
  fit.filter.normalization = ShiftNormalization::DivideByN;
  for (int k = 0; k <= order; ++k) fit.filter.coeffs.push_back(taps.middleRows(k * fin, fin));
  fit.output = bases[0] * best;
  fit.loss = best_loss;
  fit.rank = static_cast<int>(taps.rows());
  return fit;
}

Separation community_separation(const std::vector<Matrix>& embeddings, const std::vector<std::vector<int>>& labels) {
  if (embeddings.size() != labels.size() || embeddings.empty()) throw std::invalid_argument("separation inputs differ");
  const Eigen::Index d = embeddings[0].cols();
  Vector c[2] = {Vector::Zero(d), Vector::Zero(d)};
  double count[2] = {0, 0};
  for (std::size_t k = 0; k < embeddings.size(); ++k)
    for (Eigen::Index i = 0; i < embeddings[k].rows(); ++i) {
      const int y = labels[k][i];
      if (y != 0 && y != 1) throw std::invalid_argument("separation labels must be 0 or 1");
      c[y] += embeddings[k].row(i).transpose();
      count[y] += 1;
    }
  if (count[0] == 0 || count[1] == 0) throw std::invalid_argument("both communities must be present");
  c[0] /= count[0];
  c[1] /= count[1];
  double ss = 0.0;
  for (std::size_t k = 0; k < embeddings.size(); ++k)
    for (Eigen::Index i = 0; i < embeddings[k].rows(); ++i)
      ss += (embeddings[k].row(i).transpose() - c[labels[k][i]]).squaredNorm();
  Separation s;
  s.centroid_distance = (c[0] - c[1]).norm();
  s.spread = std::sqrt(ss / (count[0] + count[1]));
  return s;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "equivalence", "gradients",   "parity",       "fig5",  "symmetric-sbm", "example1",   "shift",     "subgraph",
      "sparse-att",  "masked-embed", "q-estimation", "bench", "e2e",           "real-graph", "invariants"};
  return names;
}

Report run_experiment(const std::string& name, const ExperimentOptions& opts) {
  static const std::map<std::string, std::function<Report(const ExperimentOptions&)>> table{
      {"equivalence", run_equivalence}, {"gradients", run_gradients},     {"parity", run_parity},
      {"fig5", run_fig5},               {"symmetric-sbm", run_symmetric_sbm}, {"example1", run_example1},
      {"shift", run_shift},             {"subgraph", run_subgraph},       {"sparse-att", run_sparse_att},
      {"masked-embed", run_masked_embed}, {"q-estimation", run_q_estimation}, {"bench", run_bench},
      {"e2e", run_e2e_benefit},         {"real-graph", run_real_graph},   {"invariants", run_invariants}};
  const auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown experiment '" + name + "'");
  const auto t0 = std::chrono::steady_clock::now();
  Report r = it->second(opts);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace lase::exp
