#include "lase/e2e.hpp"

#include "lase/gd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

namespace lase {
namespace {

struct Forward {
  LaseContext ctx;
  LaseTape tape;
  Embedding xl;
  Matrix z;
};

LaseInput lase_input(const Graph& g, const MaskSet& obs, const Embedding& x0) {
  LaseInput in = LaseInput::with_defaults(g, x0);
  in.obs = obs;
  return in;
}

Forward run_forward(const E2eParams& p, const Graph& g, const MaskSet& obs, const Matrix& features,
                    const Embedding& x0, bool keep_tape) {
  Forward f;
  const LaseInput in = lase_input(g, obs, x0);
  f.ctx = LaseContext::build(in, p.lase.normalize);
  const int n = g.n();
  const int fdim = static_cast<int>(features.cols());
  const int d = p.use_lase ? p.lase.d : 0;
  f.z.resize(n, fdim + d);
  f.z.leftCols(fdim) = features;
  if (p.use_lase) {
    f.xl = lase_forward(in, p.lase, f.ctx, keep_tape ? &f.tape : nullptr);
    f.z.rightCols(d) = f.xl;
  }
  return f;
}

/// Row-normalised observed adjacency D^-1 (M_obs o A).
SparseMatrix mean_aggregator(const SparseMatrix& s) {
  SparseMatrix p = s;
  for (int i = 0; i < p.outerSize(); ++i) {
    double deg = 0.0;
    for (SparseMatrix::InnerIterator it(p, i); it; ++it) deg += it.value();
    if (deg > 0.0)
      for (SparseMatrix::InnerIterator it(p, i); it; ++it) it.valueRef() /= deg;
  }
  return p;
}

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

/// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

void add_reconstruction(const E2eParams& p, const Graph& g, const MaskSet& obs, Forward& f, double mu,
                        Embedding xl_bar, CombinedLoss& loss, E2eParams* grad) {
  if (!p.use_lase) return;
  Embedding rec_grad;
  loss.reconstruction = masked_loss_grad(g, obs, f.xl, p.lase.q, rec_grad);
  loss.total += (1.0 - mu) * loss.reconstruction;
  if (!grad) return;
  xl_bar += (1.0 - mu) * rec_grad;
  LaseGrads lg = LaseGrads::zeros_like(p.lase);
  lase_backward(p.lase, f.ctx, f.tape, xl_bar, lg);
  grad->lase.h1 = lg.h1;
  grad->lase.h2 = lg.h2;
}

void zero_like(const E2eParams& p, E2eParams& g) {
  g = p;
  for (auto& h : g.lase.h1) h.setZero();
  for (auto& h : g.lase.h2) h.setZero();
  g.w0.setZero();
  g.w1.setZero();
  g.b.setZero();
}

void check_mu(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must lie in [0, 1]");
}

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;
};

void adam_step(Vector& theta, const Vector& g, AdamState& s, const E2eConfig& cfg, Eigen::Index lase_count) {
  if (s.m.size() == 0) {
    s.m = Vector::Zero(theta.size());
    s.v = Vector::Zero(theta.size());
  }
  ++s.t;
  s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * g;
  s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double lr = cfg.learning_rate * (i < lase_count ? cfg.lase_lr_scale : 1.0);
    theta[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + 1e-8);
    if (i >= lase_count && cfg.weight_decay > 0.0) theta[i] -= lr * cfg.weight_decay * theta[i];
  }
}

Eigen::Index lase_entries(const E2eParams& p) {
  return p.use_lase ? static_cast<Eigen::Index>(p.lase.num_parameters()) : 0;
}

void check_e2e_config(const E2eConfig& cfg) {
  check_mu(cfg.mu);
  if (cfg.epochs < 0 || cfg.learning_rate < 0.0) throw std::invalid_argument("invalid E2E training configuration");
}

}  // namespace

int E2eParams::feature_dim() const { return static_cast<int>(w0.rows()); }

Vector E2eParams::flatten() const {
  std::vector<double> out;
  if (use_lase) {
    for (const auto& h : lase.h1) out.insert(out.end(), h.data(), h.data() + h.size());
    for (const auto& h : lase.h2) out.insert(out.end(), h.data(), h.data() + h.size());
  }
  out.insert(out.end(), w0.data(), w0.data() + w0.size());
  out.insert(out.end(), w1.data(), w1.data() + w1.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  return Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

void E2eParams::unflatten(const Vector& v) {
  Eigen::Index at = 0;
  auto take = [&](double* dst, Eigen::Index count) {
    if (at + count > v.size()) throw std::invalid_argument("parameter vector too short");
    std::copy(v.data() + at, v.data() + at + count, dst);
    at += count;
  };
  if (use_lase) {
    for (auto& h : lase.h1) take(h.data(), h.size());
    for (auto& h : lase.h2) take(h.data(), h.size());
  }
  take(w0.data(), w0.size());
  take(w1.data(), w1.size());
  take(b.data(), b.size());
  if (at != v.size()) throw std::invalid_argument("parameter vector too long");
}

void NodeTask::validate() const {
  const int n = graph.n();
  if (obs.n() != n || features.rows() != n || static_cast<int>(labels.size()) != n ||
      static_cast<int>(splits.size()) != n)
    throw std::invalid_argument("node task sizes differ");
  if (!features.allFinite()) throw std::invalid_argument("features must be finite");
  for (int y : labels)
    if (y < -1 || y >= num_classes) throw std::invalid_argument("label out of range");
}

std::vector<int> NodeTask::nodes(io::Split split) const {
  std::vector<int> out;
  for (int i = 0; i < graph.n(); ++i)
    if (splits[i] == split && labels[i] >= 0) out.push_back(i);
  return out;
}

void LinkTask::validate() const {
  const int n = graph.n();
  if (obs.n() != n || features.rows() != n) throw std::invalid_argument("link task sizes differ");
  for (const auto* set : {&train, &val, &test})
    for (const auto& pr : *set) {
      if (pr.u < 0 || pr.v < 0 || pr.u >= n || pr.v >= n) throw std::invalid_argument("pair index out of range");
      if (obs.observed(pr.u, pr.v))
        throw std::invalid_argument("held-out pair (" + std::to_string(pr.u) + "," + std::to_string(pr.v) +
                                    ") is observed in the mask");
    }
}

E2eParams make_node_params(const NodeTask& task, const LaseParams& lase, bool use_lase, NodeHead head) {
  task.validate();
  E2eParams p;
  p.use_lase = use_lase;
  p.lase = lase;
  p.head = head;
  const int in = static_cast<int>(task.features.cols()) + (use_lase ? lase.d : 0);
  p.w0 = Matrix::Zero(in, task.num_classes);
  p.w1 = head == NodeHead::OneHopConv ? Matrix::Zero(in, task.num_classes) : Matrix::Zero(0, 0);
  p.b = Vector::Zero(task.num_classes);
  return p;
}

E2eParams make_link_params(const LinkTask& task, const LaseParams& lase, bool use_lase, int link_dim,
                           std::uint64_t seed) {
  E2eParams p;
  p.use_lase = use_lase;
  p.lase = lase;
  p.head = NodeHead::Linear;
  const int in = static_cast<int>(task.features.cols()) + (use_lase ? lase.d : 0);
  // A zero inner-product decoder is a saddle point, so start from small noise.
  Rng rng(seed);
  p.w0.resize(in, link_dim);
  for (Eigen::Index i = 0; i < p.w0.size(); ++i) p.w0.data()[i] = 0.1 * rng.normal();
  p.w1 = Matrix::Zero(0, 0);
  p.b = Vector::Zero(0);
  return p;
}

Matrix node_logits(const E2eParams& p, const NodeTask& task) {
  const Forward f = run_forward(p, task.graph, task.obs, task.features, task.x0, false);
  Matrix logits = f.z * p.w0;
  if (p.head == NodeHead::OneHopConv) logits += mean_aggregator(f.ctx.s) * f.z * p.w1;
  logits.rowwise() += p.b.transpose();
  return logits;
}

CombinedLoss combined_loss_node(const E2eParams& p, const NodeTask& task, double mu, E2eParams* grad) {
  check_mu(mu);
  task.validate();
  Forward f = run_forward(p, task.graph, task.obs, task.features, task.x0, grad != nullptr);
  const SparseMatrix agg = mean_aggregator(f.ctx.s);
  Matrix pz;
  Matrix logits = f.z * p.w0;
  if (p.head == NodeHead::OneHopConv) {
    pz = agg * f.z;
    logits += pz * p.w1;
  }
  logits.rowwise() += p.b.transpose();

  const std::vector<int> train_nodes = task.nodes(io::Split::Train);
  if (train_nodes.empty()) throw std::invalid_argument("no labelled training nodes");
  CombinedLoss loss;
  Matrix gbar = Matrix::Zero(logits.rows(), logits.cols());
  for (int i : train_nodes) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    loss.cross_entropy += std::log(z) + mx - logits(i, task.labels[i]);
    gbar.row(i) = e / z;
    gbar(i, task.labels[i]) -= 1.0;
  }
  const double nt = static_cast<double>(train_nodes.size());
  loss.cross_entropy /= nt;
  gbar *= mu / nt;
  loss.total = mu * loss.cross_entropy;

  Embedding xl_bar;
  if (grad) {
    zero_like(p, *grad);
    grad->w0 = f.z.transpose() * gbar;
    Matrix zbar = gbar * p.w0.transpose();
    if (p.head == NodeHead::OneHopConv) {
      grad->w1 = pz.transpose() * gbar;
      zbar += agg.transpose() * (gbar * p.w1.transpose());
    }
    grad->b = gbar.colwise().sum().transpose();
    if (p.use_lase) xl_bar = zbar.rightCols(p.lase.d);
  }
  add_reconstruction(p, task.graph, task.obs, f, mu, xl_bar, loss, grad);
  return loss;
}

std::vector<double> link_scores(const E2eParams& p, const LinkTask& task, const std::vector<LabeledPair>& pairs) {
  const Forward f = run_forward(p, task.graph, task.obs, task.features, task.x0, false);
  const Matrix z = f.z * p.w0;
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& pr : pairs) out.push_back(sigmoid(z.row(pr.u).dot(z.row(pr.v))));
  return out;
}

CombinedLoss combined_loss_link(const E2eParams& p, const LinkTask& task, double mu, E2eParams* grad) {
  check_mu(mu);
  task.validate();
  if (task.train.empty()) throw std::invalid_argument("no training pairs");
  Forward f = run_forward(p, task.graph, task.obs, task.features, task.x0, grad != nullptr);
  const Matrix z = f.z * p.w0;
  Matrix zbar = Matrix::Zero(z.rows(), z.cols());
  CombinedLoss loss;
  const double np = static_cast<double>(task.train.size());
  for (const auto& pr : task.train) {
    const double t = z.row(pr.u).dot(z.row(pr.v));
    loss.cross_entropy += pr.label ? softplus(-t) : softplus(t);
    const double dt = (sigmoid(t) - pr.label) * mu / np;
    zbar.row(pr.u) += dt * z.row(pr.v);
    zbar.row(pr.v) += dt * z.row(pr.u);
  }
  loss.cross_entropy /= np;
  loss.total = mu * loss.cross_entropy;
  Embedding xl_bar;
  if (grad) {
    zero_like(p, *grad);
    grad->w0 = f.z.transpose() * zbar;
    if (p.use_lase) xl_bar = (zbar * p.w0.transpose()).rightCols(p.lase.d);
  }
  add_reconstruction(p, task.graph, task.obs, f, mu, xl_bar, loss, grad);
  return loss;
}

double node_accuracy(const E2eParams& p, const NodeTask& task, io::Split split) {
  const std::vector<int> nodes = task.nodes(split);
  if (nodes.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Matrix logits = node_logits(p, task);
  int correct = 0;
  for (int i : nodes) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    correct += arg == task.labels[i];
  }
  return static_cast<double>(correct) / nodes.size();
}

std::vector<double> per_class_accuracy(const E2eParams& p, const NodeTask& task, io::Split split) {
  const Matrix logits = node_logits(p, task);
  std::vector<double> hit(task.num_classes, 0.0), count(task.num_classes, 0.0);
  for (int i : task.nodes(split)) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    count[task.labels[i]] += 1;
    hit[task.labels[i]] += arg == task.labels[i];
  }
  std::vector<double> out(task.num_classes);
  for (int c = 0; c < task.num_classes; ++c)
    out[c] = count[c] > 0 ? hit[c] / count[c] : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double link_accuracy(const E2eParams& p, const LinkTask& task, const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> s = link_scores(p, task, pairs);
  int correct = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) correct += (s[k] >= 0.5) == (pairs[k].label == 1);
  return static_cast<double>(correct) / pairs.size();
}

E2eResult e2e_train(const NodeTask& task, const E2eParams& init, const E2eConfig& cfg) {
  check_e2e_config(cfg);
  E2eResult r;
  r.params = init;
  r.best_val = node_accuracy(init, task, io::Split::Val);
  E2eParams p = init;
  Vector theta = p.flatten();
  AdamState state;
  const Eigen::Index lase_count = lase_entries(p);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    E2eParams g;
    const CombinedLoss loss = combined_loss_node(p, task, cfg.mu, &g);
    r.history.push_back({epoch, "train", "loss", loss.total});
    r.history.push_back({epoch, "train", "cross_entropy", loss.cross_entropy});
    r.history.push_back({epoch, "train", "reconstruction", loss.reconstruction});
    adam_step(theta, g.flatten(), state, cfg, lase_count);
    p.unflatten(theta);
    const double val = node_accuracy(p, task, io::Split::Val);
    r.history.push_back({epoch, "val", "accuracy", val});
    if (val > r.best_val || (std::isnan(r.best_val) && !std::isnan(val))) {
      r.best_val = val;
      r.best_epoch = epoch;
      r.params = p;
    }
  }
  if (std::isnan(r.best_val)) r.params = p;
  r.history.push_back({r.best_epoch, "test", "accuracy", node_accuracy(r.params, task, io::Split::Test)});
  return r;
}

E2eResult e2e_train(const LinkTask& task, const E2eParams& init, const E2eConfig& cfg) {
  check_e2e_config(cfg);
  task.validate();
  E2eResult r;
  r.params = init;
  r.best_val = link_accuracy(init, task, task.val);
  E2eParams p = init;
  Vector theta = p.flatten();
  AdamState state;
  const Eigen::Index lase_count = lase_entries(p);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    E2eParams g;
    const CombinedLoss loss = combined_loss_link(p, task, cfg.mu, &g);
    r.history.push_back({epoch, "train", "loss", loss.total});
    r.history.push_back({epoch, "train", "cross_entropy", loss.cross_entropy});
    r.history.push_back({epoch, "train", "reconstruction", loss.reconstruction});
    adam_step(theta, g.flatten(), state, cfg, lase_count);
    p.unflatten(theta);
    const double val = link_accuracy(p, task, task.val);
    r.history.push_back({epoch, "val", "link_accuracy", val});
    if (val > r.best_val || (std::isnan(r.best_val) && !std::isnan(val))) {
      r.best_val = val;
      r.best_epoch = epoch;
      r.params = p;
    }
  }
  if (std::isnan(r.best_val)) r.params = p;
  r.history.push_back({r.best_epoch, "test", "link_accuracy", link_accuracy(r.params, task, task.test)});
  return r;
}

void write_metrics_csv(const std::vector<MetricRecord>& history, std::ostream& os) {
  os << "epoch,split,metric,value\n";
  const auto old = os.precision(17);
  for (const auto& m : history) os << m.epoch << ',' << m.split << ',' << m.metric << ',' << m.value << '\n';
  os.precision(old);
}

LinkTask make_link_task(const Graph& g, const Matrix& features, double train_fraction, double val_fraction,
                        double test_fraction, const MaskSet& base_obs, int d, std::uint64_t seed) {
  const double total = train_fraction + val_fraction + test_fraction;
  if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0 || total > 1.0)
    throw std::invalid_argument("link split fractions must be non-negative and sum to at most 1");
  if (base_obs.n() != g.n() || features.rows() != g.n()) throw std::invalid_argument("link task sizes differ");
  const int n = g.n();
  Rng rng(seed);
  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
  for (int i = static_cast<int>(edges.size()) - 1; i > 0; --i) std::swap(edges[i], edges[rng.below(i + 1)]);
  const auto count = [&](double f) { return static_cast<std::size_t>(std::lround(f * edges.size())); };
  const std::size_t ntr = count(train_fraction), nva = count(val_fraction), nte = count(test_fraction);
  if (ntr + nva + nte > edges.size()) throw std::invalid_argument("not enough edges for the requested splits");

  std::set<Edge> used;
  std::vector<Edge> held;
  LinkTask task;
  auto fill = [&](std::vector<LabeledPair>& out, std::size_t from, std::size_t k) {
    for (std::size_t i = from; i < from + k; ++i) {
      out.push_back({edges[i].u, edges[i].v, 1});
      used.insert(edges[i]);
      held.push_back(edges[i]);
    }
    // One uniform negative per positive.
    for (std::size_t i = 0; i < k; ++i) {
      for (int attempt = 0;; ++attempt) {
        if (attempt > 1000000) throw std::invalid_argument("graph too dense to sample negatives");
        int u = static_cast<int>(rng.below(n));
        int v = static_cast<int>(rng.below(n));
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        const Edge e{u, v};
        if (g.has_edge(u, v) || used.count(e)) continue;
        used.insert(e);
        held.push_back(e);
        out.push_back({u, v, 0});
        break;
      }
    }
  };
  fill(task.train, 0, ntr);
  fill(task.val, ntr, nva);
  fill(task.test, ntr + nva, nte);

  task.graph = g;
  task.features = features;
  task.obs = base_obs.intersect(MaskSet::from_unknown_pairs(n, held));
  task.x0 = uniform_embedding(n, d, seed ^ 0x9E3779B97F4A7C15ULL);
  task.validate();
  return task;
}

}  // namespace lase
