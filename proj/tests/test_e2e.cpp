#include "doctest.h"

#include "lase/e2e.hpp"
#include "lase/gd.hpp"
#include "lase/generators.hpp"

#include <cmath>
#include <sstream>

using namespace lase;

namespace {

Matrix two_block_pi(double a, double b) {
  Matrix pi(2, 2);
  pi << a, b, b, a;
  return pi;
}

std::vector<io::Split> random_splits(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<io::Split> s(n);
  for (auto& x : s) {
    const double u = rng.uniform();
    x = u < 0.5 ? io::Split::Train : (u < 0.75 ? io::Split::Val : io::Split::Test);
  }
  return s;
}

NodeTask sbm_node_task(int n, int fdim, double unknown, std::uint64_t seed) {
  const SbmSpec spec = SbmSpec::balanced(n, two_block_pi(0.6, 0.2));
  NodeTask t;
  t.graph = sbm_sample(spec, seed);
  t.obs = unknown > 0 ? random_unknown_mask(n, unknown, seed + 1) : MaskSet::full(n);
  t.labels = spec.labels();
  t.num_classes = 2;
  t.splits = random_splits(n, seed + 2);
  Rng rng(seed + 3);
  t.features.resize(n, fdim);
  for (Eigen::Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = rng.normal();
  t.x0 = uniform_embedding(n, 2, seed + 4);
  return t;
}

void randomize(E2eParams& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Vector v = p.flatten();
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  p.unflatten(v);
}

template <class Loss>
double max_fd_error(E2eParams p, Loss loss) {
  E2eParams g;
  loss(p, &g);
  const Vector an = g.flatten();
  const Vector theta = p.flatten();
  const double h = 1e-6;
  double worst = 0.0;
  const double floor = 1e-3 * an.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    p.unflatten(tp);
    const double fp = loss(p, nullptr);
    p.unflatten(tm);
    const double fm = loss(p, nullptr);
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - an[i]) / std::max({std::abs(fd), std::abs(an[i]), floor}));
  }
  return worst;
}

LaseParams small_lase(int layers, double alpha) {
  return gd_equivalent_params(layers, 2, alpha, 30.0, 1.0, false, true, Signature::identity(2));
}

}  // namespace

TEST_CASE("flatten and unflatten round trip") {
  const NodeTask t = sbm_node_task(20, 3, 0.0, 1);
  E2eParams p = make_node_params(t, small_lase(2, 0.01), true, NodeHead::OneHopConv);
  randomize(p, 7, 0.3);
  const Vector v = p.flatten();
  CHECK(v.size() == 2 * 2 * 4 + 2 * 5 * 2 + 2);
  E2eParams q = make_node_params(t, small_lase(2, 0.0), true, NodeHead::OneHopConv);
  q.unflatten(v);
  CHECK(q.flatten() == v);
  CHECK_THROWS_AS(q.unflatten(Vector::Zero(v.size() + 1)), std::invalid_argument);
}

TEST_CASE("zero head weights give a uniform softmax") {
  const NodeTask t = sbm_node_task(30, 2, 0.0, 2);
  const E2eParams p = make_node_params(t, small_lase(2, 0.01), true, NodeHead::OneHopConv);
  const CombinedLoss l = combined_loss_node(p, t, 1.0);
  CHECK(l.cross_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.total == doctest::Approx(l.cross_entropy));
}

TEST_CASE("mu endpoints reduce to the individual terms") {
  const NodeTask t = sbm_node_task(30, 2, 0.1, 3);
  E2eParams p = make_node_params(t, small_lase(2, 0.01), true, NodeHead::OneHopConv);
  randomize(p, 11, 0.1);
  const CombinedLoss l1 = combined_loss_node(p, t, 1.0);
  CHECK(l1.total == doctest::Approx(l1.cross_entropy));

  E2eParams g;
  const CombinedLoss l0 = combined_loss_node(p, t, 0.0, &g);
  const LaseInput in{t.graph, t.obs, MaskSet::full(30, true), t.x0};
  const Embedding xl = lase_forward(in, p.lase);
  CHECK(l0.reconstruction == doctest::Approx(masked_loss(t.graph, t.obs, xl, p.lase.q)).epsilon(1e-12));
  CHECK(l0.total == doctest::Approx(l0.reconstruction));
  CHECK(g.w0.norm() == 0.0);
  CHECK(g.w1.norm() == 0.0);
  CHECK(g.b.norm() == 0.0);

  const CombinedLoss lh = combined_loss_node(p, t, 0.5);
  CHECK(lh.total == doctest::Approx(0.5 * l1.cross_entropy + 0.5 * l0.reconstruction).epsilon(1e-12));
  CHECK_THROWS_AS(combined_loss_node(p, t, 1.5), std::invalid_argument);
}

TEST_CASE("joint node gradient matches finite differences") {
  for (NodeHead head : {NodeHead::Linear, NodeHead::OneHopConv}) {
    const NodeTask t = sbm_node_task(24, 3, 0.15, 4);
    E2eParams p = make_node_params(t, small_lase(3, 0.01), true, head);
    randomize(p, 13, 0.05);
    const double err = max_fd_error(p, [&](const E2eParams& q, E2eParams* g) {
      return combined_loss_node(q, t, 0.4, g).total;
    });
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("joint link gradient matches finite differences") {
  const NodeTask base = sbm_node_task(30, 2, 0.0, 5);
  const LinkTask t = make_link_task(base.graph, base.features, 0.2, 0.1, 0.1, MaskSet::full(30), 2, 5);
  E2eParams p = make_link_params(t, small_lase(2, 0.01), true, 3, 9);
  randomize(p, 17, 0.05);
  const double err = max_fd_error(p, [&](const E2eParams& q, E2eParams* g) {
    return combined_loss_link(q, t, 0.6, g).total;
  });
  CHECK(err <= 1e-5);
}

TEST_CASE("link task holds out every supervision pair") {
  const NodeTask base = sbm_node_task(60, 1, 0.0, 6);
  const LinkTask t = make_link_task(base.graph, base.features, 0.3, 0.1, 0.1, MaskSet::full(60), 2, 6);
  const auto ne = static_cast<double>(base.graph.num_edges());
  CHECK(t.train.size() == 2 * static_cast<std::size_t>(std::lround(0.3 * ne)));
  for (const auto* set : {&t.train, &t.val, &t.test}) {
    int pos = 0;
    for (const auto& pr : *set) {
      CHECK_FALSE(t.obs.observed(pr.u, pr.v));
      CHECK(base.graph.has_edge(pr.u, pr.v) == (pr.label == 1));
      pos += pr.label;
    }
    CHECK(2 * pos == static_cast<int>(set->size()));
  }
  LinkTask bad = t;
  bad.obs = MaskSet::full(60);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("held-out entries of A do not influence the loss") {
  const NodeTask base = sbm_node_task(40, 2, 0.0, 7);
  const LinkTask t = make_link_task(base.graph, base.features, 0.2, 0.1, 0.2, MaskSet::full(40), 2, 7);
  E2eParams p = make_link_params(t, small_lase(2, 0.01), true, 2, 3);
  randomize(p, 19, 0.05);
  // Flip every test pair in the adjacency.
  std::vector<Edge> edges(base.graph.edges().begin(), base.graph.edges().end());
  std::vector<Edge> flipped;
  for (const auto& e : edges) {
    bool held = false;
    for (const auto& pr : t.test) held |= (Edge{std::min(pr.u, pr.v), std::max(pr.u, pr.v)} == e);
    if (!held) flipped.push_back(e);
  }
  for (const auto& pr : t.test)
    if (pr.label == 0) flipped.push_back({pr.u, pr.v});
  LinkTask perturbed = t;
  perturbed.graph = Graph(40, flipped);
  E2eParams g1, g2;
  const CombinedLoss a = combined_loss_link(p, t, 0.5, &g1);
  const CombinedLoss b = combined_loss_link(p, perturbed, 0.5, &g2);
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
  CHECK((g1.flatten() - g2.flatten()).norm() <= 1e-10 * (1.0 + g1.flatten().norm()));
}

TEST_CASE("without LASE the head sees only the features") {
  const NodeTask t = sbm_node_task(25, 3, 0.0, 8);
  E2eParams p = make_node_params(t, small_lase(2, 0.01), false, NodeHead::Linear);
  CHECK(p.w0.rows() == 3);
  randomize(p, 23, 0.4);
  // Plain multinomial logistic regression.
  Matrix logits = t.features * p.w0;
  logits.rowwise() += p.b.transpose();
  CHECK((node_logits(p, t) - logits).norm() <= 1e-12);
  double ce = 0.0;
  const auto train = t.nodes(io::Split::Train);
  for (int i : train) {
    const double lse = std::log(logits.row(i).array().exp().sum());
    ce += lse - logits(i, t.labels[i]);
  }
  const CombinedLoss l = combined_loss_node(p, t, 0.5);
  CHECK(l.cross_entropy == doctest::Approx(ce / train.size()).epsilon(1e-12));
  CHECK(l.reconstruction == 0.0);
}

TEST_CASE("five-node hand oracle for the one-hop head") {
  NodeTask t;
  t.graph = Graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  t.obs = MaskSet::from_unknown_pairs(5, {{1, 2}});
  t.features = Matrix::Zero(5, 1);
  t.features << 1, 2, 3, 4, 5;
  t.labels = {0, 1, 0, 1, 0};
  t.splits = {io::Split::Train, io::Split::Train, io::Split::Val, io::Split::Test, io::Split::Train};
  t.num_classes = 2;
  t.x0 = Embedding::Zero(5, 0);
  E2eParams p = make_node_params(t, LaseParams::zeros(1, 1, false, true, Signature::identity(1)), false,
                                 NodeHead::OneHopConv);
  p.w0 << 1.0, -1.0;
  p.w1 << 0.5, 0.0;
  p.b << 0.0, 0.25;
  // Observed neighbours: 0:{1} 1:{0} 2:{3} 3:{2,4} 4:{3}.
  const double agg[5] = {2, 1, 4, 4, 4};
  Matrix expect(5, 2);
  for (int i = 0; i < 5; ++i) {
    const double f = i + 1;
    expect(i, 0) = f + 0.5 * agg[i];
    expect(i, 1) = -f + 0.25;
  }
  CHECK((node_logits(p, t) - expect).norm() <= 1e-12);
}

TEST_CASE("mu = 0 leaves the head untouched during training") {
  const NodeTask t = sbm_node_task(40, 1, 0.1, 9);
  const E2eParams init = make_node_params(t, small_lase(2, 0.01), true, NodeHead::OneHopConv);
  E2eConfig cfg;
  cfg.mu = 0.0;
  cfg.epochs = 20;
  const E2eResult r = e2e_train(t, init, cfg);
  CHECK(r.params.w0.norm() == 0.0);
  CHECK(r.params.b.norm() == 0.0);
}

TEST_CASE("joint training separates a two-block graph") {
  const NodeTask t = sbm_node_task(120, 0, 0.0, 10);
  const E2eParams init = make_node_params(t, small_lase(5, 0.2 / 120), true, NodeHead::Linear);
  E2eConfig cfg;
  cfg.mu = 0.5;
  cfg.epochs = 150;
  cfg.learning_rate = 5e-2;
  const E2eResult r = e2e_train(t, init, cfg);
  CHECK(r.best_val >= 0.85);
  std::ostringstream os;
  write_metrics_csv(r.history, os);
  CHECK(os.str().rfind("epoch,split,metric,value\n", 0) == 0);
}
