#include "doctest.h"

#include "lase/gd.hpp"
#include "lase/generators.hpp"
#include "lase/spectral.hpp"
#include "lase/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lase;

namespace {

Matrix two_block_pi(double a, double b) {
  Matrix pi(2, 2);
  pi << a, b, b, a;
  return pi;
}

LaseParams random_params(int layers, int d, bool shared, bool normalize, Signature q, std::uint64_t seed,
                         double scale) {
  Rng rng(seed);
  LaseParams p = LaseParams::zeros(layers, d, shared, normalize, std::move(q));
  for (int l = 0; l < p.stored_layers(); ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        p.h1[l](i, j) = scale * rng.normal();
        p.h2[l](i, j) = scale * rng.normal();
      }
  return p;
}

// Dense forward and loss for a sample, independent of the library kernels.
double dense_sample_loss(const TrainSample& s, const LaseParams& p) {
  const int n = s.input.n();
  const Matrix a = s.input.graph.to_dense();
  const Matrix mo = s.input.obs.to_dense();
  const Matrix w = mo.cwiseProduct(s.input.att.to_dense());
  const double p_obs = mo.sum() / (double(n) * n);
  const double p_att = s.input.att.to_dense().sum() / (double(n) * n);
  const double c1 = p.normalize ? 1.0 / (n * p_obs) : 1.0;
  const double c2 = p.normalize ? 1.0 / (n * p_obs * p_att) : 1.0;
  const Matrix q = p.q.as_matrix();
  Matrix x = s.input.x0;
  for (int l = 0; l < p.layers; ++l) {
    const Matrix g = w.cwiseProduct(x * q * x.transpose());
    x = x + c1 * mo.cwiseProduct(a) * x * p.H1(l) * q - c2 * g * x * p.H2(l) * q;
  }
  return mo.cwiseProduct(a - x * q * x.transpose()).squaredNorm();
}

std::vector<TrainSample> tiny_set(int count, int n, int d, std::uint64_t seed, double unknown = 0.2) {
  SampleMaskSpec masks;
  masks.unknown_rate = unknown;
  masks.attention = {AttentionKind::ErdosRenyi, 0.7, 0.1};
  return make_training_set({SbmSpec::balanced(n, two_block_pi(0.7, 0.3))}, count, d, seed, masks);
}

}  // namespace

TEST_CASE("risk of a single sample is its masked loss") {
  const auto set = tiny_set(1, 8, 2, 3);
  const LaseParams p = random_params(2, 2, false, true, Signature({1, -1}), 1, 0.4);
  const Embedding x = lase_forward(set[0].input, p);
  CHECK(risk(set, p) == doctest::Approx(masked_loss(set[0].input.graph, set[0].input.obs, x, p.q)).epsilon(1e-14));

  std::vector<TrainSample> copies(4, set[0]);
  CHECK(risk(copies, p) == doctest::Approx(risk(set, p)).epsilon(1e-14));
}

TEST_CASE("risk over two hand-built five-node samples matches the dense oracle") {
  TrainSample a;
  a.input = LaseInput::with_defaults(Graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}), uniform_embedding(5, 2, 1));
  a.input.obs = MaskSet::from_unknown_pairs(5, {{0, 4}});
  TrainSample b;
  b.input = LaseInput::with_defaults(Graph(5, {{0, 2}, {0, 3}, {1, 4}, {2, 4}, {3, 4}}), uniform_embedding(5, 2, 2));
  b.input.att = MaskSet::from_observed_pairs(5, {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 4}, {1, 1}});
  const std::vector<TrainSample> set{a, b};
  const LaseParams p = random_params(3, 2, false, true, Signature::identity(2), 4, 0.5);
  const double oracle = 0.5 * (dense_sample_loss(a, p) + dense_sample_loss(b, p));
  CHECK(risk(set, p) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("param_grads matches central differences on a six-node instance") {
  const auto set = tiny_set(2, 6, 2, 11);
  for (bool normalize : {true, false}) {
    const LaseParams p = random_params(3, 2, false, normalize, Signature({1, -1}), 5, 0.3);
    const GradCheckReport rep = finite_diff_check(set, p, 1e-5, 1e-5);
    CHECK(rep.max_rel_error <= 1e-5);
    CHECK(rep.passed);
  }
}

TEST_CASE("param_grads at zero coefficients") {
  const auto set = tiny_set(3, 6, 2, 21);
  const LaseParams p = LaseParams::zeros(3, 2, false, true, Signature::identity(2));
  const GradCheckReport rep = finite_diff_check(set, p, 1e-5, 1e-5);
  CHECK(rep.passed);
  // With every layer the identity map only the X0-dependent residual path carries signal.
  const LaseGrads g = param_grads(set, p);
  CHECK(g.h2[0].norm() > 0.0);
  CHECK((g.h2[0] - g.h2[2]).norm() <= 1e-12 * g.h2[0].norm());
}

TEST_CASE("gradient vanishes at a stationary input") {
  const Graph g = sbm_sample(SbmSpec::balanced(40, two_block_pi(0.5, 0.1)), 3);
  const MaskSet obs = MaskSet::full(40);
  GdConfig cfg;
  cfg.grad_tol = 1e-10;
  const GdResult conv = gd_run(g, obs, Signature::identity(2), uniform_embedding(40, 2, 1), cfg);
  std::vector<TrainSample> set(1);
  set[0].input = LaseInput::with_defaults(g, conv.x);
  const LaseParams p = gd_equivalent_params(4, 2, 0.1 / 40, 40, obs.density(), false, true, Signature::identity(2));
  const LaseGrads grads = param_grads(set, p);
  CHECK(std::sqrt(grads.squared_norm()) < 1e-4 * conv.final_loss);
}

TEST_CASE("shared gradient is the sum of the tied per-layer gradients") {
  const auto set = tiny_set(2, 7, 2, 31);
  const LaseParams shared = random_params(4, 2, true, true, Signature::identity(2), 7, 0.4);
  LaseParams untied = LaseParams::zeros(4, 2, false, true, Signature::identity(2));
  for (int l = 0; l < 4; ++l) {
    untied.h1[l] = shared.h1[0];
    untied.h2[l] = shared.h2[0];
  }
  const LaseGrads gs = param_grads(set, shared);
  const LaseGrads gu = param_grads(set, untied);
  Matrix s1 = Matrix::Zero(2, 2), s2 = Matrix::Zero(2, 2);
  for (int l = 0; l < 4; ++l) {
    s1 += gu.h1[l];
    s2 += gu.h2[l];
  }
  CHECK((gs.h1[0] - s1).norm() <= 1e-10 * std::max(1.0, s1.norm()));
  CHECK((gs.h2[0] - s2).norm() <= 1e-10 * std::max(1.0, s2.norm()));
}

TEST_CASE("zero learning rate keeps the parameters") {
  const auto set = tiny_set(6, 10, 2, 1);
  const LaseParams init = random_params(2, 2, false, true, Signature::identity(2), 3, 0.2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  for (auto opt : {Optimizer::Adam, Optimizer::SgdMomentum}) {
    cfg.optimizer = opt;
    const TrainResult r = train(set, init, cfg);
    CHECK(r.params.h1[0] == init.h1[0]);
    CHECK(r.params.h2[1] == init.h2[1]);
    CHECK(r.best_epoch == 0);
  }
}

TEST_CASE("training is deterministic and writes its logs") {
  const auto set = tiny_set(10, 12, 2, 5, 0.0);
  const LaseParams init = gd_equivalent_init(set, 3, 2, false, true, Signature::identity(2));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-2;
  cfg.seed = 9;
  const TrainResult a = train(set, init, cfg);
  const TrainResult b = train(set, init, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].risk == b.history[i].risk);

  std::ostringstream os;
  write_loss_csv(a, os);
  CHECK(os.str().rfind("epoch,batch,risk\n", 0) == 0);
  const auto path = std::filesystem::temp_directory_path() / "lase_test_ckpt.txt";
  save_checkpoint(a, 9, path);
  CHECK(load_params(path).layers == 3);
  std::ifstream meta(path.string() + ".meta");
  int epoch = -1;
  double best = 0;
  std::uint64_t seed = 0;
  meta >> epoch >> best >> seed;
  CHECK(epoch == a.best_epoch);
  CHECK(best == a.best_risk);
  CHECK(seed == 9);
}

TEST_CASE("divergence aborts with diagnostics") {
  const auto set = tiny_set(8, 12, 2, 5, 0.0);
  const LaseParams init = gd_equivalent_init(set, 3, 2, false, true, Signature::identity(2));
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 2;
  cfg.learning_rate = 5.0;
  cfg.optimizer = Optimizer::SgdMomentum;
  CHECK_THROWS_WITH_AS(train(set, init, cfg), doctest::Contains("diverged"), NumericalError);

  cfg.max_rollbacks = 20;
  const TrainResult r = train(set, init, cfg);
  CHECK(r.rollbacks >= 1);
  CHECK(r.best_risk <= r.initial_risk);
  CHECK(risk(set, r.params) == doctest::Approx(r.best_risk).epsilon(1e-12));
}

TEST_CASE("training closes most of the gap to ASE") {
  // Excess risk over the mean ASE loss halves in a majority of seeds.
  const SbmSpec spec = SbmSpec::balanced(60, two_block_pi(0.5, 0.1));
  int wins = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto set = make_training_set({spec}, 40, 2, 100 * s);
    double ase = 0.0;
    for (const auto& t : set) {
      const AseResult r = ase_embed(t.input.graph, 2);
      ase += masked_loss(t.input.graph, t.input.obs, r.x, r.q);
    }
    ase /= set.size();
    const LaseParams init = gd_equivalent_init(set, 5, 2, false, true, Signature::identity(2));
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    cfg.learning_rate = 5e-2;
    cfg.seed = s;
    const TrainResult r = train(set, init, cfg);
    wins += (r.best_risk - ase) < 0.5 * (r.initial_risk - ase);
  }
  CHECK(wins >= 3);
}

TEST_CASE("shared weights trained at five layers run at eight") {
  const SbmSpec spec = SbmSpec::balanced(40, two_block_pi(0.5, 0.1));
  const auto set = make_training_set({spec}, 20, 2, 7);
  const LaseParams init = gd_equivalent_init(set, 5, 2, true, true, Signature::identity(2));
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 5;
  cfg.learning_rate = 2e-2;
  const TrainResult r = train(set, init, cfg);
  CHECK(r.params.num_parameters() == 8);
  const double at8 = risk(set, r.params.with_layers(8));
  CHECK(std::isfinite(at8));
  MESSAGE("risk at L=5: " << r.best_risk << ", at L=8: " << at8);
}

TEST_CASE("training set construction") {
  const SbmSpec spec = SbmSpec::balanced(30, two_block_pi(0.5, 0.1));
  std::vector<SbmSpec> specs(11, spec);
  CHECK(make_training_set(specs, 3, 2, 1).size() == 33);

  const auto one = make_training_set({spec}, 1, 2, 42);
  const auto again = make_training_set({spec}, 1, 2, 42);
  CHECK(one[0].input.graph == again[0].input.graph);
  CHECK(one[0].input.x0 == again[0].input.x0);
  CHECK(one[0].input.x0.minCoeff() >= 0.0);
  CHECK(one[0].input.x0.maxCoeff() < 1.0);

  const Graph big = sbm_sample(SbmSpec::balanced(400, two_block_pi(0.3, 0.1)), 1);
  const auto subs = make_training_set(big, 20, 0.05, 2, 3);
  CHECK(subs.size() == 20);
  int distinct = 0;
  for (std::size_t i = 1; i < subs.size(); ++i) distinct += !(subs[i].input.graph == subs[0].input.graph);
  CHECK(distinct == 19);
  for (const auto& s : subs) CHECK(s.input.n() == 20);

  SampleMaskSpec masks;
  masks.unknown_rate = 0.3;
  masks.attention = {AttentionKind::WattsStrogatz, 0.3, 0.1};
  const auto masked = make_training_set({SbmSpec::balanced(200, two_block_pi(0.3, 0.1))}, 2, 2, 3, masks);
  CHECK(masked[0].input.obs.density() == doctest::Approx(0.7).epsilon(0.05));
  CHECK(masked[0].input.att.density() == doctest::Approx(0.3).epsilon(0.1));
  CHECK_THROWS_AS(make_training_set(std::vector<SbmSpec>{}, 3, 2, 1), std::invalid_argument);
}
