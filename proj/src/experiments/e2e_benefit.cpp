#include "lase/experiments.hpp"

#include "lase/generators.hpp"

#include <ostream>

namespace lase::exp {

namespace {

/// Three-class SBM whose node features are noisy class means. The features are
/// weak enough that graph structure carries part of the label signal.
NodeTask labeled_sbm(int n, int features, double rho, std::uint64_t seed) {
  Matrix pi = Matrix::Constant(3, 3, 0.05);
  pi.diagonal().setConstant(0.4);
  const SbmSpec spec = SbmSpec::balanced(n, pi);
  NodeTask t;
  t.graph = sbm_sample(spec, seed);
  t.obs = random_unknown_mask(n, rho, seed ^ 0xD1B54A32D192ED03ULL);
  t.labels = spec.labels();
  t.num_classes = 3;
  Rng rng(seed ^ 0x51ED2701ULL);
  Matrix means(3, features);
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = 0.3 * rng.normal();
  t.features.resize(n, features);
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < features; ++f) t.features(i, f) = means(t.labels[i], f) + rng.normal();
  t.splits.assign(n, io::Split::None);
  return t;
}

void random_split(NodeTask& t, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& s : t.splits) {
    const double u = rng.uniform();
    s = u < 0.2 ? io::Split::Train : (u < 0.4 ? io::Split::Val : io::Split::Test);
  }
}

}  // namespace

Report run_e2e_benefit(const ExperimentOptions& opts) {
  Report r;
  r.experiment = "e2e";
  r.table.columns = {"split", "no_pe_test_acc", "lase_e2e_test_acc"};
  const int n = 300, d = 3;
  NodeTask task = labeled_sbm(n, 8, 0.6, opts.seed * 1313);
  task.x0 = uniform_embedding(n, d, opts.seed ^ 0x9E3779B97F4A7C15ULL);
  const double p_obs = static_cast<double>(task.obs.nnz()) / (static_cast<double>(n) * n);
  const LaseParams lase = gd_equivalent_params(10, d, 0.5 / n, n, p_obs, false, true, Signature::identity(d));

  E2eConfig cfg;
  cfg.epochs = opts.epochs > 0 ? opts.epochs : 200;
  cfg.learning_rate = opts.learning_rate > 0 ? opts.learning_rate : 1e-2;
  int wins = 0;
  for (int s = 0; s < opts.seeds; ++s) {
    random_split(task, opts.seed * 1000 + 1300 + s);
    const E2eResult base = e2e_train(task, make_node_params(task, lase, false, NodeHead::OneHopConv), cfg);
    const E2eResult joint = e2e_train(task, make_node_params(task, lase, true, NodeHead::OneHopConv), cfg);
    const double a0 = node_accuracy(base.params, task, io::Split::Test);
    const double a1 = node_accuracy(joint.params, task, io::Split::Test);
    wins += a1 >= a0;
    r.table.add({std::to_string(s), fmt(a0), fmt(a1)});
    if (opts.log) *opts.log << "split " << s << ": no PE " << a0 << ", LASE E2E " << a1 << std::endl;
  }
  r.check("lase_e2e_vs_no_pe", 2 * wins > opts.seeds,
          std::to_string(wins) + "/" + std::to_string(opts.seeds) + " splits with LASE E2E test accuracy >= no-PE accuracy");
  return r;
}

}  // namespace lase::exp
