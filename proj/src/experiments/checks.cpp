#include "lase/experiments.hpp"

#include "lase/gd.hpp"
#include "lase/generators.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <ostream>

namespace lase::exp {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_pi(Rng& rng) {
  Matrix pi(2, 2);
  const double off = 0.05 + 0.4 * rng.uniform();
  pi << 0.1 + 0.8 * rng.uniform(), off, off, 0.1 + 0.8 * rng.uniform();
  return pi;
}

LaseParams random_params(int layers, int d, bool shared, bool normalize, Signature q, Rng& rng, double scale) {
  LaseParams p = LaseParams::zeros(layers, d, shared, normalize, std::move(q));
  for (int l = 0; l < p.stored_layers(); ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        p.h1[l](i, j) = scale * rng.normal();
        p.h2[l](i, j) = scale * rng.normal();
      }
  return p;
}

Signature random_signature(int d, Rng& rng) {
  std::vector<int> s(d, 1);
  for (int k = 1; k < d; ++k) s[k] = rng.bernoulli(0.5) ? -1 : 1;
  return Signature(s);
}

/// Random small sample with an unknown-pair mask and an ER attention mask.
TrainSample random_sample(int n, int d, Rng& rng, std::uint64_t seed) {
  TrainSample s;
  const Graph g = sbm_sample(SbmSpec::balanced(n, random_pi(rng)), seed);
  s.input = LaseInput::with_defaults(g, uniform_embedding(n, d, seed ^ 0x51ULL));
  s.input.obs = random_unknown_mask(n, 0.25, seed ^ 0x52ULL);
  if (rng.bernoulli(0.5)) s.input.att = er_mask(n, 0.7, seed ^ 0x53ULL);
  return s;
}

double max_rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

/// Dense forward without any signature, for the reduction identities.
Matrix dense_forward_no_q(const LaseInput& in, const LaseParams& p) {
  const int n = in.n();
  const Matrix a = in.graph.to_dense();
  const Matrix mo = in.obs.to_dense();
  const Matrix w = mo.cwiseProduct(in.att.to_dense());
  const double p_obs = mo.sum() / (double(n) * n);
  const double p_att = in.att.to_dense().sum() / (double(n) * n);
  const double c1 = p.normalize ? 1.0 / (n * p_obs) : 1.0;
  const double c2 = p.normalize ? 1.0 / (n * p_obs * p_att) : 1.0;
  Matrix x = in.x0;
  for (int l = 0; l < p.layers; ++l) {
    const Matrix g = w.cwiseProduct(x * x.transpose());
    x = x + c1 * mo.cwiseProduct(a) * x * p.H1(l) - c2 * g * x * p.H2(l);
  }
  return x;
}

/// E2E joint gradient error on one tiny node task.
double e2e_fd_error(Rng& rng, std::uint64_t seed) {
  const int n = 6 + static_cast<int>(rng.below(5));
  const int d = 1 + static_cast<int>(rng.below(3));
  const int layers = 1 + static_cast<int>(rng.below(4));
  NodeTask t;
  const SbmSpec spec = SbmSpec::balanced(n, random_pi(rng));
  t.graph = sbm_sample(spec, seed);
  t.obs = random_unknown_mask(n, 0.2, seed ^ 0x61ULL);
  t.labels = spec.labels();
  t.num_classes = 2;
  t.splits.assign(n, io::Split::Train);
  t.features.resize(n, 2);
  for (Eigen::Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = rng.normal();
  t.x0 = uniform_embedding(n, d, seed ^ 0x62ULL);
  const LaseParams lp = random_params(layers, d, false, true, Signature::identity(d), rng, 0.2);
  E2eParams p = make_node_params(t, lp, true, rng.bernoulli(0.5) ? NodeHead::OneHopConv : NodeHead::Linear);
  Vector theta = p.flatten();
  for (Eigen::Index i = lp.num_parameters(); i < theta.size(); ++i) theta[i] = 0.5 * rng.normal();
  p.unflatten(theta);
  const double mu = rng.uniform();

  E2eParams g;
  combined_loss_node(p, t, mu, &g);
  const Vector an = g.flatten();
  const double h = 1e-5;
  const double floor = 1e-3 * an.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    p.unflatten(tp);
    const double fp = combined_loss_node(p, t, mu).total;
    p.unflatten(tm);
    const double fm = combined_loss_node(p, t, mu).total;
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - an[i]) / std::max({std::abs(fd), std::abs(an[i]), floor}));
  }
  return worst;
}

}  // namespace

Report run_equivalence(const ExperimentOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Report r;
  r.experiment = "equivalence";
  r.table.columns = {"trial", "n", "d", "layers", "alpha", "rel_error"};
  Rng rng(opts.seed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(81));
    const int d = 1 + static_cast<int>(rng.below(3));
    const int layers = 1 + static_cast<int>(rng.below(20));
    const std::uint64_t seed = opts.seed * 1000 + trial;
    const Graph g = sbm_sample(SbmSpec::balanced(n, random_pi(rng)), seed);
    const Embedding x0 = uniform_embedding(n, d, seed ^ 0x9E3779B97F4A7C15ULL);
    const double alpha = (0.01 + 0.04 * rng.uniform()) / n;
    const LaseInput in = LaseInput::with_defaults(g, x0);
    const Signature q = Signature::identity(d);
    const Embedding y = lase_forward(in, LaseParams::scaled_identity(layers, d, 4 * alpha, false, false, q));
    GdConfig step;
    step.fixed_step = alpha;
    const GdResult gd = gd_run_fixed_iters(g, in.obs, q, x0, layers, step);
    const double err = max_rel(y, gd.x);
    worst = std::max(worst, err);
    r.table.add({std::to_string(trial), std::to_string(n), std::to_string(d), std::to_string(layers), fmt(alpha),
                 fmt(err)});
  }
  const double secs = seconds_since(t0);
  r.check("lase_matches_gd", worst <= 1e-10, "max relative error " + fmt(worst) + " (bound 1e-10)");
  r.check("runtime", secs < 10.0, fmt(secs) + " s (bound 10 s)");
  return r;
}

Report run_gradients(const ExperimentOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Report r;
  r.experiment = "gradients";
  r.table.columns = {"instance", "kind", "n", "d", "layers", "max_rel_error"};
  Rng rng(opts.seed);
  double worst_lase = 0.0, worst_e2e = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::uint64_t seed = opts.seed * 7919 + k;
    const int n = 4 + static_cast<int>(rng.below(7));
    const int d = 1 + static_cast<int>(rng.below(3));
    const int layers = 1 + static_cast<int>(rng.below(4));
    std::vector<TrainSample> set{random_sample(n, d, rng, seed), random_sample(n, d, rng, seed + 100000)};
    const bool shared = rng.bernoulli(0.3);
    const LaseParams p = random_params(layers, d, shared, rng.bernoulli(0.5), random_signature(d, rng), rng, 0.3);
    const GradCheckReport rep = finite_diff_check(set, p, 1e-5, 1e-5);
    worst_lase = std::max(worst_lase, rep.max_rel_error);
    r.table.add({std::to_string(k), "lase", std::to_string(n), std::to_string(d), std::to_string(layers),
                 fmt(rep.max_rel_error)});
    const double e = e2e_fd_error(rng, seed);
    worst_e2e = std::max(worst_e2e, e);
    r.table.add({std::to_string(k), "e2e", "-", "-", "-", fmt(e)});
  }
  const double secs = seconds_since(t0);
  r.check("param_grads", worst_lase <= 1e-5, "max relative error " + fmt(worst_lase) + " over 50 instances");
  r.check("e2e_joint_grads", worst_e2e <= 1e-5, "max relative error " + fmt(worst_e2e) + " over 50 instances");
  r.check("runtime", secs < 60.0, fmt(secs) + " s (bound 60 s)");
  return r;
}

Report run_q_estimation(const ExperimentOptions& opts) {
  Report r;
  r.experiment = "q-estimation";
  r.table.columns = {"seed", "estimated_q", "correct"};
  const Signature expect({1, -1});
  int hits = 0;
  const int trials = 100;
  for (int s = 0; s < trials; ++s) {
    const std::uint64_t seed = opts.seed * 100 + s;
    const Graph g = sbm_sample(sbm_preset("disassortative"), seed);
    const Signature q = estimate_q(g, 2, 5, 0.3, seed ^ 0xD1B54A32D192ED03ULL);
    hits += q == expect;
    r.table.add({std::to_string(seed), q.to_string(), q == expect ? "1" : "0"});
  }
  r.check("disassortative_signature", hits >= 95, std::to_string(hits) + "/100 seeds give Q = diag(+1,-1)");
  return r;
}

Report run_invariants(const ExperimentOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Report r;
  r.experiment = "invariants";
  r.table.columns = {"invariant", "trial", "error"};
  Rng rng(opts.seed);
  auto record = [&](const std::string& name, int trial, double err) { r.table.add({name, std::to_string(trial), fmt(err)}); };
  double perm_lase = 0, perm_gd = 0, perm_ase = 0, rot = 0, hyper = 0, qred = 0, mask_full = 0, mask_att = 0,
         mask_loss = 0, gft_err = 0, noise = 0;

  for (int t = 0; t < 5; ++t) {
    const std::uint64_t seed = opts.seed * 31 + t;
    const int n = 30 + static_cast<int>(rng.below(30));
    const int d = 2 + static_cast<int>(rng.below(2));
    TrainSample s = random_sample(n, d, rng, seed);
    const auto perm = random_permutation(n, seed);

    // Permutation equivariance of the LASE stack, the GD iterates and the ASE loss.
    const LaseParams p = random_params(3, d, false, true, random_signature(d, rng), rng, 0.1);
    const Embedding y = lase_forward(s.input, p);
    const Embedding py = lase_forward(permute_input(s.input, perm), p);
    perm_lase = std::max(perm_lase, max_rel(py, permute_rows(y, perm)));
    record("perm_lase", t, perm_lase);

    GdConfig step;
    step.fixed_step = 0.02 / n;
    const Signature qi = Signature::identity(d);
    const GdResult a = gd_run_fixed_iters(s.input.graph, s.input.obs, qi, s.input.x0, 5, step);
    const GdResult b = gd_run_fixed_iters(s.input.graph.permuted(perm), s.input.obs.permuted(perm), qi,
                                          permute_rows(s.input.x0, perm), 5, step);
    perm_gd = std::max(perm_gd, max_rel(b.x, permute_rows(a.x, perm)));
    record("perm_gd", t, perm_gd);

    const AseResult ase = ase_embed(s.input.graph, d);
    const AseResult pase = ase_embed(s.input.graph.permuted(perm), d);
    const MaskSet full = MaskSet::full(n);
    const double la = masked_loss(s.input.graph, full, ase.x, ase.q);
    const double lb = masked_loss(s.input.graph.permuted(perm), full, pase.x, pase.q);
    perm_ase = std::max(perm_ase, std::abs(la - lb) / la);
    record("perm_ase_loss", t, perm_ase);

    // Orthogonal rotations for Q = I, hyperbolic ones for Q = diag(1, -1).
    Matrix gauss(d, d);
    for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = rng.normal();
    const Matrix rmat = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
    const Embedding x = uniform_embedding(n, d, seed ^ 0x71ULL);
    const double l0 = masked_loss(s.input.graph, s.input.obs, x, qi);
    rot = std::max(rot, std::abs(masked_loss(s.input.graph, s.input.obs, x * rmat, qi) - l0) / l0);
    record("rotation_loss", t, rot);
    const double th = rng.uniform();
    Matrix hyp = Matrix::Identity(d, d);
    hyp(0, 0) = hyp(1, 1) = std::cosh(th);
    hyp(0, 1) = hyp(1, 0) = std::sinh(th);
    std::vector<int> signs(d, 1);
    signs[1] = -1;
    const Signature qh(signs);
    const double lh = masked_loss(s.input.graph, s.input.obs, x, qh);
    hyper = std::max(hyper, std::abs(masked_loss(s.input.graph, s.input.obs, x * hyp, qh) - lh) / lh);
    record("indefinite_rotation_loss", t, hyper);

    // Q = I reduces the block to the plain unrolled GD form.
    const LaseParams pi = random_params(3, d, false, t % 2 == 0, qi, rng, 0.1);
    qred = std::max(qred, max_rel(lase_forward(s.input, pi), dense_forward_no_q(s.input, pi)));
    record("q_identity_reduction", t, qred);

    // Full masks reduce to M = 11^T - I everywhere; full attention leaves W = M_obs.
    const LaseInput plain = LaseInput::with_defaults(s.input.graph, s.input.x0);
    mask_full = std::max(mask_full, max_rel(lase_forward(plain, pi), dense_forward_no_q(plain, pi)));
    record("full_mask_reduction", t, mask_full);
    LaseInput obs_only = s.input;
    obs_only.att = MaskSet::full(n, true);
    const LaseContext ctx = LaseContext::build(obs_only, true);
    mask_att = std::max(mask_att, ctx.w == obs_only.obs ? 0.0 : 1.0);
    record("full_attention_is_obs", t, mask_att);
    const Matrix resid = s.input.graph.to_dense() - x * x.transpose();
    const double dense_loss = resid.squaredNorm() - resid.diagonal().squaredNorm();
    mask_loss = std::max(mask_loss, std::abs(masked_loss(s.input.graph, full, x, qi) - dense_loss) / dense_loss);
    record("full_mask_loss", t, mask_loss);

    // GFT round trip on the full eigenbasis.
    const EigenPairs eig = full_eigenpairs(s.input.graph.to_dense());
    Matrix sig(n, 3);
    for (Eigen::Index i = 0; i < sig.size(); ++i) sig.data()[i] = rng.normal();
    gft_err = std::max(gft_err, max_rel(igft(gft(sig, eig), eig), sig));
    record("gft_round_trip", t, gft_err);
  }

  // Filtered white noise: per-node variance equals sum_i h(lambda_i)^2 v_i^2.
  {
    const Graph g = sbm_sample(sbm_preset("symmetric", 60), opts.seed);
    const GraphFilter f = GraphFilter::scalar({0.3, 1.2, -0.7}, ShiftNormalization::DivideByN);
    const int samples = 20000;
    const Vector mc = filtered_noise_variance(f, g, samples, opts.seed);
    const Vector exact = spectral_noise_variance(f, full_eigenpairs(g.to_dense()), g.n());
    // 2 sigma^4 is the variance of a squared Gaussian, so the MC standard error is sqrt(2/S) relative.
    noise = ((mc - exact).array().abs() / exact.array()).maxCoeff() / std::sqrt(2.0 / samples);
    record("noise_variance_z", 0, noise);
  }
  const double secs = seconds_since(t0);

  r.check("permutation_lase", perm_lase <= 1e-10, "relative error " + fmt(perm_lase));
  r.check("permutation_gd", perm_gd <= 1e-10, "relative error " + fmt(perm_gd));
  r.check("permutation_ase_loss", perm_ase <= 1e-8, "relative error " + fmt(perm_ase));
  r.check("rotation_invariance", rot <= 1e-10, "relative error " + fmt(rot));
  r.check("indefinite_rotation_invariance", hyper <= 1e-9, "relative error " + fmt(hyper));
  r.check("q_identity_reduction", qred <= 1e-10, "relative error " + fmt(qred));
  r.check("full_mask_reduction", mask_full <= 1e-10, "relative error " + fmt(mask_full));
  r.check("full_attention_equals_obs", mask_att == 0.0, mask_att == 0.0 ? "W = M_obs" : "W differs from M_obs");
  r.check("full_mask_loss", mask_loss <= 1e-12, "relative error " + fmt(mask_loss));
  r.check("gft_round_trip", gft_err <= 1e-10, "relative error " + fmt(gft_err));
  r.check("filtered_noise_variance", noise <= 5.0, "max deviation " + fmt(noise) + " standard errors (bound 5)");
  r.check("runtime", secs < 300.0, fmt(secs) + " s (bound 300 s)");
  return r;
}

}  // namespace lase::exp
