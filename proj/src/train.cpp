#include "lase/train.hpp"

#include "lase/gd.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lase {
namespace {

constexpr std::uint64_t kNoiseMix = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kMaskMix = 0xD1B54A32D192ED03ULL;
constexpr std::uint64_t kAttMix = 0x8CB92BA72F3D8DD7ULL;
/// Step growth a warm-start scale must tolerate.
constexpr double kStabilityMargin = 1.25;

double total_weight(const std::vector<TrainSample>& samples, const std::vector<int>& subset) {
  if (subset.empty()) return static_cast<double>(samples.size());
  return static_cast<double>(subset.size());
}

double sample_loss(const TrainSample& s, const LaseParams& p, const LaseContext& ctx) {
  const Embedding x = lase_forward(s.input, p, ctx);
  return masked_loss(s.input.graph, s.input.obs, x, p.q);
}

void apply_update(LaseParams& p, const LaseGrads& step) {
  for (int l = 0; l < p.stored_layers(); ++l) {
    p.h1[l] -= step.h1[l];
    p.h2[l] -= step.h2[l];
  }
}

std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  return order;
}

MaskSet sample_obs_mask(int n, const SampleMaskSpec& masks, std::uint64_t seed) {
  if (masks.unknown_rate <= 0.0) return MaskSet::full(n, false);
  return random_unknown_mask(n, masks.unknown_rate, seed ^ kMaskMix);
}

TrainSample make_sample(Graph g, int d, std::uint64_t seed, const SampleMaskSpec& masks) {
  const int n = g.n();
  TrainSample s;
  s.input = LaseInput::with_defaults(std::move(g), uniform_embedding(n, d, seed ^ kNoiseMix));
  s.input.obs = sample_obs_mask(n, masks, seed);
  s.input.att = make_attention_mask(n, masks.attention, seed ^ kAttMix);
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (learning_rate < 0.0) throw std::invalid_argument("learning rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("gradient clip must be positive");
  if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence factor must exceed 1");
  if (max_rollbacks < 0) throw std::invalid_argument("rollback count must be non-negative");
}

std::vector<LaseContext> build_contexts(const std::vector<TrainSample>& samples, bool normalize) {
  std::vector<LaseContext> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(LaseContext::build(s.input, normalize));
  return out;
}

double risk(const std::vector<TrainSample>& samples, const LaseParams& p, const std::vector<LaseContext>& ctx) {
  if (samples.empty()) throw std::invalid_argument("empty training set");
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += samples[i].weight * sample_loss(samples[i], p, ctx[i]);
  return sum / static_cast<double>(samples.size());
}

double risk(const std::vector<TrainSample>& samples, const LaseParams& p) {
  return risk(samples, p, build_contexts(samples, p.normalize));
}

LaseGrads param_grads(const std::vector<TrainSample>& samples, const LaseParams& p,
                      const std::vector<LaseContext>& ctx, const std::vector<int>& subset, double* subset_risk) {
  if (samples.empty()) throw std::invalid_argument("empty training set");
  LaseGrads total = LaseGrads::zeros_like(p);
  double loss_sum = 0.0;
  LaseTape tape;
  Embedding xbar;
  const auto visit = [&](int i) {
    const TrainSample& s = samples[i];
    Embedding x;
    try {
      x = lase_forward(s.input, p, ctx[i], &tape);
    } catch (const NumericalError& e) {
      throw NumericalError("sample " + std::to_string(i) + ": " + e.what());
    }
    const double f = masked_loss_grad(s.input.graph, s.input.obs, x, p.q, xbar);
    if (!std::isfinite(f)) throw NumericalError("sample " + std::to_string(i) + ": non-finite loss");
    loss_sum += s.weight * f;
    xbar *= s.weight;
    lase_backward(p, ctx[i], tape, xbar, total);
  };
  if (subset.empty()) {
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) visit(i);
  } else {
    for (int i : subset) visit(i);
  }
  const double denom = total_weight(samples, subset);
  total *= 1.0 / denom;
  if (subset_risk) *subset_risk = loss_sum / denom;
  return total;
}

LaseGrads param_grads(const std::vector<TrainSample>& samples, const LaseParams& p) {
  return param_grads(samples, p, build_contexts(samples, p.normalize));
}

TrainResult train(const std::vector<TrainSample>& samples, const LaseParams& init, const TrainConfig& cfg) {
  cfg.validate();
  init.validate();
  if (samples.empty()) throw std::invalid_argument("empty training set");
  const std::vector<LaseContext> ctx = build_contexts(samples, init.normalize);

  TrainResult r;
  r.params = init;
  r.initial_risk = risk(samples, init, ctx);
  r.best_risk = r.initial_risk;
  const double limit = cfg.divergence_factor * r.initial_risk;

  LaseParams p = init;
  LaseGrads m1 = LaseGrads::zeros_like(p);
  LaseGrads m2 = LaseGrads::zeros_like(p);
  Rng rng(cfg.seed);
  long step = 0;
  const int n = static_cast<int>(samples.size());

  const auto run_epoch = [&](int epoch, double lr) {
    const std::vector<int> order = shuffled(n, rng);
    int batch = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++batch) {
      const std::vector<int> idx(order.begin() + start, order.begin() + std::min(n, start + cfg.batch_size));
      double batch_risk = 0.0;
      LaseGrads g = param_grads(samples, p, ctx, idx, &batch_risk);
      r.history.push_back({epoch, batch, batch_risk});
      if (!(batch_risk <= limit)) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << " batch " << batch << ": risk " << batch_risk
           << " vs initial " << r.initial_risk;
        throw NumericalError(os.str());
      }
      if (cfg.grad_clip) {
        const double norm = std::sqrt(g.squared_norm());
        if (norm > *cfg.grad_clip) g *= *cfg.grad_clip / norm;
      }
      ++step;
      LaseGrads update = LaseGrads::zeros_like(p);
      for (int l = 0; l < p.stored_layers(); ++l) {
        for (int which = 0; which < 2; ++which) {
          Matrix& gm = which ? g.h2[l] : g.h1[l];
          Matrix& a = which ? m1.h2[l] : m1.h1[l];
          Matrix& b = which ? m2.h2[l] : m2.h1[l];
          Matrix& u = which ? update.h2[l] : update.h1[l];
          if (cfg.optimizer == Optimizer::Adam) {
            a = cfg.beta1 * a + (1.0 - cfg.beta1) * gm;
            b = cfg.beta2 * b + (1.0 - cfg.beta2) * gm.cwiseAbs2();
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            u = lr * (a / c1).array() / ((b / c2).array().sqrt() + cfg.adam_eps);
          } else {
            a = cfg.momentum * a + gm;
            u = lr * a;
          }
        }
      }
      apply_update(p, update);
    }
    const double full = risk(samples, p, ctx);
    r.history.push_back({epoch, -1, full});
    if (!(full <= limit)) {
      std::ostringstream os;
      os << "training diverged after epoch " << epoch << ": risk " << full << " vs initial " << r.initial_risk;
      throw NumericalError(os.str());
    }
    if (full < r.best_risk) {
      r.best_risk = full;
      r.best_epoch = epoch;
      r.params = p;
    }
    if (cfg.log_every > 0 && epoch % cfg.log_every == 0) {
      std::ostringstream os;
      os << "epoch " << epoch << " risk " << full << " best " << r.best_risk;
      log_info(os.str());
    }
  };
  double lr = cfg.learning_rate;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      run_epoch(epoch, lr);
    } catch (const NumericalError& e) {
      if (r.rollbacks >= cfg.max_rollbacks) throw;
      // Resume from the best parameters with fresh moments and half the step.
      ++r.rollbacks;
      lr *= 0.5;
      p = r.params;
      m1 = LaseGrads::zeros_like(p);
      m2 = LaseGrads::zeros_like(p);
      step = 0;
      std::ostringstream os;
      os << e.what() << "; rolled back to epoch " << r.best_epoch << " with learning rate " << lr;
      log_info(os.str());
    }
  }
  return r;
}

LaseParams gd_equivalent_params(int layers, int d, double alpha0, double mean_n, double mean_p_obs, bool shared,
                                bool normalize, Signature q) {
  const double scale = 4.0 * alpha0 * (normalize ? mean_n * mean_p_obs : 1.0);
  return LaseParams::scaled_identity(layers, d, scale, shared, normalize, std::move(q));
}

LaseParams gd_equivalent_init(const std::vector<TrainSample>& samples, int layers, int d, bool shared,
                              bool normalize, Signature q, const std::vector<double>& scales) {
  if (samples.empty()) throw std::invalid_argument("empty training set");
  if (scales.empty()) throw std::invalid_argument("no initialisation scales to try");
  double mean_n = 0.0;
  double mean_p = 0.0;
  for (const auto& s : samples) {
    mean_n += s.input.n();
    mean_p += s.input.obs.density();
  }
  mean_n /= samples.size();
  mean_p /= samples.size();

  const std::size_t probe = std::min<std::size_t>(samples.size(), 16);
  const std::vector<TrainSample> head(samples.begin(), samples.begin() + probe);
  const std::vector<LaseContext> ctx = build_contexts(head, normalize);
  LaseParams best;
  double best_risk = std::numeric_limits<double>::infinity();
  auto risk_at = [&](double s) {
    try {
      return risk(head, gd_equivalent_params(layers, d, s / mean_n, mean_n, mean_p, shared, normalize, q), ctx);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  for (double s : scales) {
    LaseParams p = gd_equivalent_params(layers, d, s / mean_n, mean_n, mean_p, shared, normalize, q);
    const double value = risk_at(s);
    // Skip scales at the edge of GD stability: training perturbs the step and
    // would push the unrolled iteration over it.
    if (!(risk_at(kStabilityMargin * s) <= 2.0 * value)) continue;
    if (value < best_risk) {
      best_risk = value;
      best = std::move(p);
    }
  }
  if (!std::isfinite(best_risk)) throw NumericalError("every initialisation scale diverged");
  return best;
}

std::uint64_t noise_seed(std::uint64_t base, int index) { return (base + static_cast<std::uint64_t>(index)) ^ kNoiseMix; }

std::vector<TrainSample> make_training_set(const std::vector<SbmSpec>& specs, int per_spec, int d,
                                           std::uint64_t seed, const SampleMaskSpec& masks) {
  if (specs.empty() || per_spec < 1) throw std::invalid_argument("empty training source");
  std::vector<TrainSample> out;
  out.reserve(specs.size() * per_spec);
  for (const auto& spec : specs) {
    spec.validate();
    for (int k = 0; k < per_spec; ++k) {
      const std::uint64_t s = seed + out.size();
      out.push_back(make_sample(sbm_sample(spec, s), d, s, masks));
    }
  }
  return out;
}

std::vector<TrainSample> make_training_set(const Graph& g, int count, double fraction, int d, std::uint64_t seed,
                                           const SampleMaskSpec& masks) {
  if (count < 1 || g.n() < 2) throw std::invalid_argument("empty training source");
  std::vector<TrainSample> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const std::uint64_t s = seed + k;
    Graph sub = fraction >= 1.0 ? g : induced_subgraph(g, fraction, s).graph;
    out.push_back(make_sample(std::move(sub), d, s, masks));
  }
  return out;
}

GradCheckReport finite_diff_check(const std::vector<TrainSample>& samples, const LaseParams& p, double h, double tol) {
  const std::vector<LaseContext> ctx = build_contexts(samples, p.normalize);
  const LaseGrads g = param_grads(samples, p, ctx);
  double largest = 0.0;
  for (int l = 0; l < p.stored_layers(); ++l)
    largest = std::max({largest, g.h1[l].cwiseAbs().maxCoeff(), g.h2[l].cwiseAbs().maxCoeff()});
  GradCheckReport rep;
  for (int l = 0; l < p.stored_layers(); ++l)
    for (int which = 1; which <= 2; ++which)
      for (int i = 0; i < p.d; ++i)
        for (int j = 0; j < p.d; ++j) {
          LaseParams plus = p, minus = p;
          (which == 1 ? plus.h1 : plus.h2)[l](i, j) += h;
          (which == 1 ? minus.h1 : minus.h2)[l](i, j) -= h;
          const double fd = (risk(samples, plus, ctx) - risk(samples, minus, ctx)) / (2 * h);
          const double an = (which == 1 ? g.h1 : g.h2)[l](i, j);
          const double abs_err = std::abs(fd - an);
          const double rel = abs_err / std::max({std::abs(an), std::abs(fd), 1e-3 * largest, 1e-300});
          rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
          if (rel >= rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_layer = l;
            rep.worst_matrix = which;
            rep.worst_row = i;
            rep.worst_col = j;
          }
        }
  rep.passed = rep.max_rel_error <= tol;
  return rep;
}

void write_loss_csv(const TrainResult& r, std::ostream& os) {
  os << "epoch,batch,risk\n";
  const auto old = os.precision(17);
  for (const auto& h : r.history) os << h.epoch << ',' << h.batch << ',' << h.risk << '\n';
  os.precision(old);
}

void save_checkpoint(const TrainResult& r, std::uint64_t seed, const std::filesystem::path& path) {
  save_params(r.params, path);
  std::filesystem::path meta = path;
  meta += ".meta";
  std::ofstream out(meta);
  if (!out) throw FormatError("cannot write " + meta.string());
  out << std::setprecision(17) << r.best_epoch << ' ' << r.best_risk << ' ' << seed << '\n';
}

}  // namespace lase
