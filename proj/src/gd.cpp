#include "lase/gd.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lase {
namespace {

void check_shapes(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q) {
  if (m.n() != g.n() || x.rows() != g.n()) throw std::invalid_argument("graph, mask and embedding sizes differ");
  if (q.dim() != x.cols()) throw std::invalid_argument("signature dimension does not match the embedding");
}

inline double dot(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

inline void axpy(double alpha, const double* x, double* y, int d) {
  for (int k = 0; k < d; ++k) y[k] += alpha * x[k];
}

}  // namespace

void masked_product(const MaskSet& w, const Embedding& u, const Embedding& v, const Embedding& z, double coef,
                    Embedding& out) {
  const int n = w.n();
  const int d = static_cast<int>(u.cols());
  if (u.rows() != n || v.rows() != n || z.rows() != n || out.rows() != n || v.cols() != d || z.cols() != out.cols())
    throw std::invalid_argument("masked_product operands have inconsistent shapes");
  const int dz = static_cast<int>(z.cols());
  for (int i = 0; i < n; ++i) {
    const double* ui = u.row(i).data();
    double* oi = out.row(i).data();
    w.for_each_observed(i, [&](int j) { axpy(coef * dot(ui, v.row(j).data(), d), z.row(j).data(), oi, dz); });
  }
}

double masked_loss_grad(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q, Embedding& grad) {
  check_shapes(g, m, x, q);
  const int n = g.n();
  const int d = static_cast<int>(x.cols());
  const Embedding xq = q.apply(x);
  grad.setZero(n, d);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* xqi = xq.row(i).data();
    double* gi = grad.row(i).data();
    const auto nb = g.neighbors(i);
    std::size_t next = 0;
    m.for_each_observed(i, [&](int j) {
      while (next < nb.size() && nb[next] < j) ++next;
      const double a = (next < nb.size() && nb[next] == j) ? 1.0 : 0.0;
      const double r = dot(xqi, x.row(j).data(), d) - a;
      loss += r * r;
      axpy(r, xq.row(j).data(), gi, d);
    });
  }
  grad *= 4.0;
  return loss;
}

double masked_loss(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q) {
  check_shapes(g, m, x, q);
  const int n = g.n();
  const int d = static_cast<int>(x.cols());
  const Embedding xq = q.apply(x);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* xqi = xq.row(i).data();
    const auto nb = g.neighbors(i);
    std::size_t next = 0;
    m.for_each_observed(i, [&](int j) {
      while (next < nb.size() && nb[next] < j) ++next;
      const double a = (next < nb.size() && nb[next] == j) ? 1.0 : 0.0;
      const double r = dot(xqi, x.row(j).data(), d) - a;
      loss += r * r;
    });
  }
  return loss;
}

Embedding masked_grad(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q) {
  Embedding grad;
  masked_loss_grad(g, m, x, q, grad);
  return grad;
}

void GdConfig::validate() const {
  if (max_iters < 0) throw std::invalid_argument("max_iters must be non-negative");
  if (!(armijo.c > 0.0 && armijo.c < 1.0)) throw std::invalid_argument("Armijo c must lie in (0, 1)");
  if (!(armijo.shrink > 0.0 && armijo.shrink < 1.0)) throw std::invalid_argument("Armijo shrink must lie in (0, 1)");
  if (fixed_step && !(*fixed_step > 0.0)) throw std::invalid_argument("fixed step must be positive");
}

GdResult gd_run(const Graph& g, const MaskSet& m, const Signature& q, const Embedding& x0, const GdConfig& cfg) {
  cfg.validate();
  check_shapes(g, m, x0, q);
  const double fro = std::sqrt(2.0 * static_cast<double>(g.num_edges()));
  const double init_step = cfg.armijo.init_step > 0.0 ? cfg.armijo.init_step : (fro > 0.0 ? 1.0 / fro : 1.0);

  GdResult r;
  r.x = x0;
  Embedding grad;
  double loss = masked_loss_grad(g, m, r.x, q, grad);
  if (!std::isfinite(loss)) throw NumericalError("initial loss is not finite");
  if (cfg.record_trajectory) r.trajectory.push_back({0, loss, 0.0, grad.norm()});

  Embedding trial;
  Embedding trial_grad;
  int stalled = 0;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const double gn = grad.norm();
    if (cfg.grad_tol >= 0.0) {
      const double xn = r.x.norm();
      if (gn == 0.0 || (xn > 0.0 && gn / xn <= cfg.grad_tol)) {
        r.converged = true;
        break;
      }
    }
    double step = cfg.fixed_step ? *cfg.fixed_step : init_step;
    double trial_loss = 0.0;
    if (cfg.fixed_step) {
      trial = r.x - step * grad;
      trial_loss = masked_loss_grad(g, m, trial, q, trial_grad);
      if (!std::isfinite(trial_loss)) {
        std::ostringstream os;
        os << "gradient descent diverged at iteration " << it << " (fixed step " << step << ")";
        throw NumericalError(os.str());
      }
    } else {
      bool accepted = false;
      for (int b = 0; b <= cfg.armijo.max_backtracks; ++b, step *= cfg.armijo.shrink) {
        trial = r.x - step * grad;
        trial_loss = masked_loss(g, m, trial, q);
        if (std::isfinite(trial_loss) && trial_loss <= loss - cfg.armijo.c * step * gn * gn) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // No admissible step: numerically stationary.
        r.converged = true;
        break;
      }
      trial_loss = masked_loss_grad(g, m, trial, q, trial_grad);
    }
    stalled = (loss - trial_loss <= 1e-13 * std::abs(loss)) ? stalled + 1 : 0;
    r.x.swap(trial);
    grad.swap(trial_grad);
    loss = trial_loss;
    r.iterations = it;
    if (cfg.record_trajectory) r.trajectory.push_back({it, loss, step, grad.norm()});
    if (cfg.stall_iters > 0 && stalled >= cfg.stall_iters && cfg.grad_tol >= 0.0) {
      r.converged = true;
      break;
    }
  }
  r.final_loss = loss;
  return r;
}

GdResult gd_run_fixed_iters(const Graph& g, const MaskSet& m, const Signature& q, const Embedding& x0, int k,
                            const GdConfig& step_rule) {
  if (k < 0) throw std::invalid_argument("iteration count must be non-negative");
  GdConfig cfg = step_rule;
  cfg.max_iters = k;
  cfg.grad_tol = -1.0;
  return gd_run(g, m, q, x0, cfg);
}

void write_trajectory_csv(const GdResult& r, std::ostream& os) {
  os << "iter,loss,step,grad_norm\n";
  const auto old = os.precision(17);
  for (const auto& s : r.trajectory) os << s.iter << ',' << s.loss << ',' << s.step << ',' << s.grad_norm << '\n';
  os.precision(old);
}

}  // namespace lase
