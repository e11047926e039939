#pragma once

#include "lase/common.hpp"
#include "lase/graph.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace lase {

/// out_i += coef * sum_{j in W(i)} (u_i . v_j) z_j, visiting only the observed
/// pairs of W. All matrices are N x d with the same d. Cost O(nnz(W) * d).
void masked_product(const MaskSet& w, const Embedding& u, const Embedding& v, const Embedding& z, double coef,
                    Embedding& out);

/// ||M o (A - X Q X^T)||_F^2 summed over observed ordered pairs.
double masked_loss(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q);

/// 4 (M o (X Q X^T - A)) X Q.
Embedding masked_grad(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q);

/// Loss and gradient from one pass over the mask.
double masked_loss_grad(const Graph& g, const MaskSet& m, const Embedding& x, const Signature& q, Embedding& grad);

struct ArmijoRule {
  double c = 1e-4;
  double shrink = 0.5;
  /// Trial step at every iteration; <= 0 means 1 / ||A||_F.
  double init_step = 0.0;
  /// Failing this many halvings counts as numerically stationary.
  int max_backtracks = 30;
};

struct GdConfig {
  int max_iters = 2000;
  /// Stop when ||grad||_F / ||X||_F falls below this; negative disables the test.
  double grad_tol = 1e-6;
  ArmijoRule armijo;
  /// When set, every step uses this length and no line search is done.
  std::optional<double> fixed_step;
  bool record_trajectory = false;
  /// Stop after this many consecutive steps whose relative loss decrease is
  /// below rounding level (1e-13); 0 disables.
  int stall_iters = 10;

  void validate() const;
};

struct GdStep {
  int iter = 0;
  double loss = 0.0;
  double step = 0.0;
  double grad_norm = 0.0;
};

struct GdResult {
  Embedding x;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Entry 0 is the starting point (step 0); entry k follows iteration k.
  std::vector<GdStep> trajectory;
};

GdResult gd_run(const Graph& g, const MaskSet& m, const Signature& q, const Embedding& x0, const GdConfig& cfg = {});

/// Exactly k iterations, no tolerance-based stop.
GdResult gd_run_fixed_iters(const Graph& g, const MaskSet& m, const Signature& q, const Embedding& x0, int k,
                            const GdConfig& step_rule = {});

/// CSV "iter,loss,step,grad_norm".
void write_trajectory_csv(const GdResult& r, std::ostream& os);

}  // namespace lase
