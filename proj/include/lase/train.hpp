#pragma once

#include "lase/common.hpp"
#include "lase/generators.hpp"
#include "lase/graph.hpp"
#include "lase/lase.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace lase {

struct TrainSample {
  LaseInput input;
  double weight = 1.0;
};

enum class Optimizer { SgdMomentum, Adam };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::Adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Rescales the batch gradient to this global norm when exceeded.
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;
  /// Abort once a risk exceeds this multiple of the initial risk.
  double divergence_factor = 1e3;
  /// Instead of aborting, resume from the best parameters with half the
  /// learning rate and fresh optimizer state, at most this many times.
  int max_rollbacks = 0;
  /// Print a progress line every this many epochs (0: never).
  int log_every = 0;

  void validate() const;
};

struct LossRecord {
  int epoch = 0;
  int batch = 0;
  double risk = 0.0;
};

struct TrainResult {
  LaseParams params;
  double initial_risk = 0.0;
  double best_risk = 0.0;
  /// 0 when the starting parameters were never improved upon.
  int best_epoch = 0;
  int rollbacks = 0;
  /// Per-batch risks; batch -1 rows hold the full-set risk after each epoch.
  std::vector<LossRecord> history;
};

/// Per-sample forward contexts, reusable across epochs.
std::vector<LaseContext> build_contexts(const std::vector<TrainSample>& samples, bool normalize);

/// Weighted mean masked loss of the forward outputs: (1/T) sum w_i f_i.
double risk(const std::vector<TrainSample>& samples, const LaseParams& p);
double risk(const std::vector<TrainSample>& samples, const LaseParams& p, const std::vector<LaseContext>& ctx);

/// Exact gradient of risk over the given sample indices (all when empty).
/// Optionally returns the risk of that subset.
LaseGrads param_grads(const std::vector<TrainSample>& samples, const LaseParams& p,
                      const std::vector<LaseContext>& ctx, const std::vector<int>& subset = {},
                      double* subset_risk = nullptr);
LaseGrads param_grads(const std::vector<TrainSample>& samples, const LaseParams& p);

/// Mini-batch training from `init`; returns the best parameters seen under the
/// full-set risk evaluated after every epoch.
TrainResult train(const std::vector<TrainSample>& samples, const LaseParams& init, const TrainConfig& cfg);

/// H1 = H2 = 4 alpha0 (N p_obs when normalised) I, the GD-equivalent start.
LaseParams gd_equivalent_params(int layers, int d, double alpha0, double mean_n, double mean_p_obs, bool shared,
                                bool normalize, Signature q);

/// Picks alpha0 = scale / mean N from `scales` by the risk on a few samples,
/// among scales whose risk at most doubles when the step grows by 25%.
LaseParams gd_equivalent_init(const std::vector<TrainSample>& samples, int layers, int d, bool shared,
                              bool normalize, Signature q, const std::vector<double>& scales = {0.05, 0.1, 0.2, 0.3, 0.5});

/// Masks attached to generated samples.
struct SampleMaskSpec {
  /// Each unordered pair unknown with this probability.
  double unknown_rate = 0.0;
  AttentionSpec attention;
};

/// per_spec samples for each SBM spec: fresh graph and fresh uniform [0,1]
/// noise. Sample i uses seed base + i for its graph and mixed variants of
/// that seed for noise and masks.
std::vector<TrainSample> make_training_set(const std::vector<SbmSpec>& specs, int per_spec, int d,
                                           std::uint64_t seed, const SampleMaskSpec& masks = {});

/// T samples drawn from one fixed graph: a fresh induced subgraph of the given
/// fraction (the whole graph when fraction is 1) plus fresh noise.
std::vector<TrainSample> make_training_set(const Graph& g, int count, double fraction, int d, std::uint64_t seed,
                                           const SampleMaskSpec& masks = {});

/// Seed used for the noise of sample i of a set generated from `base`.
std::uint64_t noise_seed(std::uint64_t base, int index);

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  int worst_layer = -1;
  int worst_matrix = -1;  // 1 for H1, 2 for H2
  int worst_row = -1;
  int worst_col = -1;
  bool passed = false;
};

/// Central differences of risk against param_grads. The relative error of an
/// entry divides by max(|analytic|, |numeric|, 1e-3 * largest gradient entry).
GradCheckReport finite_diff_check(const std::vector<TrainSample>& samples, const LaseParams& p, double h, double tol);

/// CSV "epoch,batch,risk".
void write_loss_csv(const TrainResult& r, std::ostream& os);

/// Parameter file plus a sidecar "<path>.meta" holding "epoch best_risk seed".
void save_checkpoint(const TrainResult& r, std::uint64_t seed, const std::filesystem::path& path);

}  // namespace lase
