#pragma once

#include "lase/e2e.hpp"
#include "lase/spectral.hpp"
#include "lase/train.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace lase::exp {

/// Named block models. `n` = 0 picks the preset's default size.
///
///   sbm2           [[.5,.1],[.1,.5]], N=100
///   sbm3           diag .7 .5 .3, off .1, N=150
///   sbm5           diag .7 .6 .5 .4 .3, off .1, N=300
///   sbm10          diag .7, off .05, N=300
///   symmetric      same matrix as sbm2, N=200
///   disassortative [[.1,.5],[.5,.1]], N=200
///   shift          [[.5,.1],[.1,.3]], 70/30 split, N=100
SbmSpec sbm_preset(const std::string& name, int n = 0);
const std::vector<std::string>& preset_names();

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Numbers are written with 10 significant digits.
  void add(std::vector<std::string> row);
  void write_csv(std::ostream& os) const;
};

std::string fmt(double v);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
  /// Informational checks are reported but do not decide the outcome.
  bool gating = true;
};

struct Report {
  std::string experiment;
  Table table;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  void check(std::string name, bool ok, std::string detail, bool gating = true);
  /// One "PASS|FAIL|INFO name: detail" line per check.
  void write_summary(std::ostream& os) const;
};

struct ExperimentOptions {
  std::uint64_t seed = 1;
  /// Independent seeds, splits or test graphs per stochastic check.
  int seeds = 10;
  /// 0 selects the experiment's default for the three training knobs.
  int train_samples = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  /// Measured timing repeats (one extra warm-up run is discarded).
  int repeats = 10;
  /// Ungated extras such as the SBM-5 row of fig5 and the N sweep of bench.
  bool extras = true;
  /// Edge list for "real-graph".
  std::string graph_path;
  /// Progress lines; null for quiet runs.
  std::ostream* log = nullptr;
};

/// Trains, halving the learning rate after a divergence, at most `attempts` times.
TrainResult train_with_backoff(const std::vector<TrainSample>& samples, const LaseParams& init, TrainConfig cfg,
                               std::ostream* log = nullptr, int attempts = 3);

/// Polynomial graph filter fitted to one input so that its output embeds the graph.
struct FilterFit {
  GraphFilter filter;
  Matrix output;
  double loss = 0.0;
  int rank = 0;
};

/// Minimizes ||M o (A - Y Y^T)||^2 over Y = sum_k (A/N)^k X_in H_k, k = 0..order,
/// with M = 11^T - I. Works in an orthonormal basis of the Krylov columns so the
/// descent is well conditioned, then maps back to filter taps.
FilterFit fit_filter_embedding(const Graph& g, const Matrix& x_in, int order, int d, std::uint64_t seed);

/// The same filter trained the way LASE is: Adam on mini-batches of the mean
/// masked loss over many graphs, each with its own input. Keeps the taps with
/// the lowest full-set loss; `output` is the response on graphs[0].
FilterFit train_filter_embedding(const std::vector<Graph>& graphs, const std::vector<Matrix>& inputs, int order, int d,
                                 const TrainConfig& cfg);

/// Distance between the two community centroids and the pooled RMS distance of
/// rows to their own centroid. Labels must be 0 or 1.
struct Separation {
  double centroid_distance = 0.0;
  double spread = 0.0;
  double ratio() const { return spread > 0 ? centroid_distance / spread : 0.0; }
};
Separation community_separation(const std::vector<Matrix>& embeddings, const std::vector<std::vector<int>>& labels);

Report run_equivalence(const ExperimentOptions& opts);
Report run_gradients(const ExperimentOptions& opts);
Report run_parity(const ExperimentOptions& opts);
Report run_fig5(const ExperimentOptions& opts);
Report run_symmetric_sbm(const ExperimentOptions& opts);
Report run_example1(const ExperimentOptions& opts);
Report run_shift(const ExperimentOptions& opts);
Report run_subgraph(const ExperimentOptions& opts);
Report run_sparse_att(const ExperimentOptions& opts);
Report run_masked_embed(const ExperimentOptions& opts);
Report run_q_estimation(const ExperimentOptions& opts);
Report run_bench(const ExperimentOptions& opts);
Report run_e2e_benefit(const ExperimentOptions& opts);
Report run_real_graph(const ExperimentOptions& opts);
Report run_invariants(const ExperimentOptions& opts);

const std::vector<std::string>& experiment_names();
/// Dispatches by name; throws std::invalid_argument for unknown names.
Report run_experiment(const std::string& name, const ExperimentOptions& opts);

}  // namespace lase::exp
