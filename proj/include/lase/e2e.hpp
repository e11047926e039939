#pragma once

#include "lase/common.hpp"
#include "lase/graph.hpp"
#include "lase/io.hpp"
#include "lase/lase.hpp"
#include "lase/train.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace lase {

enum class NodeHead { Linear, OneHopConv };

/// Joint parameters: a LASE stack (optional) and a lightweight head on
/// Z = [X_in || X_L].
///
/// Node head: logits = Z W0 + P Z W1 + b with P = D^-1 (M_obs o A), W1 unused
/// for the linear head. Link head: z = Z W0, score(u, v) = sigmoid(z_u . z_v).
struct E2eParams {
  bool use_lase = true;
  LaseParams lase;
  NodeHead head = NodeHead::OneHopConv;
  Matrix w0;
  Matrix w1;
  Vector b;

  int feature_dim() const;
  /// Flat view over every trainable entry (LASE coefficients first).
  Vector flatten() const;
  void unflatten(const Vector& v);
};

/// Labelled node task on one graph. Labels of -1 are ignored.
struct NodeTask {
  Graph graph;
  MaskSet obs;
  Matrix features;
  std::vector<int> labels;
  std::vector<io::Split> splits;
  int num_classes = 0;
  Embedding x0;

  void validate() const;
  std::vector<int> nodes(io::Split split) const;
};

struct LabeledPair {
  int u = 0;
  int v = 0;
  int label = 0;
};

/// Link task: supervision pairs per split, all unobserved in obs.
struct LinkTask {
  Graph graph;
  MaskSet obs;
  Matrix features;
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> val;
  std::vector<LabeledPair> test;
  Embedding x0;

  /// Throws if a supervision pair is observed.
  void validate() const;
};

/// Node embedding dimension d of the LASE branch, F for features, C classes
/// or K link dimensions. LASE starts at its GD-equivalent point; head weights start at zero.
E2eParams make_node_params(const NodeTask& task, const LaseParams& lase, bool use_lase, NodeHead head);
E2eParams make_link_params(const LinkTask& task, const LaseParams& lase, bool use_lase, int link_dim, std::uint64_t seed);

/// Forward output of the head.
Matrix node_logits(const E2eParams& p, const NodeTask& task);
/// sigmoid(z_u . z_v) for each pair.
std::vector<double> link_scores(const E2eParams& p, const LinkTask& task, const std::vector<LabeledPair>& pairs);

struct CombinedLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double reconstruction = 0.0;
};

/// mu * CE over training nodes + (1 - mu) * masked reconstruction of X_L.
/// Fills grad (same layout as p) when non-null.
CombinedLoss combined_loss_node(const E2eParams& p, const NodeTask& task, double mu, E2eParams* grad = nullptr);
/// mu * BCE over training pairs + (1 - mu) * masked reconstruction of X_L.
CombinedLoss combined_loss_link(const E2eParams& p, const LinkTask& task, double mu, E2eParams* grad = nullptr);

struct MetricRecord {
  int epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

struct E2eConfig {
  double mu = 0.5;
  int epochs = 200;
  double learning_rate = 1e-2;
  /// Learning rate of the LASE coefficients relative to the head.
  double lase_lr_scale = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
};

struct E2eResult {
  E2eParams params;
  int best_epoch = 0;
  double best_val = 0.0;
  std::vector<MetricRecord> history;
};

/// Full-batch Adam on all parameters; keeps the parameters with the best
/// validation accuracy.
E2eResult e2e_train(const NodeTask& task, const E2eParams& init, const E2eConfig& cfg);
E2eResult e2e_train(const LinkTask& task, const E2eParams& init, const E2eConfig& cfg);

double node_accuracy(const E2eParams& p, const NodeTask& task, io::Split split);
/// Per-class accuracy on a split (NaN for classes absent from it).
std::vector<double> per_class_accuracy(const E2eParams& p, const NodeTask& task, io::Split split);
double link_accuracy(const E2eParams& p, const LinkTask& task, const std::vector<LabeledPair>& pairs);

/// CSV "epoch,split,metric,value".
void write_metrics_csv(const std::vector<MetricRecord>& history, std::ostream& os);

/// Held-out positives are sampled from the edges, one uniform non-edge
/// negative per positive, and every supervision pair is removed from obs.
LinkTask make_link_task(const Graph& g, const Matrix& features, double train_fraction, double val_fraction,
                        double test_fraction, const MaskSet& base_obs, int d, std::uint64_t seed);

}  // namespace lase
