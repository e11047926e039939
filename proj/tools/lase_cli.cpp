#include "lase/e2e.hpp"
#include "lase/experiments.hpp"
#include "lase/gd.hpp"
#include "lase/generators.hpp"
#include "lase/io.hpp"
#include "lase/lase.hpp"
#include "lase/spectral.hpp"
#include "lase/train.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

using namespace lase;

namespace {

constexpr int kExitNumerical = 2;
constexpr int kExitPredicate = 3;

struct Common {
  std::uint64_t seed = 1;
  bool deterministic = false;
  bool verbose = false;
};

struct MaskFlags {
  std::string att = "full";
  double p_att = 1.0;
  double rewire = 0.1;
};

void add_att_flags(CLI::App* app, MaskFlags& m) {
  app->add_option("--att", m.att, "Attention mask kind")->check(CLI::IsMember({"full", "er", "ws", "bb"}));
  app->add_option("--p-att", m.p_att, "Attention density")->check(CLI::Range(0.0, 1.0));
  app->add_option("--rewire", m.rewire, "Watts-Strogatz rewiring probability")->check(CLI::Range(0.0, 1.0));
}

AttentionSpec attention(const MaskFlags& m) {
  AttentionSpec a;
  a.kind = AttentionSpec::parse_kind(m.att);
  a.density = m.p_att;
  a.rewire_prob = m.rewire;
  return a;
}

Signature resolve_q(const std::string& text, const Graph& g, int d, std::uint64_t seed) {
  if (text == "auto") return estimate_q(g, d, 5, 0.3, seed);
  const Signature q = Signature::parse(text);
  if (q.dim() != d) throw std::invalid_argument("--q has " + std::to_string(q.dim()) + " entries but d = " + std::to_string(d));
  return q;
}

Signature resolve_q(const std::string& text, const std::vector<TrainSample>& set, int d, std::uint64_t seed) {
  if (text != "auto") return resolve_q(text, Graph(), d, seed);
  const TrainSample* largest = &set.front();
  for (const auto& s : set)
    if (s.input.n() > largest->input.n()) largest = &s;
  return estimate_q(largest->input.graph, d, 5, 0.3, seed);
}

void write_report(const exp::Report& r, const std::string& csv) {
  if (!csv.empty()) {
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv);
    r.table.write_csv(os);
  } else {
    r.table.write_csv(std::cout);
  }
  r.write_summary(std::cerr);
  std::cerr << r.experiment << ": " << (r.passed() ? "PASS" : "FAIL") << " in " << exp::fmt(r.seconds) << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral node embeddings by ASE, gradient descent and learned unrolled GD (LASE)"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "Base random seed");
  app.add_flag("--deterministic", common.deterministic, "Ordered reductions (single-threaded runs always are)");
  app.add_flag("-v,--verbose", common.verbose, "Progress output on stderr");

  // generate
  auto* gen = app.add_subcommand("generate", "Sample an SBM graph");
  std::string gen_preset = "sbm2", gen_out, gen_labels, gen_mask;
  int gen_n = 0;
  double gen_unknown = 0.0;
  gen->add_option("--preset", gen_preset, "Block model preset")->check(CLI::IsMember(exp::preset_names()));
  gen->add_option("--n", gen_n, "Node count (0 keeps the preset size)");
  gen->add_option("--out", gen_out, "Edge list output")->required();
  gen->add_option("--labels", gen_labels, "Block labels output");
  gen->add_option("--mask", gen_mask, "Unknown-pair mask output");
  gen->add_option("--unknown", gen_unknown, "Probability that a pair is unknown")->check(CLI::Range(0.0, 1.0));

  // embed
  auto* emb = app.add_subcommand("embed", "Embed a graph and report its masked loss");
  std::string emb_method = "ase", emb_graph, emb_mask, emb_params, emb_out, emb_q = "+", emb_x0;
  int emb_d = 2, emb_k = 5;
  MaskFlags emb_att;
  emb->add_option("--method", emb_method, "ase | gd | gd-k | lase")->check(CLI::IsMember({"ase", "gd", "gd-k", "lase"}));
  emb->add_option("--graph", emb_graph, "Edge list")->required()->check(CLI::ExistingFile);
  emb->add_option("--mask", emb_mask, "Unknown-pair mask")->check(CLI::ExistingFile);
  emb->add_option("--d", emb_d, "Embedding dimension")->check(CLI::PositiveNumber);
  emb->add_option("--k", emb_k, "Iterations for gd-k")->check(CLI::NonNegativeNumber);
  emb->add_option("--params", emb_params, "LASE parameter file (lase)")->check(CLI::ExistingFile);
  emb->add_option("--q", emb_q, "Signature: auto, or one sign per dimension (a single '+' means identity)");
  emb->add_option("--x0", emb_x0, "Initial embedding file (default: seeded uniform noise)")->check(CLI::ExistingFile);
  emb->add_option("--out", emb_out, "Embedding output");
  add_att_flags(emb, emb_att);

  // train
  auto* tr = app.add_subcommand("train", "Train LASE parameters");
  std::string tr_preset = "sbm2", tr_graph, tr_out, tr_loss_csv, tr_q = "+";
  int tr_n = 0, tr_samples = 400, tr_layers = 5, tr_d = 2, tr_epochs = 30, tr_batch = 32;
  double tr_lr = 2e-2, tr_fraction = 1.0, tr_unknown = 0.0;
  bool tr_shared = false, tr_sgd = false;
  MaskFlags tr_att;
  tr->add_option("--preset", tr_preset, "Block model preset for generated samples")->check(CLI::IsMember(exp::preset_names()));
  tr->add_option("--n", tr_n, "Nodes per generated sample (0 keeps the preset size)");
  tr->add_option("--graph", tr_graph, "Train from subgraphs of this edge list instead")->check(CLI::ExistingFile);
  tr->add_option("--fraction", tr_fraction, "Subgraph fraction for --graph")->check(CLI::Range(0.0, 1.0));
  tr->add_option("--samples", tr_samples, "Training samples")->check(CLI::PositiveNumber);
  tr->add_option("--layers", tr_layers, "LASE layers")->check(CLI::PositiveNumber);
  tr->add_option("--d", tr_d, "Embedding dimension")->check(CLI::PositiveNumber);
  tr->add_option("--epochs", tr_epochs, "Epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", tr_batch, "Mini-batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", tr_lr, "Learning rate")->check(CLI::NonNegativeNumber);
  tr->add_option("--unknown", tr_unknown, "Unknown-pair rate of the observation masks")->check(CLI::Range(0.0, 1.0));
  tr->add_option("--q", tr_q, "Signature: auto, or one sign per dimension");
  tr->add_flag("--shared", tr_shared, "Tie weights across layers");
  tr->add_flag("--sgd", tr_sgd, "SGD with momentum instead of Adam");
  tr->add_option("--out", tr_out, "Parameter file output")->required();
  tr->add_option("--loss-csv", tr_loss_csv, "Loss history CSV");
  add_att_flags(tr, tr_att);

  // e2e
  auto* e2e = app.add_subcommand("e2e", "Joint LASE + classifier training on a labelled graph");
  std::string e2e_graph, e2e_labels, e2e_splits, e2e_features, e2e_mask, e2e_metrics, e2e_head = "conv";
  int e2e_layers = 5, e2e_d = 4, e2e_epochs = 200;
  double e2e_mu = 0.5, e2e_lr = 1e-2;
  bool e2e_no_pe = false;
  e2e->add_option("--graph", e2e_graph, "Edge list")->required()->check(CLI::ExistingFile);
  e2e->add_option("--labels", e2e_labels, "Labels file")->required()->check(CLI::ExistingFile);
  e2e->add_option("--splits", e2e_splits, "Splits file")->required()->check(CLI::ExistingFile);
  e2e->add_option("--features", e2e_features, "Node features (embedding format)")->check(CLI::ExistingFile);
  e2e->add_option("--mask", e2e_mask, "Unknown-pair mask")->check(CLI::ExistingFile);
  e2e->add_option("--layers", e2e_layers, "LASE layers")->check(CLI::PositiveNumber);
  e2e->add_option("--d", e2e_d, "Embedding dimension")->check(CLI::PositiveNumber);
  e2e->add_option("--mu", e2e_mu, "Weight of the classification term")->check(CLI::Range(0.0, 1.0));
  e2e->add_option("--epochs", e2e_epochs, "Epochs")->check(CLI::NonNegativeNumber);
  e2e->add_option("--lr", e2e_lr, "Learning rate")->check(CLI::NonNegativeNumber);
  e2e->add_option("--head", e2e_head, "linear | conv")->check(CLI::IsMember({"linear", "conv"}));
  e2e->add_flag("--no-pe", e2e_no_pe, "Train the head on features only");
  e2e->add_option("--metrics-csv", e2e_metrics, "Metrics CSV output");

  // bench / repro / check
  exp::ExperimentOptions xo;
  std::string csv, experiment;
  bool quick = false;
  auto* bench = app.add_subcommand("bench", "Inference timing of ASE, GD, GD-5 and LASE-5");
  bench->add_option("--repeats", xo.repeats, "Measured repeats")->check(CLI::PositiveNumber);
  bench->add_option("--csv", csv, "CSV output");
  bench->add_flag("--quick", quick, "Only N = 2000");

  auto* repro = app.add_subcommand("repro", "Run a reproduction experiment and check its predicate");
  repro->add_option("experiment", experiment, "Experiment name")->required()->check(CLI::IsMember(exp::experiment_names()));
  repro->add_option("--seeds", xo.seeds, "Seeds / test graphs / splits")->check(CLI::PositiveNumber);
  repro->add_option("--samples", xo.train_samples, "Training samples (0 = default)");
  repro->add_option("--epochs", xo.epochs, "Epochs (0 = default)");
  repro->add_option("--lr", xo.learning_rate, "Learning rate (0 = default)");
  repro->add_option("--repeats", xo.repeats, "Timing repeats")->check(CLI::PositiveNumber);
  repro->add_option("--graph", xo.graph_path, "Edge list for real-graph")->check(CLI::ExistingFile);
  repro->add_option("--csv", csv, "CSV output");
  repro->add_flag("--quick", quick, "Skip ungated extras");

  auto* check = app.add_subcommand("check", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  set_log_level(common.verbose ? LogLevel::Info : LogLevel::Warning);

  try {
    if (*gen) {
      const SbmSpec spec = exp::sbm_preset(gen_preset, gen_n);
      const Graph g = sbm_sample(spec, common.seed);
      io::save_edge_list(g, gen_out);
      if (!gen_labels.empty()) io::save_labels(spec.labels(), gen_labels);
      if (!gen_mask.empty()) io::save_mask(random_unknown_mask(g.n(), gen_unknown, common.seed ^ 0xD1B54A32D192ED03ULL), gen_mask);
      std::cout << "n,edges,seed\n" << g.n() << ',' << g.num_edges() << ',' << common.seed << '\n';
      return 0;
    }

    if (*emb) {
      const Graph g = io::load_edge_list(emb_graph);
      const int n = g.n();
      const MaskSet obs = emb_mask.empty() ? MaskSet::full(n) : io::load_mask(emb_mask, n);
      std::optional<LaseParams> params;
      if (emb_method == "lase") {
        if (emb_params.empty()) throw std::invalid_argument("--method lase needs --params");
        params = load_params(emb_params);
        emb_d = params->d;
      }
      Signature q = params ? params->q : (emb_q == "+" ? Signature::identity(emb_d) : resolve_q(emb_q, g, emb_d, common.seed));
      const Embedding x0 = emb_x0.empty() ? uniform_embedding(n, emb_d, common.seed ^ 0x9E3779B97F4A7C15ULL)
                                          : io::load_embedding(emb_x0);
      if (x0.rows() != n || x0.cols() != emb_d) throw std::invalid_argument("--x0 must be N x d");
      const auto t0 = std::chrono::steady_clock::now();
      Embedding x;
      if (emb_method == "ase") {
        std::vector<Edge> kept;
        for (const Edge& e : g.edges())
          if (obs.observed(e.u, e.v)) kept.push_back(e);
        AseResult a = ase_embed(Graph(n, std::move(kept)), emb_d);
        x = std::move(a.x);
        q = a.q;
      } else if (emb_method == "gd") {
        x = gd_run(g, obs, q, x0).x;
      } else if (emb_method == "gd-k") {
        x = gd_run_fixed_iters(g, obs, q, x0, emb_k).x;
      } else {
        LaseInput in = LaseInput::with_defaults(g, x0);
        in.obs = obs;
        in.att = make_attention_mask(n, attention(emb_att), common.seed ^ 0x8CB92BA72F3D8DD7ULL);
        x = lase_forward(in, *params);
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const double loss = masked_loss(g, obs, x, q);
      if (!emb_out.empty()) io::save_embedding(x, emb_out);
      std::cout.precision(10);
      std::cout << "method,n,d,loss,wall_ms,seed\n"
                << (emb_method == "gd-k" ? "gd-" + std::to_string(emb_k) : emb_method) << ',' << n << ',' << emb_d << ','
                << loss << ',' << ms << ',' << common.seed << '\n';
      return 0;
    }

    if (*tr) {
      SampleMaskSpec masks;
      masks.unknown_rate = tr_unknown;
      masks.attention = attention(tr_att);
      const auto set = tr_graph.empty()
                           ? make_training_set({exp::sbm_preset(tr_preset, tr_n)}, tr_samples, tr_d, common.seed, masks)
                           : make_training_set(io::load_edge_list(tr_graph), tr_samples, tr_fraction, tr_d, common.seed, masks);
      const Signature q = tr_q == "+" ? Signature::identity(tr_d) : resolve_q(tr_q, set, tr_d, common.seed);
      const LaseParams init = gd_equivalent_init(set, tr_layers, tr_d, tr_shared, true, q);
      TrainConfig cfg;
      cfg.epochs = tr_epochs;
      cfg.batch_size = tr_batch;
      cfg.learning_rate = tr_lr;
      cfg.optimizer = tr_sgd ? Optimizer::SgdMomentum : Optimizer::Adam;
      cfg.seed = common.seed;
      cfg.log_every = common.verbose ? 1 : 0;
      const TrainResult r = train(set, init, cfg);
      save_checkpoint(r, common.seed, tr_out);
      if (!tr_loss_csv.empty()) {
        std::ofstream os(tr_loss_csv);
        write_loss_csv(r, os);
      }
      std::cout.precision(10);
      std::cout << "samples,initial_risk,best_risk,best_epoch\n"
                << set.size() << ',' << r.initial_risk << ',' << r.best_risk << ',' << r.best_epoch << '\n';
      return 0;
    }

    if (*e2e) {
      NodeTask t;
      t.graph = io::load_edge_list(e2e_graph);
      const int n = t.graph.n();
      t.obs = e2e_mask.empty() ? MaskSet::full(n) : io::load_mask(e2e_mask, n);
      t.labels = io::load_labels(e2e_labels, n);
      t.splits = io::load_splits(e2e_splits, n);
      t.num_classes = 0;
      for (int y : t.labels) t.num_classes = std::max(t.num_classes, y + 1);
      t.features = e2e_features.empty() ? Matrix::Zero(n, 0) : Matrix(io::load_embedding(e2e_features));
      t.x0 = uniform_embedding(n, e2e_d, common.seed ^ 0x9E3779B97F4A7C15ULL);
      const double p_obs = static_cast<double>(t.obs.nnz()) / (static_cast<double>(n) * n);
      const LaseParams lase =
          gd_equivalent_params(e2e_layers, e2e_d, 0.2 / n, n, p_obs, false, true, Signature::identity(e2e_d));
      E2eConfig cfg;
      cfg.mu = e2e_mu;
      cfg.epochs = e2e_epochs;
      cfg.learning_rate = e2e_lr;
      const E2eResult r = e2e_train(
          t, make_node_params(t, lase, !e2e_no_pe, e2e_head == "conv" ? NodeHead::OneHopConv : NodeHead::Linear), cfg);
      if (!e2e_metrics.empty()) {
        std::ofstream os(e2e_metrics);
        write_metrics_csv(r.history, os);
      }
      std::cout << "best_epoch,val_accuracy,test_accuracy\n"
                << r.best_epoch << ',' << r.best_val << ',' << node_accuracy(r.params, t, io::Split::Test) << '\n';
      return 0;
    }

    xo.seed = common.seed;
    xo.extras = !quick;
    if (common.verbose) xo.log = &std::cerr;
    exp::Report report;
    if (*bench) report = exp::run_experiment("bench", xo);
    if (*repro) report = exp::run_experiment(experiment, xo);
    if (*check) report = exp::run_experiment("invariants", xo);
    write_report(report, csv);
    return report.passed() ? 0 : kExitPredicate;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
