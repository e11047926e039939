#pragma once

#include "lase/common.hpp"
#include "lase/graph.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lase {

/// Independent Bernoulli(pi[c(u), c(v)]) edges for u < v.
Graph sbm_sample(const SbmSpec& spec, std::uint64_t seed);

/// Independent Bernoulli((X Q X^T)_uv) edges. Throws if a probability falls
/// outside [0, 1], naming the offending pair.
Graph rdpg_sample(const Embedding& x, const Signature& q, std::uint64_t seed);

/// Erdos-Renyi attention mask with expected density `target_density`
/// (ordered pairs over n^2). Density 1 yields the full off-diagonal mask.
MaskSet er_mask(int n, double target_density, std::uint64_t seed);

/// Watts-Strogatz attention mask: ring lattice of degree round(r * n)
/// (rounded down to even), each lattice edge rewired with probability p.
MaskSet ws_mask(int n, double ring_degree_fraction, double rewire_prob, std::uint64_t seed);

/// Big-Bird attention mask: a sliding window band of total width
/// round(window_fraction * n), uniform random pairs adding roughly
/// random_fraction density, and `num_global` nodes attending to everything.
MaskSet bigbird_mask(int n, double window_fraction, double random_fraction, int num_global, std::uint64_t seed);

/// Analytic density of bigbird_mask for the given parameters (before sampling).
double bigbird_expected_density(int n, double window_fraction, double random_fraction, int num_global);

enum class AttentionKind { Full, ErdosRenyi, WattsStrogatz, BigBird };

/// Attention mask family with a target density. Watts-Strogatz uses a ring
/// degree fraction equal to the density; Big-Bird splits it between a band of
/// width density / 2, one global node and random pairs for the remainder.
struct AttentionSpec {
  AttentionKind kind = AttentionKind::Full;
  double density = 1.0;
  double rewire_prob = 0.1;

  static AttentionKind parse_kind(const std::string& name);
};

MaskSet make_attention_mask(int n, const AttentionSpec& spec, std::uint64_t seed);

struct Subgraph {
  Graph graph;
  /// parent_index[i] is the parent-graph id of subgraph node i (ascending).
  std::vector<int> parent_index;
};

/// Induced subgraph on round(fraction * n) uniformly chosen nodes.
Subgraph induced_subgraph(const Graph& g, double fraction, std::uint64_t seed);

/// Induced subgraph on an explicit node list.
Subgraph induced_subgraph(const Graph& g, std::vector<int> nodes);

/// Marks each unordered off-diagonal pair unknown with probability rho.
MaskSet random_unknown_mask(int n, double rho, std::uint64_t seed);

/// Uniformly random permutation of [0, n).
std::vector<int> random_permutation(int n, std::uint64_t seed);

}  // namespace lase
