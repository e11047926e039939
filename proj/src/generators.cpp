#include "lase/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace lase {

Graph sbm_sample(const SbmSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto labels = spec.labels();
  const int n = static_cast<int>(labels.size());
  Rng rng(seed);
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    const auto row = spec.pi.row(labels[u]);
    for (int v = u + 1; v < n; ++v) {
      if (rng.bernoulli(row[labels[v]])) edges.push_back({u, v});
    }
  }
  return Graph(n, std::move(edges));
}

Graph rdpg_sample(const Embedding& x, const Signature& q, std::uint64_t seed) {
  if (x.cols() != q.dim()) throw std::invalid_argument("rdpg_sample: signature dimension mismatch");
  const int n = static_cast<int>(x.rows());
  const Embedding xq = q.apply(x);
  constexpr double slack = 1e-12;
  Rng rng(seed);
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      double p = xq.row(u).dot(x.row(v));
      if (p < -slack || p > 1.0 + slack || !std::isfinite(p)) {
        std::ostringstream msg;
        msg << "rdpg_sample: probability " << p << " out of [0,1] at pair (" << u << "," << v << ")";
        throw std::invalid_argument(msg.str());
      }
      p = std::clamp(p, 0.0, 1.0);
      if (rng.bernoulli(p)) edges.push_back({u, v});
    }
  }
  return Graph(n, std::move(edges));
}

namespace {

void check_mask_args(int n, double fraction, const char* what) {
  if (n < 2) throw std::invalid_argument(std::string(what) + ": n must be at least 2");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument(std::string(what) + ": fraction must lie in (0,1]");
  }
}

}  // namespace

MaskSet er_mask(int n, double target_density, std::uint64_t seed) {
  check_mask_args(n, target_density, "er_mask");
  if (target_density < 2.0 / n) {
    throw std::invalid_argument("er_mask: density " + std::to_string(target_density) + " unattainable (below 2/n)");
  }
  const double q = target_density * n / (n - 1.0);
  if (q >= 1.0) return MaskSet::full(n, false);
  Rng rng(seed);
  std::vector<Edge> pairs;
  pairs.reserve(static_cast<std::size_t>(q * n * (n - 1) / 2 * 1.05) + 16);
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (rng.bernoulli(q)) pairs.push_back({u, v});
    }
  }
  return MaskSet::from_observed_pairs(n, std::move(pairs));
}

MaskSet ws_mask(int n, double ring_degree_fraction, double rewire_prob, std::uint64_t seed) {
  check_mask_args(n, ring_degree_fraction, "ws_mask");
  if (!(rewire_prob >= 0.0 && rewire_prob <= 1.0)) throw std::invalid_argument("ws_mask: rewire probability must lie in [0,1]");
  int k = static_cast<int>(std::lround(ring_degree_fraction * n));
  k -= k % 2;
  if (k < 2) {
    throw std::invalid_argument("ws_mask: ring degree round(r*n) = " + std::to_string(k) + " unattainable (need >= 2)");
  }
  if (k >= n - 1) return MaskSet::full(n, false);
  const int half = k / 2;

  // Sorted adjacency rows; n * k entries overall.
  std::vector<std::vector<int>> adj(n);
  for (int u = 0; u < n; ++u) {
    for (int j = 1; j <= half; ++j) {
      const int v = (u + j) % n;
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  auto contains = [&](int u, int v) { return std::binary_search(adj[u].begin(), adj[u].end(), v); };
  auto insert = [&](int u, int v) { adj[u].insert(std::lower_bound(adj[u].begin(), adj[u].end(), v), v); };
  auto erase = [&](int u, int v) { adj[u].erase(std::lower_bound(adj[u].begin(), adj[u].end(), v)); };

  Rng rng(seed);
  for (int j = 1; j <= half; ++j) {
    for (int u = 0; u < n; ++u) {
      const int v = (u + j) % n;
      if (!rng.bernoulli(rewire_prob)) continue;
      if (!contains(u, v)) continue;  // already rewired away from this slot
      if (static_cast<int>(adj[u].size()) >= n - 1) continue;
      int w;
      do {
        w = static_cast<int>(rng.below(n));
      } while (w == u || contains(u, w));
      erase(u, v);
      erase(v, u);
      insert(u, w);
      insert(w, u);
    }
  }
  std::vector<Edge> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * half);
  for (int u = 0; u < n; ++u) {
    for (int v : adj[u]) {
      if (v > u) pairs.push_back({u, v});
    }
  }
  return MaskSet::from_observed_pairs(n, std::move(pairs));
}

namespace {

struct BigBirdLayout {
  int half_window;
  int num_global;
  double random_prob;  // per non-band, non-global unordered pair
};

BigBirdLayout bigbird_layout(int n, double window_fraction, double random_fraction, int num_global) {
  if (n < 2) throw std::invalid_argument("bigbird_mask: n must be at least 2");
  if (!(window_fraction >= 0.0 && window_fraction <= 1.0) || !(random_fraction >= 0.0 && random_fraction <= 1.0)) {
    throw std::invalid_argument("bigbird_mask: fractions must lie in [0,1]");
  }
  if (num_global < 0 || num_global > n) throw std::invalid_argument("bigbird_mask: bad number of global nodes");
  BigBirdLayout lay{};
  lay.half_window = static_cast<int>(std::lround(window_fraction * n)) / 2;
  lay.num_global = num_global;
  // Count unordered pairs left after band and globals.
  const int h = lay.half_window;
  double band = 0.0;
  for (int i = 0; i < n; ++i) band += std::min(h, n - 1 - i);
  const double g = num_global;
  const double global_pairs = g * (g - 1) / 2 + g * (n - g);
  const double remaining = static_cast<double>(n) * (n - 1) / 2 - band - global_pairs;
  lay.random_prob = remaining > 0 ? std::min(1.0, random_fraction * n * n / 2.0 / remaining) : 0.0;
  if (h == 0 && num_global == 0 && random_fraction * n < 2.0) {
    throw std::invalid_argument("bigbird_mask: requested density unattainable (below 2/n)");
  }
  return lay;
}

}  // namespace

MaskSet bigbird_mask(int n, double window_fraction, double random_fraction, int num_global, std::uint64_t seed) {
  const auto lay = bigbird_layout(n, window_fraction, random_fraction, num_global);
  Rng rng(seed);
  std::vector<Edge> pairs;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const bool structural = (v - u <= lay.half_window) || u < lay.num_global;
      if (structural || (lay.random_prob > 0.0 && rng.bernoulli(lay.random_prob))) pairs.push_back({u, v});
    }
  }
  return MaskSet::from_observed_pairs(n, std::move(pairs));
}

double bigbird_expected_density(int n, double window_fraction, double random_fraction, int num_global) {
  const auto lay = bigbird_layout(n, window_fraction, random_fraction, num_global);
  double expected = 0.0;
  for (int u = 0; u < n; ++u) {
    const double structural = std::min(lay.half_window, n - 1 - u);
    const double rest = (n - 1 - u) - structural;
    expected += u < lay.num_global ? (n - 1 - u) : structural + rest * lay.random_prob;
  }
  return 2.0 * expected / (static_cast<double>(n) * n);
}

AttentionKind AttentionSpec::parse_kind(const std::string& name) {
  if (name == "full") return AttentionKind::Full;
  if (name == "er") return AttentionKind::ErdosRenyi;
  if (name == "ws") return AttentionKind::WattsStrogatz;
  if (name == "bb") return AttentionKind::BigBird;
  throw std::invalid_argument("unknown attention mask '" + name + "' (expected full, er, ws or bb)");
}

MaskSet make_attention_mask(int n, const AttentionSpec& spec, std::uint64_t seed) {
  if (spec.kind == AttentionKind::Full || spec.density >= 1.0) return MaskSet::full(n, true);
  switch (spec.kind) {
    case AttentionKind::ErdosRenyi:
      return er_mask(n, spec.density, seed);
    case AttentionKind::WattsStrogatz:
      return ws_mask(n, spec.density, spec.rewire_prob, seed);
    case AttentionKind::BigBird: {
      const double window = 0.5 * spec.density;
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        (bigbird_expected_density(n, window, mid, 1) < spec.density ? lo : hi) = mid;
      }
      return bigbird_mask(n, window, lo, 1, seed);
    }
    case AttentionKind::Full:
      break;
  }
  return MaskSet::full(n, true);
}

Subgraph induced_subgraph(const Graph& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("induced_subgraph: fraction must lie in (0,1]");
  const int n = g.n();
  const int k = static_cast<int>(std::lround(fraction * n));
  if (k < 2) throw std::invalid_argument("induced_subgraph: subgraph would have fewer than 2 nodes");
  std::vector<int> nodes(n);
  std::iota(nodes.begin(), nodes.end(), 0);
  if (k < n) {
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(rng.below(n - i));
      std::swap(nodes[i], nodes[j]);
    }
    nodes.resize(k);
  }
  return induced_subgraph(g, std::move(nodes));
}

Subgraph induced_subgraph(const Graph& g, std::vector<int> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  const int k = static_cast<int>(nodes.size());
  if (k < 2) throw std::invalid_argument("induced_subgraph: subgraph would have fewer than 2 nodes");
  std::vector<int> local(g.n(), -1);
  for (int i = 0; i < k; ++i) {
    if (nodes[i] < 0 || nodes[i] >= g.n()) throw std::invalid_argument("induced_subgraph: node out of range");
    local[nodes[i]] = i;
  }
  std::vector<Edge> edges;
  for (int i = 0; i < k; ++i) {
    for (int v : g.neighbors(nodes[i])) {
      const int j = local[v];
      if (j > i) edges.push_back({i, j});
    }
  }
  return {Graph(k, std::move(edges)), std::move(nodes)};
}

MaskSet random_unknown_mask(int n, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("random_unknown_mask: rho must lie in [0,1)");
  Rng rng(seed);
  std::vector<Edge> unknown;
  std::vector<Edge> known;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      (rng.bernoulli(rho) ? unknown : known).push_back({u, v});
    }
  }
  if (unknown.size() <= known.size()) return MaskSet::from_unknown_pairs(n, std::move(unknown), true);
  return MaskSet::from_observed_pairs(n, std::move(known));
}

std::vector<int> random_permutation(int n, std::uint64_t seed) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
  return p;
}

}  // namespace lase
