#pragma once

#include "lase/common.hpp"
#include "lase/graph.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lase::io {

// Text formats. Lines starting with '#' and blank lines are ignored.
//
//   edge list   "N M", then M lines "u v" (0-based, u < v)
//   mask        "N K", then K lines "u v" of unobserved pairs (u == v marks a
//               diagonal entry explicitly)
//   embedding   "N d", then N rows of d values, 17 significant digits
//   labels      "node class" per line
//   splits      "node train|val|test" per line

Graph load_edge_list(const std::filesystem::path& path);
void save_edge_list(const Graph& g, const std::filesystem::path& path);

/// n < 0 takes the node count from the file header; otherwise the header must match.
MaskSet load_mask(const std::filesystem::path& path, int n = -1, bool diagonal_unobserved = true);
void save_mask(const MaskSet& m, const std::filesystem::path& path);

Embedding load_embedding(const std::filesystem::path& path);
void save_embedding(const Embedding& x, const std::filesystem::path& path);

/// Labels per node; nodes absent from the file get -1.
std::vector<int> load_labels(const std::filesystem::path& path, int n);
void save_labels(const std::vector<int>& labels, const std::filesystem::path& path);

enum class Split { None, Train, Val, Test };
std::vector<Split> load_splits(const std::filesystem::path& path, int n);
void save_splits(const std::vector<Split>& splits, const std::filesystem::path& path);

}  // namespace lase::io
