#include "lase/io.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace lase::io {

namespace {

// Yields data lines (non-blank, not starting with '#') with their 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw FormatError("cannot open " + path.string());
  }

  bool next(std::istringstream& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      out.clear();
      out.str(line);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_.string() + ":" + std::to_string(lineno_) + ": " + what);
  }

  int lineno() const { return lineno_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  int lineno_ = 0;
};

bool at_end(std::istringstream& in) {
  in >> std::ws;
  return in.eof();
}

std::pair<long long, long long> read_header(LineReader& r) {
  std::istringstream line;
  if (!r.next(line)) r.fail("missing header line");
  long long a, b;
  if (!(line >> a >> b) || !at_end(line)) r.fail("malformed header, expected two integers");
  if (a < 0 || b < 0) r.fail("negative count in header");
  return {a, b};
}

std::vector<Edge> read_pairs(LineReader& r, long long n, long long declared, bool allow_diagonal, const char* what) {
  std::vector<Edge> pairs;
  std::istringstream line;
  while (r.next(line)) {
    long long u, v;
    if (!(line >> u >> v) || !at_end(line)) r.fail("malformed line, expected 'u v'");
    if (u < 0 || v < 0 || u >= n || v >= n) r.fail("index out of range [0," + std::to_string(n) + ")");
    if (u == v && !allow_diagonal) r.fail("self-loop");
    pairs.push_back({static_cast<int>(u), static_cast<int>(v)});
  }
  if (static_cast<long long>(pairs.size()) != declared) {
    throw FormatError(std::string(what) + ": declared " + std::to_string(declared) + " entries but " +
                      std::to_string(pairs.size()) + " present");
  }
  return pairs;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

Graph load_edge_list(const std::filesystem::path& path) {
  LineReader r(path);
  const auto [n, m] = read_header(r);
  auto edges = read_pairs(r, n, m, false, path.string().c_str());
  return Graph(static_cast<int>(n), std::move(edges));
}

void save_edge_list(const Graph& g, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << g.n() << ' ' << g.num_edges() << '\n';
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << '\n';
}

MaskSet load_mask(const std::filesystem::path& path, int n, bool diagonal_unobserved) {
  LineReader r(path);
  const auto [file_n, k] = read_header(r);
  if (n >= 0 && file_n != n) {
    throw FormatError(path.string() + ": mask is for " + std::to_string(file_n) + " nodes, graph has " + std::to_string(n));
  }
  auto pairs = read_pairs(r, file_n, k, true, path.string().c_str());
  return MaskSet::from_unknown_pairs(static_cast<int>(file_n), std::move(pairs), diagonal_unobserved);
}

void save_mask(const MaskSet& m, const std::filesystem::path& path) {
  auto pairs = m.unknown_pairs();
  if (m.diagonal_unobserved()) {
    std::erase_if(pairs, [](const Edge& e) { return e.u == e.v; });
  }
  auto out = open_out(path);
  out << m.n() << ' ' << pairs.size() << '\n';
  for (const auto& e : pairs) out << e.u << ' ' << e.v << '\n';
}

Embedding load_embedding(const std::filesystem::path& path) {
  LineReader r(path);
  const auto [n, d] = read_header(r);
  Embedding x(n, d);
  std::istringstream line;
  for (long long i = 0; i < n; ++i) {
    if (!r.next(line)) r.fail("expected " + std::to_string(n) + " rows");
    for (long long k = 0; k < d; ++k) {
      if (!(line >> x(i, k))) r.fail("expected " + std::to_string(d) + " values");
    }
    if (!at_end(line)) r.fail("trailing values in row");
  }
  if (r.next(line)) r.fail("more rows than declared");
  return x;
}

void save_embedding(const Embedding& x, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << x.rows() << ' ' << x.cols() << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) out << (k ? " " : "") << x(i, k);
    out << '\n';
  }
}

std::vector<int> load_labels(const std::filesystem::path& path, int n) {
  LineReader r(path);
  std::vector<int> labels(n, -1);
  std::istringstream line;
  while (r.next(line)) {
    long long node, cls;
    if (!(line >> node >> cls) || !at_end(line)) r.fail("malformed line, expected 'node class'");
    if (node < 0 || node >= n) r.fail("node out of range");
    if (cls < 0) r.fail("negative class id");
    labels[node] = static_cast<int>(cls);
  }
  return labels;
}

void save_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) out << i << ' ' << labels[i] << '\n';
  }
}

std::vector<Split> load_splits(const std::filesystem::path& path, int n) {
  LineReader r(path);
  std::vector<Split> splits(n, Split::None);
  std::istringstream line;
  while (r.next(line)) {
    long long node;
    std::string name;
    if (!(line >> node >> name) || !at_end(line)) r.fail("malformed line, expected 'node split'");
    if (node < 0 || node >= n) r.fail("node out of range");
    if (name == "train") splits[node] = Split::Train;
    else if (name == "val") splits[node] = Split::Val;
    else if (name == "test") splits[node] = Split::Test;
    else r.fail("unknown split '" + name + "'");
  }
  return splits;
}

void save_splits(const std::vector<Split>& splits, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < splits.size(); ++i) {
    switch (splits[i]) {
      case Split::Train: out << i << " train\n"; break;
      case Split::Val: out << i << " val\n"; break;
      case Split::Test: out << i << " test\n"; break;
      case Split::None: break;
    }
  }
}

}  // namespace lase::io
