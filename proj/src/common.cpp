#include "lase/common.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>

namespace lase {

Signature::Signature(std::vector<int> signs) : signs_(std::move(signs)) {
  for (int s : signs_) {
    if (s != 1 && s != -1) {
      throw std::invalid_argument("signature entries must be +1 or -1");
    }
  }
}

Signature Signature::identity(int d) { return Signature(std::vector<int>(d, 1)); }

bool Signature::is_identity() const {
  for (int s : signs_) {
    if (s != 1) return false;
  }
  return true;
}

int Signature::negatives() const {
  int c = 0;
  for (int s : signs_) c += (s < 0);
  return c;
}

Vector Signature::as_vector() const {
  Vector v(dim());
  for (int k = 0; k < dim(); ++k) v[k] = signs_[k];
  return v;
}

Matrix Signature::as_matrix() const { return as_vector().asDiagonal(); }

Embedding Signature::apply(const Embedding& x) const {
  if (x.cols() != dim()) throw std::invalid_argument("signature/embedding dimension mismatch");
  Embedding out = x;
  for (int k = 0; k < dim(); ++k) {
    if (signs_[k] < 0) out.col(k) = -out.col(k);
  }
  return out;
}

Matrix Signature::apply_right(const Matrix& m) const {
  if (m.cols() != dim()) throw std::invalid_argument("signature/matrix dimension mismatch");
  Matrix out = m;
  for (int k = 0; k < dim(); ++k) {
    if (signs_[k] < 0) out.col(k) = -out.col(k);
  }
  return out;
}

Signature Signature::parse(const std::string& text) {
  std::vector<int> signs;
  if (text.find_first_of("0123456789") == std::string::npos) {
    for (char c : text) {
      if (c == '+') signs.push_back(1);
      else if (c == '-') signs.push_back(-1);
      else if (c != ' ' && c != ',') throw std::invalid_argument("bad signature string: " + text);
    }
  } else {
    std::string s = text;
    for (char& c : s) {
      if (c == ',') c = ' ';
    }
    std::istringstream in(s);
    int v;
    while (in >> v) signs.push_back(v);
    if (!in.eof()) throw std::invalid_argument("bad signature string: " + text);
  }
  if (signs.empty()) throw std::invalid_argument("empty signature");
  return Signature(std::move(signs));
}

std::string Signature::to_string() const {
  std::string s;
  for (int v : signs_) s += (v > 0 ? '+' : '-');
  return s;
}

std::int64_t Rng::below(std::int64_t n) {
  std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
  return dist(engine_);
}

Embedding uniform_embedding(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Embedding x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) x(i, k) = rng.uniform();
  }
  return x;
}

bool all_finite(const Embedding& x) { return x.allFinite(); }

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::Warning)};
std::atomic<std::uint64_t> g_warnings{0};
std::mutex g_log_mutex;

void emit(LogLevel level, const char* tag, const std::string& msg) {
  if (static_cast<int>(level) > g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[" << tag << "] " << msg << '\n';
}
}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_warning(const std::string& msg) {
  ++g_warnings;
  emit(LogLevel::Warning, "warn", msg);
}
void log_info(const std::string& msg) { emit(LogLevel::Info, "info", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::Debug, "debug", msg); }
std::uint64_t warning_count() { return g_warnings.load(); }

}  // namespace lase
