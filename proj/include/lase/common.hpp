#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lase {

/// N x d node-state matrix. Row-major so that one node's vector is contiguous.
using Embedding = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a computation produces non-finite values, diverges, or an
/// iterative method exhausts its budget.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on malformed input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Diagonal +-1 signature matrix of a generalized RDPG.
class Signature {
 public:
  Signature() = default;
  explicit Signature(std::vector<int> signs);

  static Signature identity(int d);

  int dim() const { return static_cast<int>(signs_.size()); }
  int operator[](int k) const { return signs_[k]; }
  bool is_identity() const;
  int negatives() const;

  std::span<const int> signs() const { return signs_; }
  Vector as_vector() const;
  Matrix as_matrix() const;

  /// X Q: flips the sign of columns with a -1 entry.
  Embedding apply(const Embedding& x) const;
  Matrix apply_right(const Matrix& m) const;

  /// Parses "+-+" / "1,-1,1" style strings.
  static Signature parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const Signature&, const Signature&) = default;

 private:
  std::vector<int> signs_;
};

/// Deterministic generator used everywhere in the library: mt19937_64 seeded
/// with the raw 64-bit seed. Sample i of a training set uses seed base + i.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() { return normal_(engine_); }
  /// Uniform integer in [0, n).
  std::int64_t below(std::int64_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// i.i.d. uniform [0,1) entries.
Embedding uniform_embedding(int n, int d, std::uint64_t seed);

bool all_finite(const Embedding& x);

enum class LogLevel { Quiet = 0, Warning = 1, Info = 2, Debug = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log_warning(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);
/// Number of warnings emitted since process start (also counts suppressed ones).
std::uint64_t warning_count();

}  // namespace lase
