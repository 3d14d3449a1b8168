#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cglab/common.hpp"
#include "cglab/rng.hpp"

namespace cglab {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  Matrix& operator+=(const Matrix& o);
  Matrix& operator*=(double s);
  bool operator==(const Matrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Gradient touching few rows of an F x V matrix. Rows are materialized on
// first touch; add_to() replays them in touch order, so reductions are
// deterministic when items are merged in a fixed order.
class SparseGrad {
 public:
  SparseGrad() = default;
  SparseGrad(int rows, int cols) : cols_(cols), slot_(rows, -1) {}

  std::span<double> row(int r);
  void add_to(Matrix& dense, double scale = 1.0) const;
  Matrix to_dense() const;
  int touched_rows() const { return static_cast<int>(order_.size()); }

 private:
  int cols_ = 0;
  std::vector<int> slot_;
  std::vector<int> order_;
  std::vector<double> values_;
};

// Feature layout: prompt bag-of-tokens (V) | last prefix token (V) |
// second-to-last prefix token (V) | position bucket (B) | bias (1).
// All features are binary, so a state is described by its active indices.
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(int vocab_size, std::vector<int> bucket_starts = {0, 8, 16, 32});

  int vocab_size() const { return vocab_size_; }
  int num_buckets() const { return static_cast<int>(bucket_starts_.size()); }
  int dim() const { return 3 * vocab_size_ + num_buckets() + 1; }
  int bucket(size_t position) const;
  const std::vector<int>& bucket_starts() const { return bucket_starts_; }

  // Sorted distinct prompt tokens; computed once per prompt.
  std::vector<int> prompt_bag(std::span<const Token> prompt) const;
  // Active feature indices for the state (prompt bag, prefix).
  void active(std::span<const int> bag, std::span<const Token> prefix, std::vector<int>& out) const;
  // Dense feature vector; used by tests.
  std::vector<double> dense(std::span<const Token> prompt, std::span<const Token> prefix) const;

 private:
  int vocab_size_ = 0;
  std::vector<int> bucket_starts_;
};

// Linear-softmax next-token policy: dist = softmax(phi^T W).
struct PolicyParams {
  FeatureMap features;
  Matrix weights;  // F x V
  std::uint64_t version = 0;

  PolicyParams() = default;
  explicit PolicyParams(int vocab_size) : features(vocab_size), weights(features.dim(), vocab_size) {}
  PolicyParams(FeatureMap map, Matrix w) : features(std::move(map)), weights(std::move(w)) {}

  int vocab_size() const { return features.vocab_size(); }
};

struct RewardBreakdown {
  int format = 0;
  int accuracy = 0;
  double length_reward = 0.0;
  double diversity_reward = 0.0;
  double repetition_p = 0.0;
  int reasoning_length = 0;
  double total = 0.0;
};

struct Rollout {
  TokenSeq prompt_tokens;
  TokenSeq output_tokens;
  std::vector<double> step_log_probs;
  double total_log_prob = 0.0;
  bool truncated = false;
  RewardBreakdown reward;
};

// Unnormalized logits for one state, written into `logits` (size V).
// Throws NumericError on a non-finite logit.
void state_logits(const PolicyParams& params, std::span<const int> active, std::span<double> logits);
// In-place softmax with optional temperature; returns log of the partition.
double softmax_inplace(std::span<double> v, double temperature = 1.0);
// logits -> log-probabilities, in place.
void log_softmax_inplace(std::span<double> v);

std::vector<double> next_token_dist(const PolicyParams& params, std::span<const Token> prompt,
                                    std::span<const Token> prefix);

double sequence_log_prob(const PolicyParams& params, std::span<const Token> prompt,
                         std::span<const Token> output);

// Ancestral sampling until EOS or max_len tokens.
Rollout sample(const PolicyParams& params, std::span<const Token> prompt, RngStream& rng,
               int max_len, double temperature = 1.0);

// Deterministic argmax decode (ties to the lowest token id).
TokenSeq greedy_decode(const PolicyParams& params, std::span<const Token> prompt, int max_len);

// Accumulates scale * d/dW log pi(output | prompt) into `grad` and returns the
// log-probability. Only rows of active features are touched.
double accumulate_log_prob_grad(const PolicyParams& params, std::span<const Token> prompt,
                                std::span<const Token> output, double scale, SparseGrad& grad);

Matrix log_prob_grad(const PolicyParams& params, std::span<const Token> prompt,
                     std::span<const Token> output);

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

inline constexpr const char* kCheckpointHeader = "CGLAB-CKPT v1";
std::string checkpoint_text(const PolicyParams& params);
PolicyParams parse_checkpoint(std::string_view text);

}  // namespace cglab
