#include "cglab/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace cglab {

Matrix& Matrix::operator+=(const Matrix& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw DomainError("matrix shape mismatch");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

std::span<double> SparseGrad::row(int r) {
  int& s = slot_[r];
  if (s < 0) {
    s = static_cast<int>(order_.size());
    order_.push_back(r);
    values_.resize(values_.size() + cols_, 0.0);
  }
  return {values_.data() + static_cast<size_t>(s) * cols_, static_cast<size_t>(cols_)};
}

void SparseGrad::add_to(Matrix& dense, double scale) const {
  for (size_t s = 0; s < order_.size(); ++s) {
    auto dst = dense.row(order_[s]);
    const double* src = values_.data() + s * cols_;
    for (int j = 0; j < cols_; ++j) dst[j] += scale * src[j];
  }
}

Matrix SparseGrad::to_dense() const {
  Matrix m(static_cast<int>(slot_.size()), cols_);
  add_to(m);
  return m;
}

FeatureMap::FeatureMap(int vocab_size, std::vector<int> bucket_starts)
    : vocab_size_(vocab_size), bucket_starts_(std::move(bucket_starts)) {
  if (vocab_size_ < 1) throw ConfigError("vocabulary size must be positive");
  if (bucket_starts_.empty() || bucket_starts_.front() != 0 ||
      !std::is_sorted(bucket_starts_.begin(), bucket_starts_.end()))
    throw ConfigError("position buckets must start at 0 and be ascending");
}

int FeatureMap::bucket(size_t position) const {
  int b = 0;
  for (int i = 0; i < num_buckets(); ++i)
    if (position >= static_cast<size_t>(bucket_starts_[i])) b = i;
  return b;
}

std::vector<int> FeatureMap::prompt_bag(std::span<const Token> prompt) const {
  std::vector<int> bag(prompt.begin(), prompt.end());
  for (int t : bag)
    if (t < 0 || t >= vocab_size_) throw DomainError("prompt token out of vocabulary");
  std::sort(bag.begin(), bag.end());
  bag.erase(std::unique(bag.begin(), bag.end()), bag.end());
  return bag;
}

void FeatureMap::active(std::span<const int> bag, std::span<const Token> prefix,
                        std::vector<int>& out) const {
  out.assign(bag.begin(), bag.end());
  const size_t n = prefix.size();
  if (n >= 1) out.push_back(vocab_size_ + prefix[n - 1]);
  if (n >= 2) out.push_back(2 * vocab_size_ + prefix[n - 2]);
  out.push_back(3 * vocab_size_ + bucket(n));
  out.push_back(dim() - 1);
}

std::vector<double> FeatureMap::dense(std::span<const Token> prompt,
                                      std::span<const Token> prefix) const {
  std::vector<double> phi(dim(), 0.0);
  std::vector<int> idx;
  active(prompt_bag(prompt), prefix, idx);
  for (int i : idx) phi[i] = 1.0;
  return phi;
}

void state_logits(const PolicyParams& params, std::span<const int> active, std::span<double> logits) {
  std::fill(logits.begin(), logits.end(), 0.0);
  const int v = params.vocab_size();
  for (int f : active) {
    auto w = params.weights.row(f);
    for (int j = 0; j < v; ++j) logits[j] += w[j];
  }
  for (double z : logits)
    if (!std::isfinite(z)) throw NumericError("non-finite policy logit");
}

double softmax_inplace(std::span<double> v, double temperature) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp((x - mx) / temperature);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return mx / temperature + std::log(sum);
}

void log_softmax_inplace(std::span<double> v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  const double log_z = mx + std::log(sum);
  for (double& x : v) x -= log_z;
}

namespace {

void check_tokens(std::span<const Token> seq, int v) {
  for (Token t : seq)
    if (t < 0 || t >= v) throw DomainError("token " + std::to_string(t) + " out of vocabulary");
}

}  // namespace

std::vector<double> next_token_dist(const PolicyParams& params, std::span<const Token> prompt,
                                    std::span<const Token> prefix) {
  check_tokens(prefix, params.vocab_size());
  std::vector<int> active;
  params.features.active(params.features.prompt_bag(prompt), prefix, active);
  std::vector<double> p(params.vocab_size());
  state_logits(params, active, p);
  softmax_inplace(p);
  return p;
}

double sequence_log_prob(const PolicyParams& params, std::span<const Token> prompt,
                         std::span<const Token> output) {
  if (output.empty()) throw DomainError("output must be non-empty");
  check_tokens(output, params.vocab_size());
  const auto bag = params.features.prompt_bag(prompt);
  std::vector<int> active;
  std::vector<double> z(params.vocab_size());
  double total = 0.0;
  for (size_t t = 0; t < output.size(); ++t) {
    params.features.active(bag, output.first(t), active);
    state_logits(params, active, z);
    const double zy = z[output[t]];
    total += zy - softmax_inplace(z);
  }
  return total;
}

Rollout sample(const PolicyParams& params, std::span<const Token> prompt, RngStream& rng,
               int max_len, double temperature) {
  if (max_len < 1) throw DomainError("max_len must be at least 1");
  const auto bag = params.features.prompt_bag(prompt);
  const int v = params.vocab_size();
  Rollout r;
  r.prompt_tokens.assign(prompt.begin(), prompt.end());
  std::vector<int> active;
  std::vector<double> p(v);
  while (static_cast<int>(r.output_tokens.size()) < max_len) {
    params.features.active(bag, r.output_tokens, active);
    state_logits(params, active, p);
    softmax_inplace(p, temperature);
    const double u = rng.uniform();
    double cdf = 0.0;
    int y = v - 1;
    for (int j = 0; j < v; ++j) {
      cdf += p[j];
      if (u < cdf) {
        y = j;
        break;
      }
    }
    const double lp = std::log(p[y]);
    r.output_tokens.push_back(y);
    r.step_log_probs.push_back(lp);
    r.total_log_prob += lp;
    if (y == 1) break;  // EOS
  }
  r.truncated = r.output_tokens.back() != 1;
  return r;
}

TokenSeq greedy_decode(const PolicyParams& params, std::span<const Token> prompt, int max_len) {
  const auto bag = params.features.prompt_bag(prompt);
  TokenSeq out;
  std::vector<int> active;
  std::vector<double> z(params.vocab_size());
  while (static_cast<int>(out.size()) < max_len) {
    params.features.active(bag, out, active);
    state_logits(params, active, z);
    const Token y = static_cast<Token>(std::max_element(z.begin(), z.end()) - z.begin());
    out.push_back(y);
    if (y == 1) break;
  }
  return out;
}

double accumulate_log_prob_grad(const PolicyParams& params, std::span<const Token> prompt,
                                std::span<const Token> output, double scale, SparseGrad& grad) {
  if (output.empty()) throw DomainError("output must be non-empty");
  check_tokens(output, params.vocab_size());
  const auto bag = params.features.prompt_bag(prompt);
  const int v = params.vocab_size();
  std::vector<int> active;
  std::vector<double> p(v);
  double total = 0.0;
  for (size_t t = 0; t < output.size(); ++t) {
    params.features.active(bag, output.first(t), active);
    state_logits(params, active, p);
    const Token y = output[t];
    const double zy = p[y];
    total += zy - softmax_inplace(p);
    // d log p_y / d z = e_y - p
    for (double& x : p) x *= -scale;
    p[y] += scale;
    for (int f : active) {
      auto g = grad.row(f);
      for (int j = 0; j < v; ++j) g[j] += p[j];
    }
  }
  return total;
}

Matrix log_prob_grad(const PolicyParams& params, std::span<const Token> prompt,
                     std::span<const Token> output) {
  SparseGrad g(params.weights.rows(), params.weights.cols());
  accumulate_log_prob_grad(params, prompt, output, 1.0, g);
  return g.to_dense();
}

std::string checkpoint_text(const PolicyParams& params) {
  const Matrix& w = params.weights;
  std::string out;
  out.reserve(static_cast<size_t>(w.rows()) * w.cols() * 12 + 64);
  out += kCheckpointHeader;
  out += '\n';
  out += std::to_string(w.rows()) + " " + std::to_string(w.cols()) + "\n";
  char buf[40];
  for (int r = 0; r < w.rows(); ++r) {
    for (int c = 0; c < w.cols(); ++c) {
      if (!std::isfinite(w(r, c))) throw NumericError("refusing to save non-finite weight");
      const int n = std::snprintf(buf, sizeof(buf), "%.17g", w(r, c));
      if (c) out += ' ';
      out.append(buf, n);
    }
    out += '\n';
  }
  return out;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  const std::string text = checkpoint_text(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArtifactError("cannot write checkpoint " + path.string());
  f << text;
  if (!f) throw ArtifactError("short write on checkpoint " + path.string());
}

PolicyParams parse_checkpoint(std::string_view text) {
  auto next_line = [&](std::string_view& line) {
    if (text.empty()) return false;
    const size_t nl = text.find('\n');
    if (nl == std::string_view::npos) throw LoadError("checkpoint line not newline-terminated");
    line = text.substr(0, nl);
    text.remove_prefix(nl + 1);
    return true;
  };
  std::string_view line;
  if (!next_line(line) || line != kCheckpointHeader)
    throw VersionError("missing checkpoint header '" + std::string(kCheckpointHeader) + "'");
  if (!next_line(line)) throw LoadError("missing dimension line");
  int rows = 0, cols = 0;
  {
    const char* b = line.data();
    const char* e = b + line.size();
    auto r1 = std::from_chars(b, e, rows);
    if (r1.ec != std::errc() || r1.ptr == e || *r1.ptr != ' ') throw LoadError("malformed dimension line");
    auto r2 = std::from_chars(r1.ptr + 1, e, cols);
    if (r2.ec != std::errc() || r2.ptr != e) throw LoadError("malformed dimension line");
  }
  if (rows < 1 || cols < 1) throw LoadError("invalid checkpoint dimensions");
  const int buckets = rows - 3 * cols - 1;
  if (buckets < 1) throw LoadError("dimension line inconsistent with feature layout");
  std::vector<int> starts = {0, 8, 16, 32};
  if (buckets != 4) {
    starts.clear();
    for (int b = 0; b < buckets; ++b) starts.push_back(b == 0 ? 0 : 8 << (b - 1));
  }
  PolicyParams params(FeatureMap(cols, starts), Matrix(rows, cols));
  for (int r = 0; r < rows; ++r) {
    if (!next_line(line)) throw LoadError("checkpoint truncated at row " + std::to_string(r));
    const char* p = line.data();
    const char* e = p + line.size();
    for (int c = 0; c < cols; ++c) {
      if (c) {
        if (p == e || *p != ' ') throw LoadError("malformed row " + std::to_string(r));
        ++p;
      }
      double x = 0.0;
      auto res = std::from_chars(p, e, x);
      if (res.ec != std::errc()) throw LoadError("malformed number in row " + std::to_string(r));
      if (!std::isfinite(x)) throw LoadError("non-finite weight in row " + std::to_string(r));
      params.weights(r, c) = x;
      p = res.ptr;
    }
    if (p != e) throw LoadError("trailing data in row " + std::to_string(r));
  }
  if (!text.empty()) throw LoadError("trailing data after checkpoint rows");
  return params;
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace cglab
