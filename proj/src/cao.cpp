#include "cglab/cao.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace cglab {

AlignAlgo align_algo_from_string(std::string_view s) {
  if (s == "cao") return AlignAlgo::kCao;
  if (s == "dpo") return AlignAlgo::kDpo;
  throw ConfigError("unknown alignment algorithm '" + std::string(s) + "'");
}

std::string_view to_string(AlignAlgo a) { return a == AlignAlgo::kCao ? "cao" : "dpo"; }

void CaoConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("cao.beta must be positive");
  if (!(anchor_weight >= 0.0)) throw ConfigError("cao.anchor_weight must be non-negative");
  if (samples_per_prompt < 1) throw ConfigError("cao.samples_per_prompt must be positive");
  if (!(temperature > 0.0)) throw ConfigError("cao.temperature must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("cao.learning_rate must be positive");
  if (epochs < 0) throw ConfigError("cao.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("cao.batch_size must be positive");
}

void check_quadruple(const AlignmentQuadruple& q, const VocabSpec& vocab) {
  if (q.failure_lang == q.success_lang) throw DomainError("quadruple languages must differ");
  if (extract_verdict(q.rejected, vocab) == q.gold) throw DomainError("rejected output has the gold verdict");
  if (extract_verdict(q.chosen, vocab) != q.gold) throw DomainError("chosen output lacks the gold verdict");
  if (q.anchor_prompt_len < 1 || q.anchor_prompt_len > static_cast<int>(q.anchor.size()))
    throw DomainError("anchor split out of range");
  const auto out = q.anchor_output();
  if (!std::equal(out.begin(), out.end(), q.chosen.begin(), q.chosen.end()))
    throw DomainError("anchor must end with the chosen output");
}

std::vector<ScoredOutput> sample_outputs(const PolicyParams& params, std::span<const BaseSample> corpus,
                                         std::span<const int> languages, const VocabSpec& vocab,
                                         const RewardConfig& reward, const CaoConfig& config) {
  config.validate();
  std::vector<int> langs(languages.begin(), languages.end());
  std::sort(langs.begin(), langs.end());
  langs.erase(std::unique(langs.begin(), langs.end()), langs.end());

  std::vector<const BaseSample*> samples;
  for (const auto& s : corpus) samples.push_back(&s);
  std::sort(samples.begin(), samples.end(),
            [](const BaseSample* a, const BaseSample* b) { return a->sample_id < b->sample_id; });

  std::vector<ScoredOutput> table;
  for (const BaseSample* s : samples) {
    for (int lang : langs) {
      SurfaceSample surface = translate(*s, lang, vocab);
      for (int k = 0; k < config.samples_per_prompt; ++k) {
        ScoredOutput o;
        o.sample_id = s->sample_id;
        o.language = lang;
        o.index = k;
        o.gold = s->gold_verdict;
        o.prompt = surface.prompt_tokens;
        table.push_back(std::move(o));
      }
    }
  }
  std::vector<SampleRequest> req;
  req.reserve(table.size());
  for (const auto& o : table)
    req.push_back({o.prompt, derive_seed(config.seed, {static_cast<std::uint64_t>(o.sample_id),
                                                       static_cast<std::uint64_t>(o.language),
                                                       static_cast<std::uint64_t>(o.index)})});
  auto rollouts = sample_batch(params, req, reward.max_generation_length(), config.temperature, config.exec);
  for (size_t i = 0; i < table.size(); ++i) {
    table[i].output = std::move(rollouts[i].output_tokens);
    table[i].reward = score_output(table[i].output, table[i].gold, reward, vocab);
    table[i].success = table[i].reward.format == 1 && table[i].reward.accuracy == 1;
  }
  return table;
}

PairSet pair_outputs(std::span<const ScoredOutput> outputs, const VocabSpec& vocab) {
  PairSet out;
  std::map<std::int64_t, std::vector<const ScoredOutput*>> by_sample;
  for (const auto& o : outputs) by_sample[o.sample_id].push_back(&o);
  for (auto& [id, group] : by_sample) {
    std::stable_sort(group.begin(), group.end(), [](const ScoredOutput* a, const ScoredOutput* b) {
      return std::tie(a->language, a->index) < std::tie(b->language, b->index);
    });
    for (const ScoredOutput* fail : group) {
      if (fail->success) {
        ++out.successes;
        continue;
      }
      ++out.failures;
      const ScoredOutput* best = nullptr;
      for (const ScoredOutput* cand : group) {
        if (!cand->success || cand->language == fail->language) continue;
        // group is in (language, index) order, so strict > keeps the tie-break
        if (!best || cand->reward.total > best->reward.total) best = cand;
      }
      if (!best) {
        ++out.skipped;
        continue;
      }
      AlignmentQuadruple q;
      q.sample_id = id;
      q.failure_lang = fail->language;
      q.success_lang = best->language;
      q.failure_index = fail->index;
      q.success_index = best->index;
      q.gold = fail->gold;
      q.input = fail->prompt;
      q.rejected = fail->output;
      q.chosen = best->output;
      q.anchor = best->prompt;
      q.anchor_prompt_len = static_cast<int>(best->prompt.size());
      q.anchor.insert(q.anchor.end(), best->output.begin(), best->output.end());
      check_quadruple(q, vocab);
      out.quadruples.push_back(std::move(q));
    }
  }
  return out;
}

PairSet build_pairs(const PolicyParams& params, std::span<const BaseSample> corpus,
                    std::span<const int> languages, const VocabSpec& vocab, const RewardConfig& reward,
                    const CaoConfig& config) {
  const auto table = sample_outputs(params, corpus, languages, vocab, reward, config);
  return pair_outputs(table, vocab);
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

std::span<const Token> chosen_prompt(const AlignmentQuadruple& q, bool on_success_prompt) {
  return on_success_prompt ? q.anchor_prompt() : std::span<const Token>(q.input);
}

double preference_term(const PolicyParams& params, const PolicyParams& ref, const AlignmentQuadruple& q,
                       double beta, bool on_success_prompt, double weight, SparseGrad& grad) {
  const auto qw = chosen_prompt(q, on_success_prompt);
  const double lw = sequence_log_prob(params, qw, q.chosen);
  const double ll = sequence_log_prob(params, q.input, q.rejected);
  const double rw = sequence_log_prob(ref, qw, q.chosen);
  const double rl = sequence_log_prob(ref, q.input, q.rejected);
  const double margin = beta * ((lw - rw) - (ll - rl));
  if (!std::isfinite(margin)) throw NumericError("non-finite preference margin");
  // d/dm [-log sigmoid(m)] = -sigmoid(-m)
  const double c = -weight * beta * sigmoid(-margin);
  accumulate_log_prob_grad(params, qw, q.chosen, c, grad);
  accumulate_log_prob_grad(params, q.input, q.rejected, -c, grad);
  return -weight * log_sigmoid(margin);
}

// Returns weight * mean KL; the gradient is accumulated only when `grad` is set.
double anchor_term(const PolicyParams& params, const PolicyParams& ref, std::span<const Token> prompt,
                   std::span<const Token> output, double weight, SparseGrad* grad) {
  if (output.empty()) throw DomainError("anchor output must be non-empty");
  const auto bag = params.features.prompt_bag(prompt);
  const int v = params.vocab_size();
  const double inv_len = 1.0 / static_cast<double>(output.size());
  const double scale = weight * inv_len;
  std::vector<int> active;
  std::vector<double> p(v), lp(v), lr(v);
  double total = 0.0;
  for (size_t t = 0; t < output.size(); ++t) {
    params.features.active(bag, output.first(t), active);
    state_logits(params, active, lp);
    state_logits(ref, active, lr);
    log_softmax_inplace(lp);
    log_softmax_inplace(lr);
    double kl = 0.0;
    for (int j = 0; j < v; ++j) {
      p[j] = std::exp(lp[j]);
      kl += p[j] * (lp[j] - lr[j]);
    }
    total += kl;
    if (grad && weight != 0.0) {
      for (int j = 0; j < v; ++j) lp[j] = scale * p[j] * (lp[j] - lr[j] - kl);
      for (int f : active) {
        auto g = grad->row(f);
        for (int j = 0; j < v; ++j) g[j] += lp[j];
      }
    }
  }
  return weight * (total * inv_len);
}

size_t split_point(std::span<const Token> anchor) {
  const auto it = std::find(anchor.begin(), anchor.end(), tok::kThinkOpen);
  if (it == anchor.end() || it == anchor.begin()) throw DomainError("anchor has no prompt/output boundary");
  return static_cast<size_t>(it - anchor.begin());
}

double quad_term(const PolicyParams& params, const PolicyParams& ref, const AlignmentQuadruple& q,
                 const CaoConfig& config, double weight, SparseGrad& grad) {
  double loss = preference_term(params, ref, q, config.beta, config.chosen_on_success_prompt, weight, grad);
  if (config.algorithm == AlignAlgo::kCao)
    loss += anchor_term(params, ref, q.anchor_prompt(), q.anchor_output(), weight * config.anchor_weight, &grad);
  return loss;
}

}  // namespace

LossGrad preference_loss(const PolicyParams& params, const PolicyParams& ref, const AlignmentQuadruple& quad,
                         double beta, bool chosen_on_success_prompt) {
  return reduce_items(1, params.weights.rows(), params.weights.cols(), Exec::kSerial,
                      [&](size_t, SparseGrad& g) {
                        return preference_term(params, ref, quad, beta, chosen_on_success_prompt, 1.0, g);
                      });
}

LossGrad anchor_kl(const PolicyParams& params, const PolicyParams& ref, std::span<const Token> anchor_prompt,
                   std::span<const Token> anchor_output) {
  return reduce_items(1, params.weights.rows(), params.weights.cols(), Exec::kSerial,
                      [&](size_t, SparseGrad& g) {
                        return anchor_term(params, ref, anchor_prompt, anchor_output, 1.0, &g);
                      });
}

LossGrad anchor_kl(const PolicyParams& params, const PolicyParams& ref, std::span<const Token> anchor_tokens) {
  const size_t at = split_point(anchor_tokens);
  return anchor_kl(params, ref, anchor_tokens.first(at), anchor_tokens.subspan(at));
}

LossGrad cao_loss(const PolicyParams& params, const PolicyParams& ref, const AlignmentQuadruple& quad,
                  const CaoConfig& config) {
  return reduce_items(1, params.weights.rows(), params.weights.cols(), Exec::kSerial,
                      [&](size_t, SparseGrad& g) { return quad_term(params, ref, quad, config, 1.0, g); });
}

namespace {

AlignEpochMetrics epoch_metrics(const PolicyParams& params, const PolicyParams& ref,
                                std::span<const AlignmentQuadruple> quads, const CaoConfig& config, int epoch) {
  std::vector<double> pref(quads.size()), kl(quads.size()), win(quads.size());
  parallel_for(quads.size(), config.exec, [&](size_t i) {
    const auto& q = quads[i];
    const auto qw = chosen_prompt(q, config.chosen_on_success_prompt);
    const double lw = sequence_log_prob(params, qw, q.chosen);
    const double ll = sequence_log_prob(params, q.input, q.rejected);
    const double rw = sequence_log_prob(ref, qw, q.chosen);
    const double rl = sequence_log_prob(ref, q.input, q.rejected);
    pref[i] = -log_sigmoid(config.beta * ((lw - rw) - (ll - rl)));
    win[i] = lw > ll ? 1.0 : 0.0;
    kl[i] = anchor_term(params, ref, q.anchor_prompt(), q.anchor_output(), 1.0, nullptr);
  });
  const double n = static_cast<double>(quads.size());
  AlignEpochMetrics m;
  m.epoch = epoch;
  for (size_t i = 0; i < quads.size(); ++i) {
    m.pref_loss += pref[i];
    m.anchor_kl += kl[i];
    m.pref_acc += win[i];
  }
  m.pref_loss /= n;
  m.anchor_kl /= n;
  m.pref_acc /= n;
  return m;
}

}  // namespace

AlignResult train_align(PolicyParams params, std::span<const AlignmentQuadruple> quadruples,
                        const CaoConfig& config) {
  config.validate();
  if (quadruples.empty()) throw ConfigError("alignment needs at least one quadruple");
  const PolicyParams ref = params;
  AlignResult result{std::move(params), {}};
  PolicyParams& p = result.params;
  result.trace.push_back(epoch_metrics(p, ref, quadruples, config, 0));

  Optimizer opt(config.optimizer, config.learning_rate, p.weights.rows(), p.weights.cols());
  std::vector<size_t> order(quadruples.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(config.seed);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + config.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      LossGrad lg = reduce_items(end - start, p.weights.rows(), p.weights.cols(), config.exec,
                                 [&](size_t i, SparseGrad& g) {
                                   return quad_term(p, ref, quadruples[order[start + i]], config, w, g);
                                 });
      check_finite_loss(lg.loss, p, "align");
      opt.step(p, lg.grad);
    }
    result.trace.push_back(epoch_metrics(p, ref, quadruples, config, epoch));
  }
  return result;
}

}  // namespace cglab
