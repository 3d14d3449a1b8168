#include "cglab/kernels.hpp"

namespace cglab {

std::vector<Rollout> sample_batch(const PolicyParams& params, std::span<const SampleRequest> requests,
                                  int max_len, double temperature, Exec exec) {
  std::vector<Rollout> out(requests.size());
  parallel_for(requests.size(), exec, [&](size_t i) {
    RngStream rng(requests[i].seed);
    out[i] = sample(params, requests[i].prompt, rng, max_len, temperature);
  });
  return out;
}

std::vector<TokenSeq> greedy_batch(const PolicyParams& params,
                                   std::span<const std::span<const Token>> prompts, int max_len,
                                   Exec exec) {
  std::vector<TokenSeq> out(prompts.size());
  parallel_for(prompts.size(), exec,
               [&](size_t i) { out[i] = greedy_decode(params, prompts[i], max_len); });
  return out;
}

}  // namespace cglab
