#pragma once

// Batched kernels with an OpenMP path and a serial reference path. Both
// paths run the same per-item code and merge results in index order, so
// their outputs are bit-identical; tests hold them to that.

#include <cstdint>
#include <exception>
#include <span>
#include <vector>

#include "cglab/policy.hpp"

namespace cglab {

enum class Exec { kSerial, kParallel };

// Runs fn(i) for i in [0, n). An exception from any item is rethrown on the
// calling thread after the loop (lowest failing index wins).
template <class Fn>
void parallel_for(size_t n, Exec exec, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::kParallel)
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct SampleRequest {
  std::span<const Token> prompt;
  std::uint64_t seed = 0;
};

std::vector<Rollout> sample_batch(const PolicyParams& params, std::span<const SampleRequest> requests,
                                  int max_len, double temperature, Exec exec = Exec::kParallel);

std::vector<TokenSeq> greedy_batch(const PolicyParams& params,
                                   std::span<const std::span<const Token>> prompts, int max_len,
                                   Exec exec = Exec::kParallel);

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

// Sum over items of item_fn(i, grad_i), where item_fn accumulates its own
// gradient into grad_i and returns its loss. Items may run in parallel; the
// merge is always in ascending item order.
template <class ItemFn>
LossGrad reduce_items(size_t n, int rows, int cols, Exec exec, ItemFn&& item_fn) {
  std::vector<SparseGrad> grads(n);
  std::vector<double> losses(n, 0.0);
  parallel_for(n, exec, [&](size_t i) {
    grads[i] = SparseGrad(rows, cols);
    losses[i] = item_fn(i, grads[i]);
  });
  LossGrad out{0.0, Matrix(rows, cols)};
  for (size_t i = 0; i < n; ++i) {
    out.loss += losses[i];
    grads[i].add_to(out.grad);
  }
  return out;
}

// Same as reduce_items for loss-only work (no gradients).
template <class ItemFn>
std::vector<double> map_items(size_t n, Exec exec, ItemFn&& item_fn) {
  std::vector<double> out(n, 0.0);
  parallel_for(n, exec, [&](size_t i) { out[i] = item_fn(i); });
  return out;
}

}  // namespace cglab
