#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "cglab/policy.hpp"
#include "cglab/world.hpp"

namespace cglab::testing {

// Small world so gradient checks and micro runs stay fast.
inline VocabSpec small_vocab() { return VocabSpec{3, 8, 2}; }

inline PolicyParams random_params(int vocab_size, std::uint64_t seed, double scale = 0.3) {
  PolicyParams p(vocab_size);
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& w : p.weights.flat()) w = n(g);
  return p;
}

inline PolicyParams perturbed(const PolicyParams& base, std::uint64_t seed, double scale) {
  PolicyParams p = base;
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& w : p.weights.flat()) w += n(g);
  return p;
}

struct FdResult {
  int checked = 0;
  double worst = 0.0;  // worst relative error
};

// Central differences on `coords` coordinates drawn from rows that the
// analytic gradient touches (half) and from anywhere (half). Relative error
// is |a - n| / max(|a| + |n|, floor).
template <class LossFn>
FdResult finite_difference_check(PolicyParams params, const Matrix& analytic, LossFn&& loss, int coords,
                                 std::uint64_t seed, double h = 1e-5, double floor = 1e-6) {
  std::mt19937_64 g(seed);
  std::vector<size_t> nonzero;
  auto a = analytic.flat();
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0.0) nonzero.push_back(i);
  FdResult r;
  auto w = params.weights.flat();
  for (int k = 0; k < coords; ++k) {
    size_t i;
    if (k % 2 == 0 && !nonzero.empty())
      i = nonzero[std::uniform_int_distribution<size_t>(0, nonzero.size() - 1)(g)];
    else
      i = std::uniform_int_distribution<size_t>(0, w.size() - 1)(g);
    const double saved = w[i];
    w[i] = saved + h;
    const double up = loss(params);
    w[i] = saved - h;
    const double down = loss(params);
    w[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(a[i] - numeric) / std::max(std::abs(a[i]) + std::abs(numeric), floor);
    r.worst = std::max(r.worst, err);
    ++r.checked;
  }
  return r;
}

}  // namespace cglab::testing
