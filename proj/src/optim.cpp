#include "cglab/optim.hpp"

#include <cmath>
#include <string>

namespace cglab {

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "gd" || s == "sgd") return OptimizerKind::kGradientDescent;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "gd"; }

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, int rows, int cols)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (kind_ == OptimizerKind::kAdam) {
    m_ = Matrix(rows, cols);
    v_ = Matrix(rows, cols);
  }
}

void check_finite_loss(double loss, const PolicyParams& params, const char* stage) {
  if (!std::isfinite(loss)) throw TrainingError(std::string(stage) + " loss diverged", params);
}

void Optimizer::step(PolicyParams& params, const Matrix& grad) {
  auto w = params.weights.flat();
  auto g = grad.flat();
  for (double x : g)
    if (!std::isfinite(x)) throw TrainingError("non-finite gradient", params);
  if (kind_ == OptimizerKind::kGradientDescent) {
    for (size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
  } else {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto m = m_.flat();
    auto v = v_.flat();
    for (size_t i = 0; i < w.size(); ++i) {
      if (g[i] == 0.0 && m[i] == 0.0) continue;  // rows no loss has touched yet
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
  ++params.version;
}

}  // namespace cglab
