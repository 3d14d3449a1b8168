#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cglab/policy.hpp"

namespace cglab {

// Raised when training diverges; carries the last finite parameters.
struct TrainingError : std::runtime_error {
  TrainingError(const std::string& what, PolicyParams last_good)
      : std::runtime_error(what), last_finite(std::make_shared<PolicyParams>(std::move(last_good))) {}
  std::shared_ptr<PolicyParams> last_finite;
};

// Throws TrainingError (with `params` as the last finite state) if not finite.
void check_finite_loss(double loss, const PolicyParams& params, const char* stage);

enum class OptimizerKind { kGradientDescent, kAdam };

OptimizerKind optimizer_from_string(std::string_view s);
std::string_view to_string(OptimizerKind k);

// First-order minimizer over the policy weights.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, int rows, int cols);

  // params.weights -= step(grad); bumps params.version. A non-finite gradient
  // raises TrainingError and leaves params untouched.
  void step(PolicyParams& params, const Matrix& grad);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Matrix m_;
  Matrix v_;
};

}  // namespace cglab
