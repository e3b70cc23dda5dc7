#pragma once

#include <map>
#include <string>

#include "scriptcl/encoding.hpp"

namespace scriptcl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction and no weight decay. State is keyed by
// parameter name so it can be checkpointed alongside the parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from the gradients currently held by `params`.
  void step(ParameterStore& params);

  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  long long steps() const { return steps_; }

  struct Moments {
    ad::Matrix first;
    ad::Matrix second;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(long long steps, std::map<std::string, Moments> moments) {
    steps_ = steps;
    moments_ = std::move(moments);
  }

 private:
  AdamConfig cfg_;
  long long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace scriptcl
