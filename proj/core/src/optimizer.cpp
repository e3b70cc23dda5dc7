#include "scriptcl/optimizer.hpp"

#include <cmath>

namespace scriptcl {

void AdamOptimizer::step(ParameterStore& params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (const auto& name : params.names()) {
    ad::Var& p = params.get(name);
    const ad::Matrix g = p.grad();
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) {
      it->second.first = ad::Matrix::Zero(g.rows(), g.cols());
      it->second.second = ad::Matrix::Zero(g.rows(), g.cols());
    }
    auto& [m, v] = it->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.mutable_value().array() -=
        cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  }
}

}  // namespace scriptcl
