#include "dermaug/error.hpp"
#include "dermaug/nn.hpp"

namespace dermaug {

void sgd_update(ParamSet& params, const ParamSet& grads, double lr, double momentum, ParamSet& velocity) {
  require_compatible(params, grads, "sgd_update(grads)");
  require_compatible(params, velocity, "sgd_update(velocity)");
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params.entry(t).second.data;
    const auto& g = grads.entry(t).second.data;
    auto& v = velocity.entry(t).second.data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

}  // namespace dermaug
