#include "slsnet/optim.hpp"

#include <cmath>
#include <string>

#include "slsnet/error.hpp"

namespace slsnet {

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
}

void adam_step(const std::vector<Parameter*>& params, const OptimizerConfig& cfg, std::size_t t) {
  if (t == 0) throw UsageError("adam_step: step index is 1-based");
  // Validate everything first so a bad gradient leaves all parameters untouched.
  for (const Parameter* p : params) {
    if (p->value.has_grad()) check_finite(p->value.grad(), "gradient of " + p->name);
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (Parameter* p : params) {
    const std::size_t n = p->size();
    if (p->m.size() != n) p->m.assign(n, real(0));
    if (p->v.size() != n) p->v.assign(n, real(0));
    if (!p->value.has_grad()) {
      // Zero gradient: the moments still decay.
      for (std::size_t i = 0; i < n; ++i) {
        p->m[i] = static_cast<real>(cfg.beta1 * p->m[i]);
        p->v[i] = static_cast<real>(cfg.beta2 * p->v[i]);
      }
    } else {
      auto g = p->value.grad();
      for (std::size_t i = 0; i < n; ++i) {
        p->m[i] = static_cast<real>(cfg.beta1 * p->m[i] + (1 - cfg.beta1) * g[i]);
        p->v[i] = static_cast<real>(cfg.beta2 * p->v[i] + (1 - cfg.beta2) * double(g[i]) * g[i]);
      }
    }
    auto w = p->value.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double mhat = p->m[i] / bc1;
      const double vhat = p->v[i] / bc2;
      w[i] = static_cast<real>(w[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    p->value.zero_grad();
  }
}

}  // namespace slsnet
