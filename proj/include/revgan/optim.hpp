#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "revgan/autograd.hpp"

namespace revgan {

/// Adaptive-moment optimizer. State is kept per parameter in registration order.
class Adam {
public:
    explicit Adam(std::vector<Parameter*> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void zero_grad();
    void step(double lr);
    std::uint64_t steps() const { return t_; }
    const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Matrix> m_, v_;
    double beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

/// Global L2 norm over every parameter gradient.
double global_grad_norm(const std::vector<Parameter*>& params);

/// Rescales gradients so the global norm is at most max_norm.
/// Returns the norm measured before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

/// Step schedule: initial rate halved every `halve_every` epochs (1-based epochs).
inline double halving_lr(double initial, int epoch, int halve_every) {
    if (halve_every <= 0 || epoch <= 1) return initial;
    return initial * std::pow(0.5, (epoch - 1) / halve_every);
}

void init_uniform(Parameter& p, double lo, double hi, std::mt19937_64& rng);
void init_normal(Parameter& p, double mean, double stddev, std::mt19937_64& rng);

}  // namespace revgan
