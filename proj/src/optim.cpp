#include "revgan/optim.hpp"

namespace revgan {

Adam::Adam(std::vector<Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
        if (!p->grad.same_shape(p->value)) p->zero_grad();
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void Adam::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        Matrix& m = m_[k];
        Matrix& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
        if (p.frozen_row >= 0) {
            auto r = p.value.row(static_cast<std::size_t>(p.frozen_row));
            std::fill(r.begin(), r.end(), 0.0);
        }
    }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
    double s = 0.0;
    for (const Parameter* p : params) {
        for (double g : p->grad.values()) s += g * g;
    }
    return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double f = max_norm / norm;
        for (Parameter* p : params) {
            for (double& g : p->grad.values()) g *= f;
        }
    }
    return norm;
}

void init_uniform(Parameter& p, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& x : p.value.values()) x = dist(rng);
    if (p.frozen_row >= 0) {
        auto r = p.value.row(static_cast<std::size_t>(p.frozen_row));
        std::fill(r.begin(), r.end(), 0.0);
    }
    p.zero_grad();
}

void init_normal(Parameter& p, double mean, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(mean, stddev);
    for (double& x : p.value.values()) x = dist(rng);
    p.zero_grad();
}

}  // namespace revgan
