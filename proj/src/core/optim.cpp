#include "optim.hpp"

#include <cmath>

namespace fe2e {

AdamW::AdamW(std::vector<NamedParam>& params, AdamWParams hp) : params_(&params), hp_(hp) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].tensor.numel(), 0.0);
        v_[i].assign(params[i].tensor.numel(), 0.0);
    }
}

void AdamW::step() {
    ++step_count_;
    double t = static_cast<double>(step_count_);
    double bc1 = 1.0 - std::pow(hp_.beta1, t);
    double bc2 = 1.0 - std::pow(hp_.beta2, t);

    for (std::size_t i = 0; i < params_->size(); ++i) {
        auto& param = (*params_)[i].tensor;
        auto& value = param.values();
        const auto& grad = param.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            double g = grad[j];
            m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g;
            v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g * g;
            double m_hat = m[j] / bc1;
            double v_hat = v[j] / bc2;
            value[j] -= hp_.learning_rate * (m_hat / (std::sqrt(v_hat) + hp_.epsilon) +
                                             hp_.weight_decay * value[j]);
        }
    }
}

}  // namespace fe2e
