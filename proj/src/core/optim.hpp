#pragma once

#include <cstdint>
#include <vector>

#include "nn.hpp"

namespace fe2e {

struct AdamWParams {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with bias-corrected moments and decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<NamedParam>& params, AdamWParams hp = {});

    // Applies one update from the gradients currently stored on the parameters.
    void step();

    std::uint64_t step_count() const { return step_count_; }
    const AdamWParams& hyperparams() const { return hp_; }
    void set_learning_rate(double lr) { hp_.learning_rate = lr; }

private:
    std::vector<NamedParam>* params_;
    AdamWParams hp_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t step_count_ = 0;
};

}  // namespace fe2e
