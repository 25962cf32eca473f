#pragma once

#include <cstdint>
#include <vector>

#include "lgode/params.hpp"

namespace lgode {

struct AdamConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer over a whole ParamSet.
class Adam {
public:
    Adam(const ParamSet& params, AdamConfig cfg);

    /// Applies one update from the grads currently stored in `params`.
    /// Returns false, leaving params and moments untouched, when any gradient
    /// is non-finite.
    bool step(ParamSet& params);

    std::uint64_t steps_taken() const { return t_; }
    std::uint64_t steps_skipped() const { return skipped_; }

private:
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t t_ = 0;
    std::uint64_t skipped_ = 0;
};

}  // namespace lgode
