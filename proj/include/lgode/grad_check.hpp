#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "lgode/autodiff.hpp"

namespace lgode::ad {

struct GradCheckResult {
    double max_rel_error = std::numeric_limits<double>::infinity();
    std::size_t coords_checked = 0;
    bool finite = false;  // false when f produced a non-finite value anywhere

    bool passed(double tol) const { return finite && max_rel_error < tol; }
};

/// Builds a scalar on the given tape from variables bound to the inputs.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckOptions {
    double eps = 1e-5;
    /// Coordinates checked per input; 0 means all. A seeded random subset otherwise.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 7;
};

/// Compares reverse-mode gradients to central differences. The error for a
/// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opt = {});

GradCheckResult grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace lgode::ad
