#include "lgode/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lgode::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    return f(tape, vars).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opt) {
    GradCheckResult res;
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
        Var y = f(tape, vars);
        if (y.shape() != Shape{1, 1}) throw ShapeError("grad_check", "f must return 1x1, got " + y.shape().str());
        if (!std::isfinite(y.value().item())) return res;
        tape.backward(y);
        for (const Var& v : vars) analytic.push_back(tape.grad(v));
    }
    for (const Tensor& g : analytic)
        if (!g.all_finite()) return res;

    std::mt19937_64 rng(opt.seed);
    std::vector<Tensor> probe = inputs;
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<std::size_t> coords(inputs[k].size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (opt.max_coords_per_input != 0 && coords.size() > opt.max_coords_per_input) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opt.max_coords_per_input);
        }
        for (std::size_t c : coords) {
            const double x0 = inputs[k][c];
            probe[k][c] = x0 + opt.eps;
            const double fp = evaluate(f, probe);
            probe[k][c] = x0 - opt.eps;
            const double fm = evaluate(f, probe);
            probe[k][c] = x0;
            if (!std::isfinite(fp) || !std::isfinite(fm)) return res;
            const double numeric = (fp - fm) / (2.0 * opt.eps);
            const double a = analytic[k][c];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
            ++res.coords_checked;
        }
    }
    res.finite = true;
    res.max_rel_error = worst;
    return res;
}

GradCheckResult grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
    GradCheckOptions opt;
    opt.eps = eps;
    return grad_check([&f](Tape& t, const std::vector<Var>& v) { return f(t, v[0]); }, {x}, opt);
}

}  // namespace lgode::ad
