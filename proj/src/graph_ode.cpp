#include "lgode/graph_ode.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lgode {

using namespace ad;

OdeGraph OdeGraph::build(std::span<const sim::InteractionGraph* const> systems) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> rel, unrel;
    std::size_t off = 0;
    for (const auto* g : systems) {
        const std::size_t n = g->size();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                auto& dst = g->related(i, j) ? rel : unrel;
                dst.emplace_back(static_cast<std::uint32_t>(off + i), static_cast<std::uint32_t>(off + j));
            }
        off += n;
    }
    OdeGraph og;
    og.n_objects = off;
    auto r = std::make_shared<kernels::PairList>(kernels::PairList::build(off, rel));
    auto u = std::make_shared<kernels::PairList>(kernels::PairList::build(off, unrel));
    og.related_degree = Tensor(Shape{off, 1});
    og.unrelated_degree = Tensor(Shape{off, 1});
    for (std::size_t i = 0; i < off; ++i) {
        og.related_degree[i] = static_cast<double>(r->degree(i));
        og.unrelated_degree[i] = static_cast<double>(u->degree(i));
    }
    og.related = std::move(r);
    og.unrelated = std::move(u);
    return og;
}

OdeGraph OdeGraph::build(const sim::InteractionGraph& g) {
    const sim::InteractionGraph* one[] = {&g};
    return build(one);
}

GraphOde GraphOde::create(ParamSet& ps, const OdeConfig& cfg, std::mt19937_64& rng) {
    if (cfg.densify < 1) throw std::invalid_argument("OdeConfig: densify must be >= 1");
    if (!(cfg.decoder_std > 0.0)) throw std::invalid_argument("OdeConfig: decoder_std must be positive");
    GraphOde m;
    m.cfg_ = cfg;
    const std::size_t w = cfg.state_dim();
    m.rel0_ = Mlp::create(ps, "ode.rel0", 2 * w, cfg.relation_hidden, cfg.edge_dim, rng);
    m.rel1_ = Mlp::create(ps, "ode.rel1", 2 * w, cfg.relation_hidden, cfg.edge_dim, rng);
    m.obj_ = Mlp::create(ps, "ode.obj", cfg.edge_dim, cfg.object_hidden, w, rng);
    m.dec_ = Linear::create(ps, "dec", w, cfg.output_dim, rng);
    return m;
}

// sum_j mlp([z_i | z_j]). The first layer splits into z_i A + z_j B, so the
// pairwise part is a fused relu-sum and the second layer is applied once per
// object: sum_j (r_ij W2 + b2) = (sum_j r_ij) W2 + deg_i b2.
Var GraphOde::relation_sum(const Bound& b, const Mlp& mlp, const OdeGraph& g, Var z, int kind) const {
    const auto& pairs = kind == 0 ? g.related : g.unrelated;
    const Tensor& deg = kind == 0 ? g.related_degree : g.unrelated_degree;
    const std::size_t w = cfg_.state_dim();
    const Var w1 = b[mlp.first.weight];
    const Var p = add(matmul(z, slice_rows(w1, 0, w)), b[mlp.first.bias]);
    const Var q = matmul(z, slice_rows(w1, w, 2 * w));
    const Var s = pair_relu_sum(p, q, pairs);
    return add(matmul(s, b[mlp.second.weight]), matmul(b.tape().constant(deg), b[mlp.second.bias]));
}

Var GraphOde::derivative(const Bound& b, const OdeGraph& g, Var z) const {
    if (z.rows() != g.n_objects)
        throw ShapeError("ode derivative", "state has " + std::to_string(z.rows()) + " rows for " +
                                               std::to_string(g.n_objects) + " objects");
    const Var msg = add(relation_sum(b, rel0_, g, z, 0), relation_sum(b, rel1_, g, z, 1));
    return obj_(b, msg);
}

Var GraphOde::decode(const Bound& b, Var z) const { return dec_(b, z); }

double gaussian_log_norm(double sigma) { return -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi); }

Var GraphOde::log_likelihood(Var predicted, Var target) const {
    const double s = cfg_.decoder_std;
    const Var sq = sum(square(sub(target, predicted)));
    return add_scalar(scale(sq, -0.5 / (s * s)), static_cast<double>(target.value().size()) * gaussian_log_norm(s));
}

Var GraphOde::initial_state(Var mu, Var sigma, const Tensor* eps) const {
    Tape& tape = *mu.tape();
    Var z = mu;
    if (eps != nullptr) z = add(mu, mul(sigma, tape.constant(*eps)));
    if (cfg_.aux == 0) return z;
    const Var parts[] = {z, tape.constant(Tensor(Shape{mu.rows(), cfg_.aux}))};
    return concat_cols(parts);
}

namespace {

void check_times(double t0, std::span<const double> ts) {
    double prev = t0;
    for (double t : ts) {
        if (!(t >= prev)) throw std::invalid_argument("rk4_solve: query times must be sorted and >= t0");
        prev = t;
    }
}

}  // namespace

std::size_t rk4_evaluations(double t0, std::span<const double> query_times, std::size_t densify) {
    check_times(t0, query_times);
    std::size_t n = 0;
    double prev = t0;
    for (double t : query_times) {
        if (t > prev) n += 4 * densify;
        prev = t;
    }
    return n;
}

std::vector<Var> rk4_solve(const VectorField& f, Var z0, double t0, std::span<const double> query_times,
                           std::size_t densify) {
    if (densify < 1) throw std::invalid_argument("rk4_solve: densify must be >= 1");
    check_times(t0, query_times);
    std::vector<Var> out;
    out.reserve(query_times.size());
    Var z = z0;
    double t = t0;
    for (double target : query_times) {
        if (target > t) {
            const double span = target - t;
            const double base = t;
            for (std::size_t k = 0; k < densify; ++k) {
                // Sub-step endpoints are computed from the segment start so the
                // last one lands exactly on the query time.
                const double ta = base + span * static_cast<double>(k) / static_cast<double>(densify);
                const double tb = k + 1 == densify ? target : base + span * static_cast<double>(k + 1) / static_cast<double>(densify);
                const double h = tb - ta;
                const Var k1 = f(ta, z);
                const Var k2 = f(ta + 0.5 * h, add(z, scale(k1, 0.5 * h)));
                const Var k3 = f(ta + 0.5 * h, add(z, scale(k2, 0.5 * h)));
                const Var k4 = f(tb, add(z, scale(k3, h)));
                const Var incr = add(add(k1, k4), scale(add(k2, k3), 2.0));
                z = add(z, scale(incr, h / 6.0));
            }
            t = target;
        }
        out.push_back(z);
    }
    return out;
}

std::vector<Var> sample_trajectories(const Bound& b, const GraphOde& ode, const OdeGraph& g, Var mu, Var sigma,
                                     double t0, std::span<const double> query_times, std::mt19937_64* rng) {
    Tensor eps;
    if (rng != nullptr) {
        eps = Tensor(mu.shape());
        std::normal_distribution<double> n(0.0, 1.0);
        for (double& v : eps.values()) v = n(*rng);
    }
    const Var z0 = ode.initial_state(mu, sigma, rng != nullptr ? &eps : nullptr);
    const auto states = rk4_solve([&](double, Var z) { return ode.derivative(b, g, z); }, z0, t0, query_times,
                                  ode.config().densify);
    std::vector<Var> out;
    out.reserve(states.size());
    for (const Var& z : states) out.push_back(ode.decode(b, z));
    return out;
}

}  // namespace lgode
