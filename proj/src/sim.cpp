#include "lgode/sim.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lgode::sim {

std::string to_string(SystemKind k) { return k == SystemKind::spring ? "spring" : "charged"; }

SystemKind system_kind_from_string(const std::string& s) {
    if (s == "spring" || s == "springs") return SystemKind::spring;
    if (s == "charged") return SystemKind::charged;
    throw std::invalid_argument("unknown system kind '" + s + "' (expected spring|charged)");
}

void SimConfig::validate() const {
    if (n_objects < 1) throw std::invalid_argument("SimConfig: n_objects must be >= 1");
    if (total_steps < 1) throw std::invalid_argument("SimConfig: total_steps must be >= 1");
    if (subsample_stride < 1) throw std::invalid_argument("SimConfig: subsample_stride must be >= 1");
    if (!(interaction_probability >= 0.0 && interaction_probability <= 1.0))
        throw std::invalid_argument("SimConfig: interaction_probability must lie in [0,1]");
    if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be positive");
    if (!(box_half_width > 0.0)) throw std::invalid_argument("SimConfig: box_half_width must be positive");
    if (!(softening >= 0.0)) throw std::invalid_argument("SimConfig: softening must be non-negative");
}

InteractionGraph::InteractionGraph(std::size_t n) : n_(n), adj_(n * n, 0) {}

InteractionGraph InteractionGraph::complete(std::size_t n) {
    InteractionGraph g(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j);
    return g;
}

void InteractionGraph::add_edge(std::size_t i, std::size_t j) {
    if (i >= n_ || j >= n_) throw std::out_of_range("InteractionGraph: object id out of range");
    if (i == j) throw std::invalid_argument("InteractionGraph: self-loops are not allowed");
    adj_[i * n_ + j] = 1;
    adj_[j * n_ + i] = 1;
}

std::vector<std::size_t> InteractionGraph::neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_; ++j)
        if (related(i, j)) out.push_back(j);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> InteractionGraph::undirected_edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j)
            if (related(i, j)) out.emplace_back(i, j);
    return out;
}

std::size_t InteractionGraph::undirected_edge_count() const { return undirected_edges().size(); }

InteractionGraph InteractionGraph::permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != n_) throw std::invalid_argument("InteractionGraph::permuted: wrong permutation size");
    InteractionGraph g(n_);
    for (auto [i, j] : undirected_edges()) g.add_edge(perm[i], perm[j]);
    return g;
}

SystemSetup sample_setup(const SimConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(config.interaction_probability);
    const std::size_t n = config.n_objects;

    SystemSetup s;
    s.relations = InteractionGraph(n);
    if (config.kind == SystemKind::spring) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (coin(rng)) s.relations.add_edge(i, j);
    } else {
        for (std::size_t i = 0; i < n; ++i) s.charges.push_back(coin(rng) ? 1.0 : -1.0);
        // Relation = like charges (mutual repulsion).
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (s.charges[i] * s.charges[j] > 0.0) s.relations.add_edge(i, j);
    }
    s.initial.position.resize(n);
    s.initial.velocity.resize(n);
    for (auto& p : s.initial.position) p = {normal(rng) * config.init_position_std, normal(rng) * config.init_position_std};
    for (auto& v : s.initial.velocity) {
        Vec2 d{normal(rng), normal(rng)};
        const double norm = std::hypot(d[0], d[1]);
        v = norm > 0.0 ? Vec2{d[0] / norm * config.init_speed, d[1] / norm * config.init_speed} : Vec2{0.0, 0.0};
    }
    return s;
}

namespace {

void accelerations(const SimConfig& c, const SystemSetup& setup, const std::vector<Vec2>& x, std::vector<Vec2>& a) {
    const std::size_t n = x.size();
    for (auto& v : a) v = {0.0, 0.0};
    if (c.kind == SystemKind::spring) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!setup.relations.related(i, j)) continue;
                for (int d = 0; d < 2; ++d) {
                    const double f = -c.spring_constant * (x[i][d] - x[j][d]);
                    a[i][d] += f;
                    a[j][d] -= f;
                }
            }
        return;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i][0] - x[j][0], dy = x[i][1] - x[j][1];
            const double r = std::hypot(dx, dy);
            const double s = c.charge_constant * setup.charges[i] * setup.charges[j] / (r * r * r + c.softening);
            a[i][0] += s * dx;
            a[i][1] += s * dy;
            a[j][0] -= s * dx;
            a[j][1] -= s * dy;
        }
}

void record_diag(const SimConfig& c, const SystemSetup& setup, const ParticleState& s, SimDiagnostics* diag) {
    if (diag == nullptr) return;
    Vec2 p{0.0, 0.0};
    for (const auto& v : s.velocity) {
        p[0] += v[0];
        p[1] += v[1];
    }
    diag->momentum.push_back(p);
    diag->energy.push_back(c.kind == SystemKind::spring ? spring_energy(c, setup.relations, s) : 0.0);
}

// Mirror a coordinate back into [-L, L] and flip its velocity.
bool reflect(double& x, double& v, double L) {
    bool hit = false;
    while (x > L || x < -L) {
        x = x > L ? 2.0 * L - x : -2.0 * L - x;
        v = -v;
        hit = true;
    }
    return hit;
}

}  // namespace

double spring_energy(const SimConfig& config, const InteractionGraph& g, const ParticleState& s) {
    double e = 0.0;
    for (const auto& v : s.velocity) e += 0.5 * (v[0] * v[0] + v[1] * v[1]);
    for (auto [i, j] : g.undirected_edges()) {
        const double dx = s.position[i][0] - s.position[j][0], dy = s.position[i][1] - s.position[j][1];
        e += 0.5 * config.spring_constant * (dx * dx + dy * dy);
    }
    return e;
}

ParticleState leapfrog(const SimConfig& config, const SystemSetup& setup, const ParticleState& start,
                       std::size_t steps, SimDiagnostics* diag) {
    ParticleState s = start;
    const std::size_t n = s.position.size();
    std::vector<Vec2> a(n);
    accelerations(config, setup, s.position, a);
    const double h = config.dt;
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t i = 0; i < n; ++i)
            for (int d = 0; d < 2; ++d) {
                s.velocity[i][d] += 0.5 * h * a[i][d];
                s.position[i][d] += h * s.velocity[i][d];
                if (config.walls && reflect(s.position[i][d], s.velocity[i][d], config.box_half_width) &&
                    diag != nullptr)
                    ++diag->wall_reflections;
            }
        accelerations(config, setup, s.position, a);
        for (std::size_t i = 0; i < n; ++i)
            for (int d = 0; d < 2; ++d) s.velocity[i][d] += 0.5 * h * a[i][d];
        record_diag(config, setup, s, diag);
    }
    return s;
}

TrajectorySet simulate_from(const SimConfig& config, const SystemSetup& setup, SimDiagnostics* diag) {
    config.validate();
    const std::size_t n = config.n_objects;
    if (setup.initial.position.size() != n || setup.initial.velocity.size() != n || setup.relations.size() != n)
        throw std::invalid_argument("simulate_from: setup does not match n_objects");
    if (config.kind == SystemKind::charged && setup.charges.size() != n)
        throw std::invalid_argument("simulate_from: charged system needs one charge per object");

    TrajectorySet traj;
    traj.n_objects = n;
    traj.relations = setup.relations;
    traj.charges = setup.charges;
    const std::size_t points = config.grid_points();
    traj.times.reserve(points);
    traj.states.reserve(points * n * TrajectorySet::kFeatureDim);

    auto push = [&](const ParticleState& s, std::size_t step) {
        traj.times.push_back(static_cast<double>(step) * config.dt);
        for (std::size_t i = 0; i < n; ++i) {
            traj.states.push_back(s.position[i][0]);
            traj.states.push_back(s.position[i][1]);
            traj.states.push_back(s.velocity[i][0]);
            traj.states.push_back(s.velocity[i][1]);
        }
    };

    record_diag(config, setup, setup.initial, diag);
    ParticleState s = setup.initial;
    push(s, 0);
    for (std::size_t k = 1; k < points; ++k) {
        s = leapfrog(config, setup, s, config.subsample_stride, diag);
        push(s, k * config.subsample_stride);
    }
    return traj;
}

TrajectorySet simulate_springs(const SimConfig& config, SimDiagnostics* diag) {
    if (config.kind != SystemKind::spring) throw std::invalid_argument("simulate_springs: config.kind is not spring");
    return simulate_from(config, sample_setup(config), diag);
}

TrajectorySet simulate_charged(const SimConfig& config, SimDiagnostics* diag) {
    if (config.kind != SystemKind::charged) throw std::invalid_argument("simulate_charged: config.kind is not charged");
    return simulate_from(config, sample_setup(config), diag);
}

TrajectorySet simulate(const SimConfig& config, SimDiagnostics* diag) {
    return config.kind == SystemKind::spring ? simulate_springs(config, diag) : simulate_charged(config, diag);
}

}  // namespace lgode::sim
