#pragma once

// Ground-truth particle systems in a 2D box, integrated with kick-drift-kick
// leapfrog. Every function here is a pure function of its config and seed.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lgode::sim {

enum class SystemKind { spring, charged };

std::string to_string(SystemKind k);
SystemKind system_kind_from_string(const std::string& s);

struct SimConfig {
    std::size_t n_objects = 5;
    double box_half_width = 5.0;
    double dt = 0.001;
    std::size_t total_steps = 6000;
    std::size_t subsample_stride = 100;
    /// Spring systems: probability of each undirected edge. Charged systems:
    /// probability that a particle carries charge +1.
    double interaction_probability = 0.5;
    SystemKind kind = SystemKind::spring;
    std::uint64_t seed = 0;

    double spring_constant = 0.1;
    double charge_constant = 1.0;
    double softening = 1e-3;
    double init_position_std = 0.5;
    double init_speed = 0.5;
    bool walls = true;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    std::size_t grid_points() const { return total_steps / subsample_stride; }
};

/// Static relation set over n objects. Stored as a symmetric adjacency matrix.
class InteractionGraph {
public:
    InteractionGraph() = default;
    explicit InteractionGraph(std::size_t n);

    static InteractionGraph complete(std::size_t n);

    std::size_t size() const { return n_; }
    /// Adds <i,j> and <j,i>. Self-loops and out-of-range ids are rejected.
    void add_edge(std::size_t i, std::size_t j);
    bool related(std::size_t i, std::size_t j) const { return adj_[i * n_ + j] != 0; }
    std::vector<std::size_t> neighbors(std::size_t i) const;
    /// Unordered pairs (i < j).
    std::vector<std::pair<std::size_t, std::size_t>> undirected_edges() const;
    std::size_t undirected_edge_count() const;

    /// Same relations with object ids relabeled: new id of old object k is perm[k].
    InteractionGraph permuted(const std::vector<std::size_t>& perm) const;
    bool operator==(const InteractionGraph&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> adj_;
};

using Vec2 = std::array<double, 2>;

struct ParticleState {
    std::vector<Vec2> position;
    std::vector<Vec2> velocity;
};

/// Dense, uniformly sampled trajectories. Feature vector per object is
/// (x, y, vx, vy).
struct TrajectorySet {
    static constexpr std::size_t kFeatureDim = 4;

    std::vector<double> times;
    std::size_t n_objects = 0;
    /// times.size() x n_objects x 4, row-major.
    std::vector<double> states;
    InteractionGraph relations;
    std::vector<double> charges;  // empty for springs

    double* feature(std::size_t t, std::size_t obj) { return states.data() + (t * n_objects + obj) * kFeatureDim; }
    const double* feature(std::size_t t, std::size_t obj) const {
        return states.data() + (t * n_objects + obj) * kFeatureDim;
    }
};

/// Quantities recorded by the integrator on every step.
struct SimDiagnostics {
    std::vector<double> energy;        // kinetic + spring potential (springs only)
    std::vector<Vec2> momentum;        // total momentum
    std::size_t wall_reflections = 0;
};

/// Initial conditions and relations drawn from config.seed.
struct SystemSetup {
    InteractionGraph relations;
    std::vector<double> charges;
    ParticleState initial;
};
SystemSetup sample_setup(const SimConfig& config);

TrajectorySet simulate_springs(const SimConfig& config, SimDiagnostics* diag = nullptr);
TrajectorySet simulate_charged(const SimConfig& config, SimDiagnostics* diag = nullptr);
/// Dispatches on config.kind.
TrajectorySet simulate(const SimConfig& config, SimDiagnostics* diag = nullptr);
/// Integrates from an explicit setup; grid states are recorded every
/// subsample_stride steps starting from step 0.
TrajectorySet simulate_from(const SimConfig& config, const SystemSetup& setup, SimDiagnostics* diag = nullptr);

/// Raw leapfrog integration without recording, for reversibility checks.
ParticleState leapfrog(const SimConfig& config, const SystemSetup& setup, const ParticleState& start,
                       std::size_t steps, SimDiagnostics* diag = nullptr);

double spring_energy(const SimConfig& config, const InteractionGraph& g, const ParticleState& s);

}  // namespace lgode::sim
