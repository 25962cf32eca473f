#pragma once

// Generative half of the model: a graph-network vector field over all
// objects' latent states, a fixed-step RK4 solver recorded on the tape, and
// a Gaussian decoder.

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "lgode/kernels.hpp"
#include "lgode/ops.hpp"
#include "lgode/params.hpp"
#include "lgode/sim.hpp"

namespace lgode {

struct OdeConfig {
    std::size_t latent = 16;
    std::size_t aux = 64;
    std::size_t relation_hidden = 128;
    std::size_t edge_dim = 128;
    std::size_t object_hidden = 128;
    std::size_t output_dim = 4;
    double decoder_std = 0.1;
    std::size_t densify = 5;

    std::size_t state_dim() const { return latent + aux; }
};

/// Pair lists for one solve. Several systems can share a solve; pairs never
/// cross system boundaries.
struct OdeGraph {
    std::size_t n_objects = 0;
    std::shared_ptr<const kernels::PairList> related;
    std::shared_ptr<const kernels::PairList> unrelated;  // j != i, not related
    Tensor related_degree;                               // n x 1
    Tensor unrelated_degree;

    static OdeGraph build(std::span<const sim::InteractionGraph* const> systems);
    static OdeGraph build(const sim::InteractionGraph& g);
};

class GraphOde {
public:
    static GraphOde create(ParamSet& ps, const OdeConfig& cfg, std::mt19937_64& rng);

    const OdeConfig& config() const { return cfg_; }
    const Mlp& relation(int kind) const { return kind == 0 ? rel0_ : rel1_; }
    const Mlp& object_mlp() const { return obj_; }
    const Linear& decoder() const { return dec_; }

    /// dZ/dt for Z (n x state_dim).
    ad::Var derivative(const Bound& b, const OdeGraph& g, ad::Var z) const;
    /// Predicted observations, one row per row of z.
    ad::Var decode(const Bound& b, ad::Var z) const;
    /// Gaussian log density of targets under the decoder, summed over all entries.
    ad::Var log_likelihood(ad::Var predicted, ad::Var target) const;

    /// z0 = mu + sigma * eps with zero auxiliary columns appended. A null eps
    /// uses the mean.
    ad::Var initial_state(ad::Var mu, ad::Var sigma, const Tensor* eps) const;

private:
    ad::Var relation_sum(const Bound& b, const Mlp& mlp, const OdeGraph& g, ad::Var z, int kind) const;

    OdeConfig cfg_;
    Mlp rel0_, rel1_, obj_;
    Linear dec_;
};

using VectorField = std::function<ad::Var(double t, ad::Var z)>;

/// Classical RK4 from (t0, z0) through each query time, with densify - 1
/// equal sub-steps inserted between consecutive grid points. Returns the state
/// at every query time. Query times must be non-decreasing and >= t0.
std::vector<ad::Var> rk4_solve(const VectorField& f, ad::Var z0, double t0, std::span<const double> query_times,
                               std::size_t densify);

/// Number of derivative evaluations rk4_solve performs.
std::size_t rk4_evaluations(double t0, std::span<const double> query_times, std::size_t densify);

/// Log density of N(0, sigma^2) at a zero residual, per scalar.
double gaussian_log_norm(double sigma);

/// Encoder posterior to decoded observations at each query time.
std::vector<ad::Var> sample_trajectories(const Bound& b, const GraphOde& ode, const OdeGraph& g, ad::Var mu,
                                         ad::Var sigma, double t0, std::span<const double> query_times,
                                         std::mt19937_64* rng);

}  // namespace lgode
