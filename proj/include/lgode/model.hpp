#pragma once

// The full model: encoder, latent graph ODE and decoder sharing one ParamSet.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lgode/encoder.hpp"
#include "lgode/graph_ode.hpp"
#include "lgode/tasks.hpp"

namespace lgode {

struct ModelConfig {
    EncoderConfig encoder;
    OdeConfig ode;

    /// Throws when encoder and ODE widths disagree.
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

class LgOde {
public:
    static LgOde create(const ModelConfig& cfg, std::uint64_t seed);
    /// Fresh model with parameters from a checkpoint; throws with a shape diff on mismatch.
    static LgOde load(const ModelConfig& cfg, const std::filesystem::path& checkpoint);

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const Encoder& encoder() const { return encoder_; }
    const GraphOde& ode() const { return ode_; }

private:
    ModelConfig cfg_;
    ParamSet params_;
    Encoder encoder_;
    GraphOde ode_;
};

/// A task sample with its conditioning graph built.
struct PreparedSample {
    TaskSample task;
    TemporalGraph graph;
};

PreparedSample prepare(const TaskSample& ts, double threshold);

/// Encoder, solver and decoder over several samples at once. Objects of all
/// samples are stacked; one solve runs on the union of their target times.
struct Rollout {
    Posterior posterior;
    ad::Var predictions;               // n_targets x D, in target order
    Tensor targets;                    // n_targets x D
    std::vector<std::uint32_t> target_object;  // stacked object index per target row
    std::vector<std::uint32_t> target_sample;  // sample index per target row
    std::size_t n_objects = 0;
};

/// eps (n_objects x latent) perturbs the posterior mean; null decodes the mean.
/// All samples must share t_start.
Rollout rollout(const Bound& b, const LgOde& model, std::span<const PreparedSample* const> samples, const Tensor* eps);

}  // namespace lgode
