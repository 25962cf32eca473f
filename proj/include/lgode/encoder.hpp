#pragma once

// Temporal-graph encoder: attention GNN over observation nodes, temporal
// self-attention pooling toward the system start time, and a Gaussian
// posterior head over each object's initial latent state.

#include <random>
#include <string>
#include <vector>

#include "lgode/ops.hpp"
#include "lgode/params.hpp"
#include "lgode/temporal_graph.hpp"

namespace lgode {

enum class Pooling { full, first, mean };
enum class TimeEncoding { learned, none, fixed };

/// Model variant switches. Named presets: full, first, mean, no-att, no-pe, fixed-pe.
struct EncoderVariant {
    Pooling pooling = Pooling::full;
    bool attention = true;
    TimeEncoding time_encoding = TimeEncoding::learned;

    static EncoderVariant from_string(const std::string& name);
    std::string name() const;
    bool operator==(const EncoderVariant&) const = default;
};

std::vector<std::string> variant_names();

struct EncoderConfig {
    std::size_t input_dim = 4;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t latent = 16;
    std::size_t posterior_hidden = 128;
    EncoderVariant variant;
    /// Multiplier on the sinusoidal term; 0 turns it off while keeping the learned path.
    double te_scale = 1.0;
};

struct Posterior {
    ad::Var mean;   // n_objects x latent
    ad::Var stddev; // n_objects x latent, strictly positive
};

/// Optional record of intermediate values for inspection in tests.
struct EncoderTrace {
    std::vector<Tensor> attention;  // per layer, n_edges x 1
    std::vector<Tensor> layer_output;
    Tensor pooled;
};

class Encoder {
public:
    struct Layer {
        ParamSet::Handle wt, wq, wk_self, wk_nbr, wv_self, wv_nbr;
    };

    static Encoder create(ParamSet& ps, const EncoderConfig& cfg, std::mt19937_64& rng);

    const EncoderConfig& config() const { return cfg_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Layer-0 embedding of the node features.
    ad::Var embed(const Bound& b, const TemporalGraph& g) const;
    /// One propagation step. Nodes without incoming edges keep their input.
    ad::Var layer(const Bound& b, const TemporalGraph& g, ad::Var h, std::size_t l, EncoderTrace* trace = nullptr) const;
    /// Per-object sequence vector, n_objects x hidden.
    ad::Var aggregate(const Bound& b, const TemporalGraph& g, ad::Var h) const;
    Posterior posterior(const Bound& b, ad::Var u) const;
    /// Full pass; throws std::invalid_argument when an object has no observations.
    Posterior encode(const Bound& b, const TemporalGraph& g, EncoderTrace* trace = nullptr) const;

    /// Time-aware transform of the rows of h picked by `rows`, each shifted by
    /// its dt: relu([h | dt] W_t) + TE(dt), or the variant's replacement.
    ad::Var time_transform(const Bound& b, ParamSet::Handle wt, ad::Var h, const std::vector<double>& dt,
                           const ad::Index& rows) const;
    ParamSet::Handle pooling_wt() const { return pool_wt_; }
    ParamSet::Handle pooling_wa() const { return pool_wa_; }

private:

    EncoderConfig cfg_;
    Linear embed_;
    std::vector<Layer> layers_;
    ParamSet::Handle pool_wt_ = 0, pool_wa_ = 0;
    Mlp head_;
};

}  // namespace lgode
