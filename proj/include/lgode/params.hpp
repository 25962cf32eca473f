#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lgode/autodiff.hpp"
#include "lgode/grad_check.hpp"

namespace lgode {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Named, ordered collection of trainable tensors.
class ParamSet {
public:
    using Handle = std::size_t;

    Handle add(std::string name, Tensor init);
    /// fan_in x fan_out weight, uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Handle add_weight(std::string name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
    Handle add_bias(std::string name, std::size_t width);

    std::size_t size() const { return params_.size(); }
    Param& operator[](Handle h) { return params_[h]; }
    const Param& operator[](Handle h) const { return params_[h]; }
    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }
    /// Handle of a named parameter; throws std::out_of_range when absent.
    Handle find(const std::string& name) const;
    std::size_t scalar_count() const;

    void zero_grad();
    double grad_norm() const;
    void scale_grad(double s);

    void save(const std::filesystem::path& path) const;
    /// Replaces values from a checkpoint. Every name and shape must match;
    /// otherwise throws with a line per mismatching record.
    void load(const std::filesystem::path& path);

private:
    std::vector<Param> params_;
};

/// Parameters bound as leaves on one tape.
class Bound {
public:
    Bound(ad::Tape& tape, const ParamSet& params);
    /// Uses caller-made nodes, one per parameter in ParamSet order.
    Bound(ad::Tape& tape, std::vector<ad::Var> vars) : tape_(&tape), vars_(std::move(vars)) {}
    ad::Var operator[](ParamSet::Handle h) const { return vars_[h]; }
    ad::Tape& tape() const { return *tape_; }
    /// Adds this tape's gradients into params' grad buffers.
    void accumulate_grads(ParamSet& params) const;

private:
    ad::Tape* tape_;
    std::vector<ad::Var> vars_;
};

/// Affine map x W + b with W stored fan_in x fan_out.
struct Linear {
    ParamSet::Handle weight = 0;
    ParamSet::Handle bias = 0;
    bool has_bias = true;

    static Linear create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out,
                         std::mt19937_64& rng, bool bias = true);
    ad::Var operator()(const Bound& b, ad::Var x) const;
};

/// Two affine maps with a relu between them.
struct Mlp {
    Linear first;
    Linear second;

    static Mlp create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                      std::mt19937_64& rng);
    ad::Var operator()(const Bound& b, ad::Var x) const;
};

/// Raw checkpoint records, for inspection and shape diffs.
struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<double> values;
};
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

struct ParamGradCheck {
    std::string name;
    ad::GradCheckResult result;
};

/// Finite-difference check of d loss / d param for each parameter in turn,
/// the others held as constants.
std::vector<ParamGradCheck> param_grad_check(const ParamSet& ps, const std::function<ad::Var(const Bound&)>& loss,
                                             const ad::GradCheckOptions& opt = {});
/// Largest error over a param_grad_check result; infinity if any check was non-finite.
double worst_error(const std::vector<ParamGradCheck>& checks);

inline constexpr char kCheckpointMagic[8] = {'L', 'G', 'O', 'D', 'E', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace lgode
