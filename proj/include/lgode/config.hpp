#pragma once

// Declarative run configuration shared by the command-line tools.
//
// Schema (every key optional; absent keys keep their defaults):
// {
//   "output_root": "runs",
//   "data":   { "system": "spring"|"charged", "n_objects", "train_samples", "valid_samples",
//               "test_samples", "n_min", "n_max", "extension_observations", "seed",
//               "total_steps", "dt", "subsample_stride", "interaction_probability",
//               "box_half_width", "walls" },
//   "model":  { "encoder": { "hidden", "layers", "latent", "posterior_hidden", "variant", "te_scale" },
//               "ode": { "latent", "aux", "relation_hidden", "edge_dim", "object_hidden",
//                        "decoder_std", "densify" } },
//   "train":  { "task", "epochs", "batch_size", "micro_batch", "learning_rate", "kl_weight",
//               "clip_norm", "observed_ratios", "seed" },
//   "matrix": { "tasks", "ratios", "variants", "baselines", "seed", "micro_batch", "plot_samples" }
// }

#include <filesystem>
#include <optional>
#include <string>

#include "lgode/dataset.hpp"
#include "lgode/evaluation.hpp"
#include "lgode/training.hpp"

namespace lgode {

inline constexpr const char* kOutputRootEnv = "LGODE_OUTPUT_ROOT";

struct RunConfig {
    std::filesystem::path output_root = "runs";
    GenDataConfig data;
    TrainConfig train;
    MatrixSpec matrix;
    std::size_t plot_samples = 3;

    /// Applies the keys present in the JSON text on top of `base`. Unknown
    /// keys are rejected with their path.
    static RunConfig from_json(const std::string& text, RunConfig base);
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Precedence: explicit flag, then the environment variable, then the config.
std::filesystem::path resolve_output_root(const RunConfig& cfg, const std::optional<std::string>& flag);

}  // namespace lgode
