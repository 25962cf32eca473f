#pragma once

// ELBO objective and the training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lgode/dataset.hpp"
#include "lgode/model.hpp"
#include "lgode/optim.hpp"

namespace lgode {

/// KL(N(mu, sigma) || N(0, I)) summed over all entries, 1x1.
ad::Var kl_diag_gaussian(ad::Var mu, ad::Var sigma);
double kl_diag_gaussian(const Tensor& mu, const Tensor& sigma);

struct ElboReport {
    double elbo = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double kl_weight = 1.0;
    std::size_t n_samples = 0;
    std::size_t n_observations = 0;
    std::vector<double> object_reconstruction;  // per stacked object
    std::vector<double> object_kl;
};

struct ElboResult {
    ad::Var elbo;  // 1x1, differentiable
    ElboReport report;
};

/// Single-sample reparameterized ELBO: reconstruction log-likelihood at the
/// observed targets minus kl_weight times the KL of the initial latent states.
/// eps (n_objects x latent) is the frozen noise.
ElboResult elbo(const Bound& b, const LgOde& model, std::span<const PreparedSample* const> samples, const Tensor& eps,
                double kl_weight);

/// Standard-normal noise of the posterior's shape for these samples.
Tensor draw_noise(std::span<const PreparedSample* const> samples, std::size_t latent, std::mt19937_64& rng);

struct TrainConfig {
    ModelConfig model;
    Task task = Task::interpolation;
    /// Each sample draws its conditioning ratio from this list every epoch.
    std::vector<double> observed_ratios{0.4, 0.6, 0.8};
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    /// Samples per solve; gradients of a batch accumulate over its micro-batches.
    std::size_t micro_batch = 16;
    double learning_rate = 5e-4;
    double kl_weight = 1.0;
    double clip_norm = 10.0;
    std::uint64_t seed = 0;
    /// Empty disables all file output.
    std::filesystem::path out_dir;
    bool verbose = false;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    std::string split;
    double elbo = 0.0;  // per sample
    double reconstruction = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;  // mean pre-clip norm over steps, train only
    std::size_t skipped_steps = 0;
    double wall_seconds = 0.0;  // not part of the deterministic log

    std::string to_json() const;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double best_valid_elbo = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

/// Trains in place. Writes metrics.jsonl, timing.jsonl, model.json, best.ckpt
/// and last.ckpt into out_dir when it is set. On a non-finite loss the model
/// is restored to the last good parameters and training stops.
TrainResult train(LgOde& model, const Dataset& train_set, const Dataset* valid_set, const TrainConfig& cfg);

/// Mean per-sample ELBO over a dataset at fixed noise, without gradients.
ElboReport evaluate_elbo(const LgOde& model, const std::vector<PreparedSample>& samples, std::size_t micro_batch,
                         double kl_weight, std::uint64_t noise_seed);

/// Deterministic task samples for a split, cycling through the ratios.
std::vector<PreparedSample> prepare_split(const Dataset& ds, Task task, std::span<const double> ratios,
                                          std::uint64_t seed, bool test_mode);

}  // namespace lgode
