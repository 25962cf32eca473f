#pragma once

// Test-set MSE for trained models and reference predictors, the experiment
// matrix and its CSV, and SVG trajectory plots.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgode/model.hpp"
#include "lgode/training.hpp"

namespace lgode {

/// One prediction block per sample, rows in target order (object, then time).
using Predictor = std::function<std::vector<Tensor>(std::span<const PreparedSample* const>)>;

/// Decodes posterior means, no sampling noise.
Predictor model_predictor(const LgOde& model);
Predictor zero_predictor();
/// Per object, the latest conditioning observation at or before the target
/// time; targets before the first conditioning point get the first point.
Predictor locf_predictor();
/// Returns the targets themselves.
Predictor oracle_predictor();

/// Targets of one sample in predictor row order.
Tensor target_matrix(const PreparedSample& s);

struct MseReport {
    double mse = 0.0;  // pooled over all (object, time, feature) entries
    double ci = 0.0;   // 1.96 * sd(per-sample mse) / sqrt(samples)
    std::size_t samples = 0;
    std::size_t entries = 0;
    std::vector<double> per_sample;
};

/// Evaluates in chunks of micro_batch samples sharing t_start. With a scale
/// record, errors are measured in de-normalized units.
MseReport evaluate(const Predictor& predict, std::span<const PreparedSample> samples, std::size_t micro_batch = 16,
                   const ScaleRecord* denormalize = nullptr);

/// Loads model.json and a checkpoint from a run directory; a shape mismatch
/// throws with the per-tensor diff.
LgOde load_run(const std::filesystem::path& run_dir, const std::string& checkpoint = "best.ckpt");

struct MatrixSpec {
    std::vector<Task> tasks{Task::interpolation, Task::extrapolation};
    std::vector<double> ratios{0.4, 0.6, 0.8};
    std::vector<std::string> variants{"full"};
    /// Adds rows for the zero and last-observation baselines.
    bool baselines = false;
    std::uint64_t seed = 0;
    std::size_t micro_batch = 16;
};

struct MatrixRow {
    Task task = Task::interpolation;
    double ratio = 0.0;
    std::string variant;
    double mse = 0.0;
    double ci = 0.0;
    std::uint64_t seed = 0;
};

struct MatrixCell {
    MatrixRow row;
    std::optional<MseReport> report;
    std::string error;  // empty on success
};

/// Supplies the trained model for a (task, variant) pair; may throw.
using ModelProvider = std::function<const LgOde&(Task, const std::string&)>;

/// Every (task, ratio, variant) cell on the same conditioning splits. A
/// failing cell records its error and the rest still run.
std::vector<MatrixCell> run_experiment_matrix(const MatrixSpec& spec, const Dataset& test,
                                              const ModelProvider& models);

inline constexpr const char* kMatrixCsvHeader = "task,ratio,variant,mse,ci,seed";
/// Successful cells only, doubles printed round-trip exact.
std::string matrix_csv(std::span<const MatrixCell> cells);
std::vector<MatrixRow> parse_matrix_csv(const std::string& text);
/// One line per cell, failures with their error.
std::string matrix_summary(std::span<const MatrixCell> cells);

/// Ground-truth targets against a dense predicted path, x/y features, one
/// colour per object.
struct TrajectoryPlot {
    std::string title;
    std::vector<std::vector<std::pair<double, double>>> truth;      // per object
    std::vector<std::vector<std::pair<double, double>>> observed;   // conditioning points
    std::vector<std::vector<std::pair<double, double>>> predicted;  // per object
};

TrajectoryPlot trajectory_plot(const LgOde& model, const PreparedSample& s, std::size_t dense_points = 200);
std::string render_svg(const TrajectoryPlot& plot);

/// MSE against observed ratio, one line per (task, variant).
std::string render_matrix_svg(std::span<const MatrixRow> rows);
/// Train and validation negative ELBO per epoch from a metrics.jsonl log.
std::string render_metrics_svg(const std::string& metrics_jsonl);

}  // namespace lgode
