#pragma once

// Interpolation and extrapolation task splits. All times here are already
// rescaled so the observed horizon is [0, 1].

#include <cstdint>
#include <string>

#include "lgode/dataset.hpp"
#include "lgode/observations.hpp"
#include "lgode/temporal_graph.hpp"

namespace lgode {

enum class Task { interpolation, extrapolation };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

/// Encoder input, prediction targets and the time the ODE starts from.
struct TaskSample {
    ObservationSet conditioning;
    ObservationSet targets;
    double t_start = 0.0;
};

/// Per object, a uniform random subset of ceil(ratio * T_i) observations, kept sorted.
ObservationSet subsample_ratio(const ObservationSet& obs, double ratio, std::uint64_t seed);

/// Conditioning is a ratio subset, targets are every observation, t_start is
/// the horizon start.
TaskSample make_interpolation_split(const ObservationSet& obs, double ratio, std::uint64_t seed);

/// Conditioning is a ratio subset of the first part, targets are all of the
/// second part. Requires every conditioning time < t_start <= every target time.
TaskSample make_extrapolation_split(const ObservationSet& first, const ObservationSet& second, double ratio,
                                    std::uint64_t seed, double t_start);

/// Builds the task sample for one dataset sample. Training extrapolation splits
/// the observed horizon at its midpoint; test extrapolation conditions on the
/// whole observed horizon and targets the extension horizon.
TaskSample prepare_task(const Sample& s, Task task, double ratio, std::uint64_t seed, bool test_mode);

/// Window threshold for the dataset's sequence-length range at this ratio.
double task_threshold(const GenDataConfig& data, double ratio);

/// The temporal graph of the conditioning set.
TemporalGraph conditioning_graph(const TaskSample& ts, double threshold);

}  // namespace lgode
