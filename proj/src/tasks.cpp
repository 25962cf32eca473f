#include "lgode/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lgode {

std::string to_string(Task t) { return t == Task::interpolation ? "interpolation" : "extrapolation"; }

Task task_from_string(const std::string& s) {
    if (s == "interpolation" || s == "interp") return Task::interpolation;
    if (s == "extrapolation" || s == "extrap") return Task::extrapolation;
    throw std::invalid_argument("unknown task '" + s + "' (expected interpolation|extrapolation)");
}

ObservationSet subsample_ratio(const ObservationSet& obs, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("observed ratio must lie in (0, 1]");
    std::mt19937_64 rng(seed);
    ObservationSet out = obs;
    for (std::size_t i = 0; i < obs.n_objects(); ++i) {
        const auto& src = obs.objects[i];
        const std::size_t T = src.size();
        // The small slack keeps products like 0.4 * 50 from rounding up to 21.
        const auto keep = std::min(T, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(T) - 1e-9)));
        std::vector<std::size_t> idx(T);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t k = 0; k < keep; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, T - 1);
            std::swap(idx[k], idx[pick(rng)]);
        }
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        ObjectSeries s;
        for (std::size_t k : idx) {
            s.times.push_back(src.times[k]);
            const double* f = obs.feature(i, k);
            s.features.insert(s.features.end(), f, f + obs.feature_dim);
        }
        out.objects[i] = std::move(s);
    }
    return out;
}

TaskSample make_interpolation_split(const ObservationSet& obs, double ratio, std::uint64_t seed) {
    TaskSample ts;
    ts.conditioning = subsample_ratio(obs, ratio, seed);
    ts.targets = obs;
    ts.t_start = obs.horizon_begin;
    return ts;
}

TaskSample make_extrapolation_split(const ObservationSet& first, const ObservationSet& second, double ratio,
                                    std::uint64_t seed, double t_start) {
    if (first.total_observations() == 0 || second.total_observations() == 0)
        throw std::invalid_argument("extrapolation split: both halves must be non-empty");
    for (const auto& o : first.objects)
        for (double t : o.times)
            if (!(t < t_start)) throw std::invalid_argument("extrapolation split: conditioning time not before t_start");
    for (const auto& o : second.objects)
        for (double t : o.times)
            if (t < t_start) throw std::invalid_argument("extrapolation split: target time before t_start");
    TaskSample ts;
    ts.conditioning = subsample_ratio(first, ratio, seed);
    ts.targets = second;
    ts.t_start = t_start;
    return ts;
}

TaskSample prepare_task(const Sample& s, Task task, double ratio, std::uint64_t seed, bool test_mode) {
    const double b = s.observed.horizon_begin, e = s.observed.horizon_end;
    const ObservationSet obs = rescale_times(s.observed, b, e);
    if (task == Task::interpolation) return make_interpolation_split(obs, ratio, seed);
    if (test_mode) {
        if (!s.has_extension) throw std::invalid_argument("extrapolation test needs samples with an extension horizon");
        return make_extrapolation_split(obs, rescale_times(s.extension, b, e), ratio, seed, obs.horizon_end);
    }
    const double mid = 0.5 * (obs.horizon_begin + obs.horizon_end);
    return make_extrapolation_split(restrict_times(obs, obs.horizon_begin, mid, false),
                                    restrict_times(obs, mid, obs.horizon_end, true), ratio, seed, mid);
}

double task_threshold(const GenDataConfig& data, double ratio) {
    return window_threshold(static_cast<double>(data.n_max), static_cast<double>(data.n_min), ratio).value;
}

TemporalGraph conditioning_graph(const TaskSample& ts, double threshold) {
    return build_temporal_graph(ts.conditioning, threshold, ts.t_start);
}

}  // namespace lgode
