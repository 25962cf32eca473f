#include "lgode/observations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lgode {

std::size_t ObservationSet::total_observations() const {
    std::size_t n = 0;
    for (const auto& o : objects) n += o.size();
    return n;
}

void ObservationSet::validate() const {
    if (relations.size() != objects.size())
        throw std::invalid_argument("ObservationSet: relation graph covers " + std::to_string(relations.size()) +
                                    " objects, have " + std::to_string(objects.size()));
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        if (o.features.size() != o.times.size() * feature_dim)
            throw std::invalid_argument("ObservationSet: object " + std::to_string(i) + " feature buffer size mismatch");
        for (std::size_t k = 0; k < o.times.size(); ++k) {
            if (k > 0 && !(o.times[k] > o.times[k - 1]))
                throw std::invalid_argument("ObservationSet: object " + std::to_string(i) +
                                            " timestamps not strictly increasing");
            if (o.times[k] < horizon_begin || o.times[k] > horizon_end)
                throw std::invalid_argument("ObservationSet: object " + std::to_string(i) + " timestamp " +
                                            std::to_string(o.times[k]) + " outside horizon");
        }
    }
}

std::vector<double> ObservationSet::union_times() const {
    std::vector<double> all;
    for (const auto& o : objects) all.insert(all.end(), o.times.begin(), o.times.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

ObservationSet subsample_irregular(const sim::TrajectorySet& traj, std::size_t n_min, std::size_t n_max,
                                   std::uint64_t seed, std::size_t grid_begin, std::size_t grid_end) {
    if (grid_end == 0) grid_end = traj.times.size();
    if (grid_begin >= grid_end || grid_end > traj.times.size())
        throw std::invalid_argument("subsample_irregular: invalid grid range");
    const std::size_t available = grid_end - grid_begin;
    if (n_min > n_max) throw std::invalid_argument("subsample_irregular: n_min > n_max");
    if (n_min > available)
        throw std::invalid_argument("subsample_irregular: n_min " + std::to_string(n_min) + " exceeds " +
                                    std::to_string(available) + " grid points");
    if (n_max > available)
        throw std::invalid_argument("subsample_irregular: n_max " + std::to_string(n_max) + " exceeds " +
                                    std::to_string(available) + " grid points");

    constexpr std::size_t D = sim::TrajectorySet::kFeatureDim;
    std::mt19937_64 rng(seed);
    ObservationSet obs;
    obs.feature_dim = D;
    obs.relations = traj.relations;
    // The grid point at index k stands for the interval [t_k, t_k + spacing).
    const double spacing = traj.times.size() > 1 ? traj.times[1] - traj.times[0] : 1.0;
    obs.horizon_begin = traj.times[grid_begin];
    obs.horizon_end = traj.times[grid_begin] + static_cast<double>(available) * spacing;
    obs.objects.resize(traj.n_objects);
    std::vector<std::size_t> idx(available);
    for (std::size_t i = 0; i < traj.n_objects; ++i) {
        std::uniform_int_distribution<std::size_t> count(n_min, n_max);
        const std::size_t n = count(rng);
        std::iota(idx.begin(), idx.end(), grid_begin);
        // Partial Fisher-Yates: the first n slots become a uniform n-subset.
        for (std::size_t k = 0; k < n; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, available - 1);
            std::swap(idx[k], idx[pick(rng)]);
        }
        std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
        std::sort(chosen.begin(), chosen.end());
        auto& series = obs.objects[i];
        for (std::size_t g : chosen) {
            series.times.push_back(traj.times[g]);
            const double* f = traj.feature(g, i);
            series.features.insert(series.features.end(), f, f + D);
        }
    }
    return obs;
}

ScaleRecord normalize_features(std::vector<sim::TrajectorySet*> sets) {
    if (sets.empty()) throw std::invalid_argument("normalize_features: no input");
    constexpr std::size_t D = sim::TrajectorySet::kFeatureDim;
    ScaleRecord rec;
    rec.scale.assign(D, 0.0);
    rec.degenerate.assign(D, false);
    for (const auto* s : sets)
        for (std::size_t k = 0; k < s->states.size(); ++k)
            rec.scale[k % D] = std::max(rec.scale[k % D], std::abs(s->states[k]));
    for (std::size_t d = 0; d < D; ++d)
        if (rec.scale[d] == 0.0) {
            rec.scale[d] = 1.0;
            rec.degenerate[d] = true;
        }
    for (auto* s : sets)
        for (std::size_t k = 0; k < s->states.size(); ++k) s->states[k] /= rec.scale[k % D];
    return rec;
}

ScaleRecord normalize_features(std::vector<sim::TrajectorySet>& sets) {
    std::vector<sim::TrajectorySet*> ptrs;
    for (auto& s : sets) ptrs.push_back(&s);
    return normalize_features(ptrs);
}

void denormalize_features(sim::TrajectorySet& set, const ScaleRecord& rec) {
    const std::size_t D = rec.scale.size();
    for (std::size_t k = 0; k < set.states.size(); ++k) set.states[k] *= rec.scale[k % D];
}

void denormalize_features(ObservationSet& obs, const ScaleRecord& rec) {
    if (rec.scale.size() != obs.feature_dim) throw std::invalid_argument("denormalize_features: dimension mismatch");
    for (auto& o : obs.objects)
        for (std::size_t k = 0; k < o.features.size(); ++k) o.features[k] *= rec.scale[k % obs.feature_dim];
}

ObservationSet rescale_times(const ObservationSet& obs, double ref_begin, double ref_end) {
    const double len = ref_end - ref_begin;
    if (!(len > 0.0)) throw std::invalid_argument("rescale_times: zero-length horizon");
    ObservationSet out = obs;
    auto map = [&](double t) { return (t - ref_begin) / len; };
    for (auto& o : out.objects)
        for (double& t : o.times) t = map(t);
    out.horizon_begin = map(obs.horizon_begin);
    out.horizon_end = map(obs.horizon_end);
    return out;
}

ObservationSet rescale_times(const ObservationSet& obs) {
    return rescale_times(obs, obs.horizon_begin, obs.horizon_end);
}

ObservationSet restrict_times(const ObservationSet& obs, double begin, double end, bool include_end) {
    ObservationSet out;
    out.feature_dim = obs.feature_dim;
    out.relations = obs.relations;
    out.horizon_begin = begin;
    out.horizon_end = end;
    out.objects.resize(obs.n_objects());
    for (std::size_t i = 0; i < obs.n_objects(); ++i) {
        const auto& src = obs.objects[i];
        for (std::size_t k = 0; k < src.size(); ++k) {
            const double t = src.times[k];
            if (t < begin || t > end || (t == end && !include_end)) continue;
            out.objects[i].times.push_back(t);
            const double* f = obs.feature(i, k);
            out.objects[i].features.insert(out.objects[i].features.end(), f, f + obs.feature_dim);
        }
    }
    return out;
}

}  // namespace lgode
