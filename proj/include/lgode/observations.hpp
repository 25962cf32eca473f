#pragma once

#include <cstdint>
#include <vector>

#include "lgode/sim.hpp"

namespace lgode {

/// Irregularly-timed observations of one object. Times are strictly increasing.
struct ObjectSeries {
    std::vector<double> times;
    std::vector<double> features;  // times.size() x feature_dim

    std::size_t size() const { return times.size(); }
};

/// Per-object observation lists plus the static relation graph. Objects may
/// have different numbers of observations.
struct ObservationSet {
    std::size_t feature_dim = sim::TrajectorySet::kFeatureDim;
    std::vector<ObjectSeries> objects;
    sim::InteractionGraph relations;
    double horizon_begin = 0.0;
    double horizon_end = 1.0;

    std::size_t n_objects() const { return objects.size(); }
    std::size_t total_observations() const;
    const double* feature(std::size_t obj, std::size_t k) const {
        return objects[obj].features.data() + k * feature_dim;
    }
    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;
    /// Sorted union of all objects' timestamps.
    std::vector<double> union_times() const;
};

/// For each object independently: n ~ U{n_min..n_max}, then n distinct grid
/// indices from [grid_begin, grid_end) uniformly without replacement, sorted.
/// grid_end = 0 means the end of the trajectory.
ObservationSet subsample_irregular(const sim::TrajectorySet& traj, std::size_t n_min, std::size_t n_max,
                                   std::uint64_t seed, std::size_t grid_begin = 0, std::size_t grid_end = 0);

/// Per-feature divisors; dividing by `scale[d]` maps dimension d to max-abs 1.
struct ScaleRecord {
    std::vector<double> scale;
    std::vector<bool> degenerate;  // dimension was all zeros; scale kept at 1
};

/// Divides every feature dimension by its max-abs over all given sets.
ScaleRecord normalize_features(std::vector<sim::TrajectorySet*> sets);
ScaleRecord normalize_features(std::vector<sim::TrajectorySet>& sets);
void denormalize_features(sim::TrajectorySet& set, const ScaleRecord& rec);
void denormalize_features(ObservationSet& obs, const ScaleRecord& rec);

/// Affine map of timestamps with the observation set's declared horizon onto [0, 1].
ObservationSet rescale_times(const ObservationSet& obs);
/// Same map using an explicit reference horizon, so times outside it land
/// outside [0, 1] (extrapolation test data rescaled with the training horizon).
ObservationSet rescale_times(const ObservationSet& obs, double ref_begin, double ref_end);

/// Keeps only observations with begin <= t < end (end inclusive when `include_end`).
ObservationSet restrict_times(const ObservationSet& obs, double begin, double end, bool include_end = false);

}  // namespace lgode
