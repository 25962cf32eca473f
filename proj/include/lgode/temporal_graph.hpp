#pragma once

// Observation-level temporal graph: one node per observation, directed edges
// between observations of related objects and between observations of the
// same object, filtered by a time window.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lgode/observations.hpp"
#include "lgode/tensor.hpp"

namespace lgode {

struct WindowThreshold {
    double value = 0.0;
    bool clamped = false;  // formula went negative and was raised to 0
};

/// (max_len - min_len * observed_ratio) / max_len, clamped at 0.
WindowThreshold window_threshold(double max_len, double min_len, double observed_ratio);

enum class EdgeKind : std::uint8_t { self_temporal = 0, neighbor = 1 };

struct TemporalGraph {
    std::size_t n_objects = 0;
    std::size_t feature_dim = 0;
    double t_start = 0.0;
    double threshold = 0.0;

    // Nodes are ordered by object, then by time.
    std::vector<std::uint32_t> node_object;
    std::vector<double> node_time;
    std::vector<double> features;  // n_nodes x feature_dim

    // Edges are ordered by target node, then by source node.
    std::vector<std::uint32_t> edge_src;
    std::vector<std::uint32_t> edge_dst;
    std::vector<double> edge_dt;  // t(dst) - t(src)
    std::vector<EdgeKind> edge_kind;

    std::size_t n_nodes() const { return node_object.size(); }
    std::size_t n_edges() const { return edge_src.size(); }
    std::size_t count(EdgeKind kind) const;
    /// Observations per object.
    std::vector<std::size_t> object_counts() const;
    Tensor feature_matrix() const;

    /// Throws std::invalid_argument on a broken structural invariant.
    void validate() const;
    /// Line-oriented node and edge tables.
    void dump(std::ostream& os) const;
};

/// Edges with |dt| > threshold are dropped. Pass infinity to keep all.
TemporalGraph build_temporal_graph(const ObservationSet& obs, double threshold, double t_start);

/// Disjoint union: objects, nodes and edges are renumbered with offsets in
/// argument order. t_start and threshold are taken from the first graph.
TemporalGraph merge_graphs(std::span<const TemporalGraph* const> graphs);

/// Sinusoidal encoding: entry 2i is sin(dt / 10000^(2i/d)), entry 2i+1 the cosine.
std::vector<double> temporal_encode(double dt, std::size_t d);
/// One encoding per row.
Tensor temporal_encode(std::span<const double> dts, std::size_t d);

}  // namespace lgode
