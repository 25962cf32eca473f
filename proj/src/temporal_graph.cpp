#include "lgode/temporal_graph.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lgode {

WindowThreshold window_threshold(double max_len, double min_len, double observed_ratio) {
    if (!(max_len > 0.0)) throw std::invalid_argument("window_threshold: max_len must be positive");
    if (!(observed_ratio > 0.0 && observed_ratio <= 1.0))
        throw std::invalid_argument("window_threshold: observed_ratio must lie in (0, 1]");
    const double v = (max_len - min_len * observed_ratio) / max_len;
    if (v < 0.0) return {0.0, true};
    return {v, false};
}

std::size_t TemporalGraph::count(EdgeKind kind) const {
    std::size_t n = 0;
    for (EdgeKind k : edge_kind) n += k == kind ? 1 : 0;
    return n;
}

std::vector<std::size_t> TemporalGraph::object_counts() const {
    std::vector<std::size_t> c(n_objects, 0);
    for (auto o : node_object) ++c[o];
    return c;
}

Tensor TemporalGraph::feature_matrix() const { return Tensor(Shape{n_nodes(), feature_dim}, features); }

void TemporalGraph::validate() const {
    const std::size_t n = n_nodes();
    if (node_time.size() != n || features.size() != n * feature_dim)
        throw std::invalid_argument("TemporalGraph: node table sizes disagree");
    const std::size_t e = n_edges();
    if (edge_dst.size() != e || edge_dt.size() != e || edge_kind.size() != e)
        throw std::invalid_argument("TemporalGraph: edge table sizes disagree");
    for (std::size_t i = 0; i < n; ++i)
        if (node_object[i] >= n_objects) throw std::invalid_argument("TemporalGraph: node object id out of range");
    for (std::size_t k = 0; k < e; ++k) {
        const auto s = edge_src[k], d = edge_dst[k];
        if (s >= n || d >= n) throw std::invalid_argument("TemporalGraph: edge endpoint out of range");
        const bool same = node_object[s] == node_object[d];
        if (same != (edge_kind[k] == EdgeKind::self_temporal))
            throw std::invalid_argument("TemporalGraph: edge kind disagrees with endpoints");
        if (std::abs(edge_dt[k]) > threshold) throw std::invalid_argument("TemporalGraph: edge outside window");
    }
}

void TemporalGraph::dump(std::ostream& os) const {
    const auto old_flags = os.flags();
    const auto old_prec = os.precision();
    os << std::setprecision(17);
    os << "temporal_graph objects " << n_objects << " nodes " << n_nodes() << " edges " << n_edges() << " t_start "
       << t_start << " threshold " << threshold << "\n";
    os << "# node object time features...\n";
    for (std::size_t i = 0; i < n_nodes(); ++i) {
        os << "node " << i << " " << node_object[i] << " " << node_time[i];
        for (std::size_t d = 0; d < feature_dim; ++d) os << " " << features[i * feature_dim + d];
        os << "\n";
    }
    os << "# edge src dst dt kind\n";
    for (std::size_t k = 0; k < n_edges(); ++k)
        os << "edge " << k << " " << edge_src[k] << " " << edge_dst[k] << " " << edge_dt[k] << " "
           << (edge_kind[k] == EdgeKind::self_temporal ? "self" : "nbr") << "\n";
    os.flags(old_flags);
    os.precision(old_prec);
}

TemporalGraph build_temporal_graph(const ObservationSet& obs, double threshold, double t_start) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("build_temporal_graph: threshold must be >= 0");
    if (obs.total_observations() == 0) throw std::invalid_argument("build_temporal_graph: empty observation set");
    obs.validate();

    TemporalGraph g;
    g.n_objects = obs.n_objects();
    g.feature_dim = obs.feature_dim;
    g.t_start = t_start;
    g.threshold = threshold;
    std::vector<std::size_t> first(g.n_objects + 1, 0);
    for (std::size_t i = 0; i < g.n_objects; ++i) {
        first[i] = g.n_nodes();
        const auto& o = obs.objects[i];
        for (std::size_t k = 0; k < o.size(); ++k) {
            g.node_object.push_back(static_cast<std::uint32_t>(i));
            g.node_time.push_back(o.times[k]);
        }
        g.features.insert(g.features.end(), o.features.begin(), o.features.end());
    }
    first[g.n_objects] = g.n_nodes();

    for (std::size_t dst = 0; dst < g.n_nodes(); ++dst) {
        const std::size_t j = g.node_object[dst];
        for (std::size_t i = 0; i < g.n_objects; ++i) {
            const bool same = i == j;
            if (!same && !obs.relations.related(i, j)) continue;
            for (std::size_t src = first[i]; src < first[i + 1]; ++src) {
                if (src == dst) continue;
                const double dt = g.node_time[dst] - g.node_time[src];
                if (std::abs(dt) > threshold) continue;
                g.edge_src.push_back(static_cast<std::uint32_t>(src));
                g.edge_dst.push_back(static_cast<std::uint32_t>(dst));
                g.edge_dt.push_back(dt);
                g.edge_kind.push_back(same ? EdgeKind::self_temporal : EdgeKind::neighbor);
            }
        }
    }
    return g;
}

TemporalGraph merge_graphs(std::span<const TemporalGraph* const> graphs) {
    if (graphs.empty()) throw std::invalid_argument("merge_graphs: no graphs");
    TemporalGraph m;
    m.feature_dim = graphs.front()->feature_dim;
    m.t_start = graphs.front()->t_start;
    m.threshold = graphs.front()->threshold;
    for (const TemporalGraph* g : graphs) {
        if (g->feature_dim != m.feature_dim) throw std::invalid_argument("merge_graphs: feature widths differ");
        const auto obj_off = static_cast<std::uint32_t>(m.n_objects);
        const auto node_off = static_cast<std::uint32_t>(m.n_nodes());
        for (auto o : g->node_object) m.node_object.push_back(o + obj_off);
        m.node_time.insert(m.node_time.end(), g->node_time.begin(), g->node_time.end());
        m.features.insert(m.features.end(), g->features.begin(), g->features.end());
        for (auto s : g->edge_src) m.edge_src.push_back(s + node_off);
        for (auto d : g->edge_dst) m.edge_dst.push_back(d + node_off);
        m.edge_dt.insert(m.edge_dt.end(), g->edge_dt.begin(), g->edge_dt.end());
        m.edge_kind.insert(m.edge_kind.end(), g->edge_kind.begin(), g->edge_kind.end());
        m.n_objects += g->n_objects;
        m.threshold = std::max(m.threshold, g->threshold);
    }
    return m;
}

std::vector<double> temporal_encode(double dt, std::size_t d) {
    if (d < 2 || d % 2 != 0)
        throw std::invalid_argument("temporal_encode: dimension must be even and >= 2, got " + std::to_string(d));
    std::vector<double> te(d);
    for (std::size_t i = 0; i < d / 2; ++i) {
        const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
        te[2 * i] = std::sin(dt / freq);
        te[2 * i + 1] = std::cos(dt / freq);
    }
    return te;
}

Tensor temporal_encode(std::span<const double> dts, std::size_t d) {
    Tensor out(Shape{dts.size(), d});
    for (std::size_t r = 0; r < dts.size(); ++r) {
        const auto te = temporal_encode(dts[r], d);
        std::copy(te.begin(), te.end(), out.row_span(r).begin());
    }
    return out;
}

}  // namespace lgode
