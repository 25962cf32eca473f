#include "lgode/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "lgode/ops.hpp"

namespace lgode {

using namespace ad;

EncoderVariant EncoderVariant::from_string(const std::string& name) {
    EncoderVariant v;
    if (name == "full") return v;
    if (name == "first") {
        v.pooling = Pooling::first;
    } else if (name == "mean") {
        v.pooling = Pooling::mean;
    } else if (name == "no-att") {
        v.attention = false;
    } else if (name == "no-pe") {
        v.time_encoding = TimeEncoding::none;
    } else if (name == "fixed-pe") {
        v.time_encoding = TimeEncoding::fixed;
    } else {
        throw std::invalid_argument("unknown encoder variant '" + name + "'");
    }
    return v;
}

std::string EncoderVariant::name() const {
    for (const auto& n : variant_names())
        if (from_string(n) == *this) return n;
    return "custom";
}

std::vector<std::string> variant_names() { return {"full", "first", "mean", "no-att", "no-pe", "fixed-pe"}; }

Encoder Encoder::create(ParamSet& ps, const EncoderConfig& cfg, std::mt19937_64& rng) {
    if (cfg.hidden < 2 || cfg.hidden % 2 != 0) throw std::invalid_argument("Encoder: hidden width must be even");
    if (cfg.latent < 1) throw std::invalid_argument("Encoder: latent width must be positive");
    Encoder e;
    e.cfg_ = cfg;
    const std::size_t d = cfg.hidden;
    e.embed_ = Linear::create(ps, "enc.embed", cfg.input_dim, d, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string p = "enc.layer" + std::to_string(l) + ".";
        Layer L;
        L.wt = ps.add_weight(p + "wt", d + 1, d, rng);
        L.wq = ps.add_weight(p + "wq", d, d, rng);
        L.wk_self = ps.add_weight(p + "wk_self", d, d, rng);
        L.wk_nbr = ps.add_weight(p + "wk_nbr", d, d, rng);
        L.wv_self = ps.add_weight(p + "wv_self", d, d, rng);
        L.wv_nbr = ps.add_weight(p + "wv_nbr", d, d, rng);
        e.layers_.push_back(L);
    }
    e.pool_wt_ = ps.add_weight("enc.pool.wt", d + 1, d, rng);
    e.pool_wa_ = ps.add_weight("enc.pool.wa", d, d, rng);
    e.head_ = Mlp::create(ps, "enc.posterior", d, cfg.posterior_hidden, 2 * cfg.latent, rng);
    return e;
}

Var Encoder::embed(const Bound& b, const TemporalGraph& g) const {
    return embed_(b, b.tape().constant(g.feature_matrix()));
}

// relu([h | dt] W_t) + TE(dt) for the rows of h selected by `rows`. W_t is
// split so the d x d product runs once per distinct row of h.
Var Encoder::time_transform(const Bound& b, ParamSet::Handle wt, Var h, const std::vector<double>& dt,
                            const Index& rows) const {
    Tape& tape = b.tape();
    const std::size_t d = cfg_.hidden;
    const auto mode = cfg_.variant.time_encoding;
    auto te = [&] {
        Tensor t = temporal_encode(dt, d);
        if (cfg_.te_scale != 1.0)
            for (double& v : t.storage()) v *= cfg_.te_scale;
        return tape.constant(std::move(t));
    };
    if (mode == TimeEncoding::fixed) return add(gather_rows(h, rows), te());
    const Var w = b[wt];
    const Var hw = gather_rows(matmul(h, slice_rows(w, 0, d)), rows);
    const Var dtw = matmul(tape.constant(Tensor(Shape{dt.size(), 1}, dt)), slice_rows(w, d, d + 1));
    const Var act = relu(add(hw, dtw));
    if (mode == TimeEncoding::none) return act;
    return add(act, te());
}

Var Encoder::layer(const Bound& b, const TemporalGraph& g, Var h, std::size_t l, EncoderTrace* trace) const {
    Tape& tape = b.tape();
    const Layer& L = layers_.at(l);
    const std::size_t n = g.n_nodes(), E = g.n_edges(), d = cfg_.hidden;
    if (E == 0) {
        if (trace) {
            trace->attention.emplace_back(Shape{0, 1});
            trace->layer_output.push_back(h.value());
        }
        return h;
    }

    std::vector<std::uint32_t> by_kind(E);
    for (std::size_t e = 0; e < E; ++e)
        by_kind[e] = g.edge_dst[e] + (g.edge_kind[e] == EdgeKind::neighbor ? static_cast<std::uint32_t>(n) : 0u);
    const Index src = make_index(g.edge_src);
    const Index dst = make_index(g.edge_dst);
    const Index dst_kind = make_index(std::move(by_kind));

    const Var hs = time_transform(b, L.wt, h, g.edge_dt, src);

    Var alpha;
    if (cfg_.variant.attention) {
        // key . query = (h_s W_k) . (h_t W_q) = h_s . (h_t W_q W_k^T), so keys never
        // need to be formed per edge.
        const Var q = matmul(h, b[L.wq]);
        const Var qk_self = matmul(q, transpose(b[L.wk_self]));
        const Var qk_nbr = matmul(q, transpose(b[L.wk_nbr]));
        const Var qk[] = {qk_self, qk_nbr};
        const Var scores = scale(row_dot(hs, gather_rows(concat_rows(qk), dst_kind)), 1.0 / std::sqrt(double(d)));
        alpha = segment_softmax(scores, dst, n);
    } else {
        std::vector<double> deg(n, 0.0);
        for (auto t : g.edge_dst) deg[t] += 1.0;
        Tensor w(Shape{E, 1});
        for (std::size_t e = 0; e < E; ++e) w[e] = 1.0 / deg[g.edge_dst[e]];
        alpha = tape.constant(std::move(w));
    }

    // Values are linear, so aggregate per (target, kind) first and project after.
    const Var pooled = segment_sum(scale_rows(hs, alpha), dst_kind, 2 * n);
    const Var msg = add(matmul(slice_rows(pooled, 0, n), b[L.wv_self]), matmul(slice_rows(pooled, n, 2 * n), b[L.wv_nbr]));
    const Var out = add(h, relu(msg));
    if (trace) {
        trace->attention.push_back(alpha.value());
        trace->layer_output.push_back(out.value());
    }
    return out;
}

Var Encoder::aggregate(const Bound& b, const TemporalGraph& g, Var h) const {
    Tape& tape = b.tape();
    const std::size_t n = g.n_nodes(), N = g.n_objects;
    const auto counts = g.object_counts();
    for (std::size_t i = 0; i < N; ++i)
        if (counts[i] == 0) throw std::invalid_argument("Encoder: object " + std::to_string(i) + " has no observations");

    std::vector<double> dt(n);
    std::vector<std::uint32_t> all(n);
    for (std::size_t k = 0; k < n; ++k) {
        dt[k] = g.node_time[k] - g.t_start;
        all[k] = static_cast<std::uint32_t>(k);
    }
    const Var hh = time_transform(b, pool_wt_, h, dt, make_index(std::move(all)));

    if (cfg_.variant.pooling == Pooling::first) {
        std::vector<std::uint32_t> first(N);
        for (std::size_t k = n; k-- > 0;) first[g.node_object[k]] = static_cast<std::uint32_t>(k);
        return gather_rows(hh, make_index(std::move(first)));
    }

    const Index obj = make_index(g.node_object);
    Tensor inv(Shape{N, 1});
    for (std::size_t i = 0; i < N; ++i) inv[i] = 1.0 / static_cast<double>(counts[i]);
    const Var inv_count = tape.constant(std::move(inv));
    const Var mean_h = scale_rows(segment_sum(hh, obj, N), inv_count);
    if (cfg_.variant.pooling == Pooling::mean) return mean_h;

    const Var a = tanh(matmul(mean_h, b[pool_wa_]));
    const Var gate = sigmoid(row_dot(gather_rows(a, obj), hh));
    return scale_rows(segment_sum(scale_rows(hh, gate), obj, N), inv_count);
}

Posterior Encoder::posterior(const Bound& b, Var u) const {
    const Var out = head_(b, u);
    const std::size_t z = cfg_.latent;
    return {slice_cols(out, 0, z), add_scalar(softplus(slice_cols(out, z, 2 * z)), 1e-6)};
}

Posterior Encoder::encode(const Bound& b, const TemporalGraph& g, EncoderTrace* trace) const {
    Var h = embed(b, g);
    for (std::size_t l = 0; l < layers_.size(); ++l) h = layer(b, g, h, l, trace);
    const Var u = aggregate(b, g, h);
    if (trace) trace->pooled = u.value();
    return posterior(b, u);
}

}  // namespace lgode
