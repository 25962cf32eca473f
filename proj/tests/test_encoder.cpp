#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "lgode/encoder.hpp"
#include "test_util.hpp"

using namespace lgode;
using namespace lgode::ad;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Model {
    ParamSet ps;
    Encoder enc;
};

Model make_model(EncoderConfig cfg, std::uint64_t seed) {
    Model m;
    std::mt19937_64 rng(seed);
    m.enc = Encoder::create(m.ps, cfg, rng);
    return m;
}

EncoderConfig small(std::string variant = "full") {
    EncoderConfig c;
    c.hidden = 8;
    c.latent = 3;
    c.posterior_hidden = 10;
    c.variant = EncoderVariant::from_string(variant);
    return c;
}

ObservationSet random_obs(std::size_t n, std::size_t k, const sim::InteractionGraph& rel, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<std::size_t> count(1, k);
    ObservationSet obs;
    obs.relations = rel;
    obs.objects.resize(n);
    for (auto& o : obs.objects) {
        const std::size_t kk = count(rng);
        for (std::size_t j = 0; j < kk; ++j) o.times.push_back((static_cast<double>(j) + 0.5 * (u(rng) + 1.0) * 0.9) / kk);
        for (std::size_t j = 0; j < kk * obs.feature_dim; ++j) o.features.push_back(u(rng));
    }
    return obs;
}

sim::InteractionGraph random_relations(std::size_t n, std::uint64_t seed) {
    sim::SimConfig c;
    c.n_objects = n;
    c.seed = seed;
    return sim::sample_setup(c).relations;
}

Tensor encode_mean(const Model& m, const TemporalGraph& g, Tensor* stddev = nullptr, EncoderTrace* trace = nullptr) {
    Tape t;
    Bound b(t, m.ps);
    const Posterior p = m.enc.encode(b, g, trace);
    if (stddev) *stddev = p.stddev.value();
    return p.mean.value();
}

void zero(ParamSet& ps, ParamSet::Handle h) { ps[h].value.fill(0.0); }

// Sum of entries weighted by a fixed random matrix, so no gradient cancels by symmetry.
// Composite checks use a larger step: some attention gradients are ~1e-8, where
// a 1e-5 central difference is dominated by round-off in the loss.
GradCheckOptions composite() {
    GradCheckOptions o;
    o.eps = 1e-4;
    return o;
}

Var weighted_sum(Var x, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(x, x.tape()->constant(testing::random_tensor(x.shape(), rng))));
}

}  // namespace

TEST_CASE("variant names round trip") {
    for (const auto& n : variant_names()) CHECK(EncoderVariant::from_string(n).name() == n);
    CHECK_THROWS_AS(EncoderVariant::from_string("bogus"), std::invalid_argument);
}

TEST_CASE("time-aware transform") {
    Model m = make_model(small(), 1);
    const auto wt = m.enc.layers()[0].wt;
    std::mt19937_64 rng(2);
    const Tensor h = testing::random_tensor({1, 8}, rng);
    const Index row = make_index({0});

    auto transform = [&](const ParamSet& ps, double dt) {
        Tape t;
        Bound b(t, ps);
        return m.enc.time_transform(b, wt, t.constant(h), {dt}, row).value();
    };
    ParamSet zeroed = m.ps;
    zero(zeroed, wt);
    CHECK(max_abs_diff(transform(zeroed, 0.0), Tensor(Shape{1, 8}, temporal_encode(0.0, 8))) == 0.0);
    CHECK(max_abs_diff(transform(m.ps, 0.1), transform(m.ps, 0.2)) > 1e-6);

    const auto checks = param_grad_check(m.ps, [&](const Bound& b) {
        return weighted_sum(m.enc.time_transform(b, wt, b.tape().constant(h), {0.1}, row), 5);
    });
    for (const auto& c : checks)
        if (c.name == "enc.layer0.wt") CHECK(c.result.passed(1e-5));
}

TEST_CASE("attention weights") {
    SUBCASE("single incident edge gets weight one") {
        sim::InteractionGraph rel(2);
        rel.add_edge(0, 1);
        ObservationSet obs;
        obs.relations = rel;
        obs.objects.resize(2);
        obs.objects[0] = {{0.1}, {1, 2, 3, 4}};
        obs.objects[1] = {{0.3}, {4, 3, 2, 1}};
        Model m = make_model(small(), 3);
        EncoderTrace tr;
        encode_mean(m, build_temporal_graph(obs, kInf, 0.0), nullptr, &tr);
        for (const auto& a : tr.attention) {
            REQUIRE(a.size() == 2);
            CHECK(a[0] == 1.0);
            CHECK(a[1] == 1.0);
        }
    }
    SUBCASE("identical keys give uniform weights") {
        Model m = make_model(small(), 4);
        for (const auto& L : m.enc.layers()) {
            zero(m.ps, L.wk_self);
            zero(m.ps, L.wk_nbr);
        }
        const auto g = build_temporal_graph(random_obs(3, 5, random_relations(3, 1), 5), kInf, 0.0);
        EncoderTrace tr;
        encode_mean(m, g, nullptr, &tr);
        std::vector<double> deg(g.n_nodes(), 0.0);
        for (auto d : g.edge_dst) deg[d] += 1.0;
        for (std::size_t e = 0; e < g.n_edges(); ++e) CHECK(tr.attention[0][e] == doctest::Approx(1.0 / deg[g.edge_dst[e]]));

        // no-att with equal keys reproduces the attention model.
        EncoderConfig na = small("no-att");
        Model m2 = make_model(na, 4);
        m2.ps = m.ps;
        CHECK(max_abs_diff(encode_mean(m, g), encode_mean(m2, g)) < 1e-14);
    }
    SUBCASE("weights sum to one on random graphs") {
        for (std::uint64_t s = 0; s < 10; ++s) {
            Model m = make_model(small(), 10 + s);
            const auto g = build_temporal_graph(random_obs(4, 6, random_relations(4, s), s), 0.5, 0.0);
            EncoderTrace tr;
            encode_mean(m, g, nullptr, &tr);
            for (const auto& a : tr.attention) {
                std::vector<double> total(g.n_nodes(), 0.0);
                for (std::size_t e = 0; e < g.n_edges(); ++e) total[g.edge_dst[e]] += a[e];
                for (std::size_t k = 0; k < g.n_nodes(); ++k)
                    if (total[k] != 0.0) CHECK(std::abs(total[k] - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("gnn layer") {
    SUBCASE("isolated node keeps its input") {
        sim::InteractionGraph rel(2);
        ObservationSet obs;
        obs.relations = rel;
        obs.objects.resize(2);
        obs.objects[0] = {{0.1}, {1, 2, 3, 4}};
        obs.objects[1] = {{0.2, 0.4}, {4, 3, 2, 1, 0, 1, 0, 1}};
        const auto g = build_temporal_graph(obs, kInf, 0.0);
        Model m = make_model(small(), 6);
        Tape t;
        Bound b(t, m.ps);
        const Var h0 = m.enc.embed(b, g);
        const Var h1 = m.enc.layer(b, g, h0, 0);
        for (std::size_t c = 0; c < 8; ++c) CHECK(h1.value()(0, c) == h0.value()(0, c));
    }
    SUBCASE("zero value weights leave the embeddings unchanged") {
        Model m = make_model(small(), 7);
        for (const auto& L : m.enc.layers()) {
            zero(m.ps, L.wv_self);
            zero(m.ps, L.wv_nbr);
        }
        const auto g = build_temporal_graph(random_obs(3, 4, random_relations(3, 2), 8), kInf, 0.0);
        Tape t;
        Bound b(t, m.ps);
        const Var h0 = m.enc.embed(b, g);
        Var h = h0;
        for (std::size_t l = 0; l < 2; ++l) h = m.enc.layer(b, g, h, l);
        CHECK(max_abs_diff(h.value(), h0.value()) == 0.0);
    }
    SUBCASE("gradient check on a 3-object toy graph") {
        Model m = make_model(small(), 8);
        ObservationSet obs = random_obs(3, 2, sim::InteractionGraph::complete(3), 9);
        const auto g = build_temporal_graph(obs, kInf, 0.0);
        const auto checks = param_grad_check(m.ps, [&](const Bound& b) {
            return weighted_sum(m.enc.layer(b, g, m.enc.embed(b, g), 0), 11);
        }, composite());
        CHECK(worst_error(checks) < 1e-4);
    }
}

TEST_CASE("sequence aggregation") {
    sim::InteractionGraph rel(1);
    ObservationSet obs;
    obs.relations = rel;
    obs.objects.resize(1);
    obs.objects[0] = {{0.3}, {0.5, -0.2, 0.1, 0.7}};
    const auto g = build_temporal_graph(obs, kInf, 0.0);

    SUBCASE("single observation, full pooling") {
        Model m = make_model(small(), 12);
        Tape t;
        Bound b(t, m.ps);
        const Var h = m.enc.embed(b, g);
        const Var hh = m.enc.time_transform(b, m.enc.pooling_wt(), h, {0.3}, make_index({0}));
        const Var u = m.enc.aggregate(b, g, h);
        const Tensor a = tanh(matmul(hh, b[m.enc.pooling_wa()])).value();
        double dot = 0.0;
        for (std::size_t c = 0; c < 8; ++c) dot += a[c] * hh.value()[c];
        const double gate = 1.0 / (1.0 + std::exp(-dot));
        for (std::size_t c = 0; c < 8; ++c) CHECK(u.value()[c] == doctest::Approx(gate * hh.value()[c]).epsilon(1e-14));
    }
    SUBCASE("first and mean agree for one observation") {
        Model f = make_model(small("first"), 13);
        Model mn = make_model(small("mean"), 13);
        CHECK(max_abs_diff(encode_mean(f, g), encode_mean(mn, g)) == 0.0);
    }
    SUBCASE("shift invariance follows t - t_start") {
        Model m = make_model(small(), 14);
        const ObservationSet base = random_obs(3, 4, random_relations(3, 3), 15);
        ObservationSet shifted = base;
        for (auto& o : shifted.objects)
            for (double& t : o.times) t += 0.25;
        shifted.horizon_end += 0.25;
        auto pooled = [&](const ObservationSet& o, double t0) {
            EncoderTrace tr;
            encode_mean(m, build_temporal_graph(o, kInf, t0), nullptr, &tr);
            return tr.pooled;
        };
        CHECK(max_abs_diff(pooled(base, 0.0), pooled(shifted, 0.25)) < 1e-12);
        CHECK(max_abs_diff(pooled(base, 0.0), pooled(shifted, 0.0)) > 1e-6);
    }
    SUBCASE("gradient check through pooling") {
        Model m = make_model(small(), 16);
        const auto g3 = build_temporal_graph(random_obs(3, 3, random_relations(3, 4), 17), kInf, 0.1);
        const auto checks = param_grad_check(m.ps, [&](const Bound& b) {
            return weighted_sum(m.enc.aggregate(b, g3, m.enc.embed(b, g3)), 18);
        }, composite());
        CHECK(worst_error(checks) < 1e-4);
    }
    SUBCASE("object without observations is rejected") {
        ObservationSet two;
        two.relations = sim::InteractionGraph(2);
        two.objects.resize(2);
        two.objects[0] = obs.objects[0];
        Model m = make_model(small(), 19);
        CHECK_THROWS_AS(encode_mean(m, build_temporal_graph(two, kInf, 0.0)), std::invalid_argument);
    }
}

TEST_CASE("posterior head") {
    Model m = make_model(small(), 20);
    std::mt19937_64 rng(21);
    const Tensor u = testing::random_tensor({2, 8}, rng);
    {
        ParamSet z = m.ps;
        for (auto& p : z.all()) p.value.fill(0.0);
        Tape t;
        Bound b(t, z);
        const Posterior p = m.enc.posterior(b, t.constant(u));
        for (double v : p.mean.value().values()) CHECK(v == 0.0);
        for (double v : p.stddev.value().values()) CHECK(v == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-15));
    }
    for (std::uint64_t s = 0; s < 1000; ++s) {
        std::mt19937_64 r(s);
        ParamSet draw = m.ps;
        for (auto& p : draw.all()) p.value = testing::random_tensor(p.value.shape(), r, -3.0, 3.0);
        Tape t;
        Bound b(t, draw);
        const Posterior p = m.enc.posterior(b, t.constant(testing::random_tensor({2, 8}, r, -5.0, 5.0)));
        for (double v : p.stddev.value().values()) REQUIRE(v > 0.0);
    }
    const auto checks = param_grad_check(m.ps, [&](const Bound& b) {
        const Posterior p = m.enc.posterior(b, b.tape().constant(u));
        return add(weighted_sum(p.mean, 22), weighted_sum(p.stddev, 23));
    });
    CHECK(worst_error(checks) < 1e-5);
}

TEST_CASE("encode_all") {
    SUBCASE("disconnected components do not interact") {
        sim::InteractionGraph rel(3);
        rel.add_edge(0, 1);
        ObservationSet obs = random_obs(3, 4, rel, 30);
        Model m = make_model(small(), 31);
        const Tensor before = encode_mean(m, build_temporal_graph(obs, kInf, 0.0));
        for (double& v : obs.objects[2].features) v += 0.5;
        const Tensor after = encode_mean(m, build_temporal_graph(obs, kInf, 0.0));
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t c = 0; c < 3; ++c) CHECK(after(i, c) == before(i, c));
        CHECK(std::abs(after(2, 0) - before(2, 0)) > 0.0);
    }
    SUBCASE("variants that change the output") {
        const auto g = build_temporal_graph(random_obs(3, 4, random_relations(3, 5), 32), kInf, 0.0);
        const Tensor full = encode_mean(make_model(small(), 33), g);
        for (const auto& v : variant_names()) {
            if (v == "full") continue;
            CAPTURE(v);
            CHECK(max_abs_diff(encode_mean(make_model(small(v), 33), g), full) > 1e-8);
        }
    }
    SUBCASE("zero TE scale equals no-pe") {
        const auto g = build_temporal_graph(random_obs(3, 4, random_relations(3, 6), 34), kInf, 0.0);
        EncoderConfig c = small();
        c.te_scale = 0.0;
        CHECK(max_abs_diff(encode_mean(make_model(c, 35), g), encode_mean(make_model(small("no-pe"), 35), g)) == 0.0);
    }
    SUBCASE("end-to-end gradient check") {
        for (const auto& v : variant_names()) {
            Model m = make_model(small(v), 36);
            const auto g = build_temporal_graph(random_obs(3, 3, random_relations(3, 7), 37), 0.6, 0.0);
            const auto checks = param_grad_check(m.ps, [&](const Bound& b) {
                const Posterior p = m.enc.encode(b, g);
                return add(weighted_sum(p.mean, 38), weighted_sum(p.stddev, 39));
            }, composite());
            CAPTURE(v);
            CHECK(worst_error(checks) < 1e-4);
        }
    }
}

TEST_CASE("object relabeling permutes posteriors") {
    std::mt19937_64 rng(40);
    for (std::size_t n = 3; n <= 5; ++n) {
        EncoderConfig cfg;
        Model m = make_model(cfg, 41 + n);
        const ObservationSet obs = random_obs(n, 6, random_relations(n, n), 42 + n);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ObservationSet p = obs;
        p.relations = obs.relations.permuted(perm);
        for (std::size_t i = 0; i < n; ++i) p.objects[perm[i]] = obs.objects[i];
        Tensor s0, s1;
        const Tensor m0 = encode_mean(m, build_temporal_graph(obs, 0.7, 0.0), &s0);
        const Tensor m1 = encode_mean(m, build_temporal_graph(p, 0.7, 0.0), &s1);
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < cfg.latent; ++c) {
                worst = std::max(worst, std::abs(m0(i, c) - m1(perm[i], c)));
                worst = std::max(worst, std::abs(s0(i, c) - s1(perm[i], c)));
            }
        CAPTURE(n);
        CHECK(worst < 1e-10);
    }
}
