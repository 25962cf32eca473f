#include "lgode/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace lgode {

using namespace ad;

void ModelConfig::validate() const {
    if (encoder.latent != ode.latent) throw std::invalid_argument("ModelConfig: encoder and ODE latent widths differ");
    if (encoder.input_dim != ode.output_dim)
        throw std::invalid_argument("ModelConfig: encoder input and decoder output widths differ");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j = {
        {"encoder",
         {{"input_dim", encoder.input_dim},
          {"hidden", encoder.hidden},
          {"layers", encoder.layers},
          {"latent", encoder.latent},
          {"posterior_hidden", encoder.posterior_hidden},
          {"variant", encoder.variant.name()},
          {"te_scale", encoder.te_scale}}},
        {"ode",
         {{"latent", ode.latent},
          {"aux", ode.aux},
          {"relation_hidden", ode.relation_hidden},
          {"edge_dim", ode.edge_dim},
          {"object_hidden", ode.object_hidden},
          {"output_dim", ode.output_dim},
          {"decoder_std", ode.decoder_std},
          {"densify", ode.densify}}}};
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    const auto& e = j.at("encoder");
    c.encoder.input_dim = e.at("input_dim");
    c.encoder.hidden = e.at("hidden");
    c.encoder.layers = e.at("layers");
    c.encoder.latent = e.at("latent");
    c.encoder.posterior_hidden = e.at("posterior_hidden");
    c.encoder.variant = EncoderVariant::from_string(e.at("variant").get<std::string>());
    c.encoder.te_scale = e.at("te_scale");
    const auto& o = j.at("ode");
    c.ode.latent = o.at("latent");
    c.ode.aux = o.at("aux");
    c.ode.relation_hidden = o.at("relation_hidden");
    c.ode.edge_dim = o.at("edge_dim");
    c.ode.object_hidden = o.at("object_hidden");
    c.ode.output_dim = o.at("output_dim");
    c.ode.decoder_std = o.at("decoder_std");
    c.ode.densify = o.at("densify");
    c.validate();
    return c;
}

LgOde LgOde::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    LgOde m;
    m.cfg_ = cfg;
    std::mt19937_64 rng(seed);
    m.encoder_ = Encoder::create(m.params_, cfg.encoder, rng);
    m.ode_ = GraphOde::create(m.params_, cfg.ode, rng);
    return m;
}

LgOde LgOde::load(const ModelConfig& cfg, const std::filesystem::path& checkpoint) {
    LgOde m = create(cfg, 0);
    m.params_.load(checkpoint);
    return m;
}

PreparedSample prepare(const TaskSample& ts, double threshold) { return {ts, conditioning_graph(ts, threshold)}; }

Rollout rollout(const Bound& b, const LgOde& model, std::span<const PreparedSample* const> samples, const Tensor* eps) {
    if (samples.empty()) throw std::invalid_argument("rollout: no samples");
    Tape& tape = b.tape();
    const double t0 = samples.front()->task.t_start;
    std::vector<const TemporalGraph*> graphs;
    std::vector<const sim::InteractionGraph*> relations;
    std::vector<double> times;
    for (const PreparedSample* s : samples) {
        if (s->task.t_start != t0) throw std::invalid_argument("rollout: samples in one solve must share t_start");
        graphs.push_back(&s->graph);
        relations.push_back(&s->task.targets.relations);
        for (const auto& o : s->task.targets.objects) times.insert(times.end(), o.times.begin(), o.times.end());
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    const TemporalGraph merged = merge_graphs(graphs);
    const OdeGraph og = OdeGraph::build(relations);
    if (merged.n_objects != og.n_objects) throw std::invalid_argument("rollout: target and conditioning objects differ");

    Rollout r;
    r.n_objects = og.n_objects;
    r.posterior = model.encoder().encode(b, merged);
    if (eps != nullptr && eps->shape() != r.posterior.mean.shape())
        throw ShapeError("rollout noise", eps->shape(), r.posterior.mean.shape());
    const GraphOde& ode = model.ode();
    const Var z0 = ode.initial_state(r.posterior.mean, r.posterior.stddev, eps);
    const auto states =
        rk4_solve([&](double, Var z) { return ode.derivative(b, og, z); }, z0, t0, times, ode.config().densify);

    // Stack states time-major and pick the observed (time, object) rows.
    const std::size_t M = og.n_objects;
    const std::size_t D = samples.front()->task.targets.feature_dim;
    std::vector<std::uint32_t> rows;
    std::vector<double> target_values;
    std::size_t obj_off = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const ObservationSet& tg = samples[s]->task.targets;
        for (std::size_t i = 0; i < tg.n_objects(); ++i) {
            const auto& o = tg.objects[i];
            for (std::size_t k = 0; k < o.size(); ++k) {
                const auto ti = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), o.times[k]) - times.begin());
                rows.push_back(static_cast<std::uint32_t>(ti * M + obj_off + i));
                r.target_object.push_back(static_cast<std::uint32_t>(obj_off + i));
                r.target_sample.push_back(static_cast<std::uint32_t>(s));
                const double* f = tg.feature(i, k);
                target_values.insert(target_values.end(), f, f + D);
            }
        }
        obj_off += tg.n_objects();
    }
    r.targets = Tensor(Shape{rows.size(), D}, std::move(target_values));
    const Var stacked = concat_rows(states);
    r.predictions = ode.decode(b, gather_rows(stacked, make_index(std::move(rows))));
    return r;
}

}  // namespace lgode
