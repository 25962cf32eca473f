#include "lgode/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace lgode {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::set<std::string> allowed) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw std::invalid_argument("config: unknown key " + where + "." + k);
}

template <class T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_data(const json& j, GenDataConfig& c) {
    check_keys(j, "data",
               {"system", "n_objects", "train_samples", "valid_samples", "test_samples", "n_min", "n_max",
                "extension_observations", "seed", "total_steps", "dt", "subsample_stride", "interaction_probability",
                "box_half_width", "walls"});
    if (j.contains("system")) c.sim.kind = sim::system_kind_from_string(j.at("system").get<std::string>());
    take(j, "n_objects", c.sim.n_objects);
    take(j, "train_samples", c.train_samples);
    take(j, "valid_samples", c.valid_samples);
    take(j, "test_samples", c.test_samples);
    take(j, "n_min", c.n_min);
    take(j, "n_max", c.n_max);
    take(j, "extension_observations", c.extension_observations);
    take(j, "seed", c.seed);
    take(j, "total_steps", c.sim.total_steps);
    take(j, "dt", c.sim.dt);
    take(j, "subsample_stride", c.sim.subsample_stride);
    take(j, "interaction_probability", c.sim.interaction_probability);
    take(j, "box_half_width", c.sim.box_half_width);
    take(j, "walls", c.sim.walls);
}

void apply_model(const json& j, ModelConfig& c) {
    check_keys(j, "model", {"encoder", "ode"});
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        check_keys(e, "model.encoder", {"hidden", "layers", "latent", "posterior_hidden", "variant", "te_scale"});
        take(e, "hidden", c.encoder.hidden);
        take(e, "layers", c.encoder.layers);
        take(e, "latent", c.encoder.latent);
        take(e, "posterior_hidden", c.encoder.posterior_hidden);
        if (e.contains("variant")) c.encoder.variant = EncoderVariant::from_string(e.at("variant").get<std::string>());
        take(e, "te_scale", c.encoder.te_scale);
    }
    if (j.contains("ode")) {
        const json& o = j.at("ode");
        check_keys(o, "model.ode",
                   {"latent", "aux", "relation_hidden", "edge_dim", "object_hidden", "decoder_std", "densify"});
        take(o, "latent", c.ode.latent);
        take(o, "aux", c.ode.aux);
        take(o, "relation_hidden", c.ode.relation_hidden);
        take(o, "edge_dim", c.ode.edge_dim);
        take(o, "object_hidden", c.ode.object_hidden);
        take(o, "decoder_std", c.ode.decoder_std);
        take(o, "densify", c.ode.densify);
    }
}

void apply_train(const json& j, TrainConfig& c) {
    check_keys(j, "train",
               {"task", "epochs", "batch_size", "micro_batch", "learning_rate", "kl_weight", "clip_norm",
                "observed_ratios", "seed"});
    if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
    take(j, "epochs", c.epochs);
    take(j, "batch_size", c.batch_size);
    take(j, "micro_batch", c.micro_batch);
    take(j, "learning_rate", c.learning_rate);
    take(j, "kl_weight", c.kl_weight);
    take(j, "clip_norm", c.clip_norm);
    take(j, "observed_ratios", c.observed_ratios);
    take(j, "seed", c.seed);
}

void apply_matrix(const json& j, RunConfig& c) {
    check_keys(j, "matrix", {"tasks", "ratios", "variants", "baselines", "seed", "micro_batch", "plot_samples"});
    if (j.contains("tasks")) {
        c.matrix.tasks.clear();
        for (const auto& t : j.at("tasks")) c.matrix.tasks.push_back(task_from_string(t.get<std::string>()));
    }
    take(j, "ratios", c.matrix.ratios);
    take(j, "variants", c.matrix.variants);
    for (const auto& v : c.matrix.variants) EncoderVariant::from_string(v);
    take(j, "baselines", c.matrix.baselines);
    take(j, "seed", c.matrix.seed);
    take(j, "micro_batch", c.matrix.micro_batch);
    take(j, "plot_samples", c.plot_samples);
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, RunConfig base) {
    const json j = json::parse(text);
    check_keys(j, "(root)", {"output_root", "data", "model", "train", "matrix"});
    if (j.contains("output_root")) base.output_root = j.at("output_root").get<std::string>();
    if (j.contains("data")) apply_data(j.at("data"), base.data);
    if (j.contains("model")) apply_model(j.at("model"), base.train.model);
    if (j.contains("train")) apply_train(j.at("train"), base.train);
    if (j.contains("matrix")) apply_matrix(j.at("matrix"), base);
    base.data.sim.validate();
    base.train.validate();
    for (double r : base.matrix.ratios)
        if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("config: matrix ratio outside (0, 1]");
    return base;
}

RunConfig RunConfig::from_json(const std::string& text) { return from_json(text, RunConfig{}); }

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return from_json(ss.str());
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

std::string RunConfig::to_json() const {
    const auto& d = data;
    std::vector<std::string> tasks;
    for (Task t : matrix.tasks) tasks.push_back(to_string(t));
    json j = {
        {"output_root", output_root.string()},
        {"data",
         {{"system", sim::to_string(d.sim.kind)},
          {"n_objects", d.sim.n_objects},
          {"train_samples", d.train_samples},
          {"valid_samples", d.valid_samples},
          {"test_samples", d.test_samples},
          {"n_min", d.n_min},
          {"n_max", d.n_max},
          {"extension_observations", d.extension_observations},
          {"seed", d.seed},
          {"total_steps", d.sim.total_steps},
          {"dt", d.sim.dt},
          {"subsample_stride", d.sim.subsample_stride},
          {"interaction_probability", d.sim.interaction_probability},
          {"box_half_width", d.sim.box_half_width},
          {"walls", d.sim.walls}}},
        {"model", json::parse(train.model.to_json())},
        {"train",
         {{"task", to_string(train.task)},
          {"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"micro_batch", train.micro_batch},
          {"learning_rate", train.learning_rate},
          {"kl_weight", train.kl_weight},
          {"clip_norm", train.clip_norm},
          {"observed_ratios", train.observed_ratios},
          {"seed", train.seed}}},
        {"matrix",
         {{"tasks", tasks},
          {"ratios", matrix.ratios},
          {"variants", matrix.variants},
          {"baselines", matrix.baselines},
          {"seed", matrix.seed},
          {"micro_batch", matrix.micro_batch},
          {"plot_samples", plot_samples}}}};
    // input/output widths are fixed by the feature layout, not configurable.
    j["model"]["encoder"].erase("input_dim");
    j["model"]["ode"].erase("output_dim");
    return j.dump(2);
}

std::filesystem::path resolve_output_root(const RunConfig& cfg, const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return env;
    return cfg.output_root;
}

}  // namespace lgode
