#include "lgode/dataset.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "json.hpp"

namespace lgode {

namespace {

constexpr char kMagic[8] = {'L', 'G', 'O', 'D', 'E', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json sim_to_json(const sim::SimConfig& c) {
    return {{"system", sim::to_string(c.kind)},
            {"n_objects", c.n_objects},
            {"box_half_width", c.box_half_width},
            {"dt", c.dt},
            {"total_steps", c.total_steps},
            {"subsample_stride", c.subsample_stride},
            {"interaction_probability", c.interaction_probability},
            {"spring_constant", c.spring_constant},
            {"charge_constant", c.charge_constant},
            {"softening", c.softening},
            {"init_position_std", c.init_position_std},
            {"init_speed", c.init_speed},
            {"walls", c.walls}};
}

sim::SimConfig sim_from_json(const nlohmann::json& j) {
    sim::SimConfig c;
    c.kind = sim::system_kind_from_string(j.at("system").get<std::string>());
    c.n_objects = j.at("n_objects");
    c.box_half_width = j.at("box_half_width");
    c.dt = j.at("dt");
    c.total_steps = j.at("total_steps");
    c.subsample_stride = j.at("subsample_stride");
    c.interaction_probability = j.at("interaction_probability");
    c.spring_constant = j.at("spring_constant");
    c.charge_constant = j.at("charge_constant");
    c.softening = j.at("softening");
    c.init_position_std = j.at("init_position_std");
    c.init_speed = j.at("init_speed");
    c.walls = j.at("walls");
    return c;
}

nlohmann::json header_json(const Dataset& ds) {
    const auto& c = ds.config;
    std::vector<bool> degenerate(ds.scale.degenerate.begin(), ds.scale.degenerate.end());
    return {{"format", "lgode-dataset"},
            {"split", ds.split},
            {"seed", c.seed},
            {"sim", sim_to_json(c.sim)},
            {"samples", {{"train", c.train_samples}, {"valid", c.valid_samples}, {"test", c.test_samples}}},
            {"n_min", c.n_min},
            {"n_max", c.n_max},
            {"extension_observations", c.extension_observations},
            {"feature_names", {"x", "y", "vx", "vy"}},
            {"scale", ds.scale.scale},
            {"scale_degenerate", degenerate}};
}

void write_part(std::ostream& os, const ObservationSet& obs) {
    binio::put_f64(os, obs.horizon_begin);
    binio::put_f64(os, obs.horizon_end);
    binio::put_u32(os, static_cast<std::uint32_t>(obs.total_observations()));
    for (std::size_t i = 0; i < obs.n_objects(); ++i)
        for (std::size_t k = 0; k < obs.objects[i].size(); ++k) {
            binio::put_u32(os, static_cast<std::uint32_t>(i));
            binio::put_f64(os, obs.objects[i].times[k]);
            const double* f = obs.feature(i, k);
            for (std::size_t d = 0; d < obs.feature_dim; ++d) binio::put_f64(os, f[d]);
        }
}

ObservationSet read_part(std::istream& is, const sim::InteractionGraph& g, std::size_t D) {
    ObservationSet obs;
    obs.feature_dim = D;
    obs.relations = g;
    obs.objects.resize(g.size());
    obs.horizon_begin = binio::get_f64(is);
    obs.horizon_end = binio::get_f64(is);
    const std::uint32_t n = binio::get_u32(is);
    for (std::uint32_t r = 0; r < n; ++r) {
        const std::uint32_t id = binio::get_u32(is);
        if (id >= g.size()) throw std::runtime_error("dataset record references object " + std::to_string(id));
        auto& series = obs.objects[id];
        series.times.push_back(binio::get_f64(is));
        for (std::size_t d = 0; d < D; ++d) series.features.push_back(binio::get_f64(is));
    }
    obs.validate();
    return obs;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a simple combination
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string dataset_file_name(const std::string& split) { return split + ".lgds"; }

GeneratedData generate_data(const GenDataConfig& cfg) {
    cfg.sim.validate();
    const std::size_t grid = cfg.sim.grid_points();
    if (cfg.n_max > grid || cfg.n_min > cfg.n_max)
        throw std::invalid_argument("generate_data: observation counts [" + std::to_string(cfg.n_min) + "," +
                                    std::to_string(cfg.n_max) + "] do not fit " + std::to_string(grid) +
                                    " grid points");
    if (cfg.test_samples > 0 && cfg.extension_observations > grid)
        throw std::invalid_argument("generate_data: extension_observations exceeds grid points");

    struct SplitPlan {
        const char* name;
        std::size_t count;
        bool extended;
    };
    const SplitPlan plans[3] = {{"train", cfg.train_samples, false},
                                {"valid", cfg.valid_samples, false},
                                {"test", cfg.test_samples, true}};

    std::vector<std::vector<sim::TrajectorySet>> trajs(3);
    for (std::size_t s = 0; s < 3; ++s) {
        trajs[s].resize(plans[s].count);
        const auto n = static_cast<std::ptrdiff_t>(plans[s].count);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            sim::SimConfig c = cfg.sim;
            c.seed = derive_seed(cfg.seed, s, static_cast<std::uint64_t>(k));
            if (plans[s].extended) c.total_steps *= 2;
            trajs[s][static_cast<std::size_t>(k)] = sim::simulate(c);
        }
    }

    std::vector<sim::TrajectorySet*> all;
    for (auto& v : trajs)
        for (auto& t : v) all.push_back(&t);
    ScaleRecord scale;
    if (!all.empty()) {
        scale = normalize_features(all);
    } else {
        scale.scale.assign(sim::TrajectorySet::kFeatureDim, 1.0);
        scale.degenerate.assign(sim::TrajectorySet::kFeatureDim, true);
    }

    GeneratedData out;
    Dataset* dsets[3] = {&out.train, &out.valid, &out.test};
    for (std::size_t s = 0; s < 3; ++s) {
        Dataset& ds = *dsets[s];
        ds.split = plans[s].name;
        ds.config = cfg;
        ds.scale = scale;
        ds.samples.resize(plans[s].count);
        for (std::size_t k = 0; k < plans[s].count; ++k) {
            const auto& tr = trajs[s][k];
            Sample& smp = ds.samples[k];
            const std::uint64_t sub_seed = derive_seed(cfg.seed ^ 0x5eedULL, s, k);
            smp.observed = subsample_irregular(tr, cfg.n_min, cfg.n_max, sub_seed, 0, grid);
            if (plans[s].extended) {
                smp.extension = subsample_irregular(tr, cfg.extension_observations, cfg.extension_observations,
                                                    derive_seed(sub_seed, 1), grid, 2 * grid);
                smp.has_extension = true;
            }
        }
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write dataset " + path.string());
    os.write(kMagic, 8);
    binio::put_u32(os, kVersion);
    binio::put_bytes(os, header_json(ds).dump());
    binio::put_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
    for (const Sample& s : ds.samples) {
        const auto& g = s.observed.relations;
        const auto edges = g.undirected_edges();
        binio::put_u32(os, static_cast<std::uint32_t>(g.size()));
        binio::put_u32(os, static_cast<std::uint32_t>(edges.size()));
        for (auto [i, j] : edges) {
            binio::put_u32(os, static_cast<std::uint32_t>(i));
            binio::put_u32(os, static_cast<std::uint32_t>(j));
        }
        binio::put_u8(os, s.has_extension ? 2 : 1);
        write_part(os, s.observed);
        if (s.has_extension) write_part(os, s.extension);
    }
    if (!os) throw std::runtime_error("failed writing dataset " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error(path.string() + " is not a dataset file");
    const std::uint32_t version = binio::get_u32(is);
    if (version != kVersion) throw std::runtime_error("unsupported dataset version " + std::to_string(version));
    const auto header = nlohmann::json::parse(binio::get_bytes(is));

    Dataset ds;
    ds.split = header.at("split");
    ds.config.seed = header.at("seed");
    ds.config.sim = sim_from_json(header.at("sim"));
    ds.config.train_samples = header.at("samples").at("train");
    ds.config.valid_samples = header.at("samples").at("valid");
    ds.config.test_samples = header.at("samples").at("test");
    ds.config.n_min = header.at("n_min");
    ds.config.n_max = header.at("n_max");
    ds.config.extension_observations = header.at("extension_observations");
    ds.scale.scale = header.at("scale").get<std::vector<double>>();
    for (bool b : header.at("scale_degenerate").get<std::vector<bool>>()) ds.scale.degenerate.push_back(b);
    const std::size_t D = ds.scale.scale.size();

    const std::uint32_t count = binio::get_u32(is);
    ds.samples.resize(count);
    for (Sample& s : ds.samples) {
        const std::uint32_t n = binio::get_u32(is);
        const std::uint32_t ne = binio::get_u32(is);
        sim::InteractionGraph g(n);
        for (std::uint32_t e = 0; e < ne; ++e) {
            const std::uint32_t i = binio::get_u32(is);
            const std::uint32_t j = binio::get_u32(is);
            g.add_edge(i, j);
        }
        const std::uint8_t parts = binio::get_u8(is);
        if (parts != 1 && parts != 2) throw std::runtime_error("dataset sample has invalid part count");
        s.observed = read_part(is, g, D);
        s.has_extension = parts == 2;
        if (s.has_extension) s.extension = read_part(is, g, D);
    }
    return ds;
}

void write_generated(const std::filesystem::path& dir, const GeneratedData& data) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "# lgode dataset manifest\n";
    manifest << "system " << sim::to_string(data.train.config.sim.kind) << "\n";
    manifest << "seed " << data.train.config.seed << "\n";
    manifest << "objects " << data.train.config.sim.n_objects << "\n";
    for (const Dataset* ds : {&data.train, &data.valid, &data.test}) {
        write_dataset(dir / dataset_file_name(ds->split), *ds);
        std::size_t obs = 0;
        for (const auto& s : ds->samples) obs += s.observed.total_observations() + s.extension.total_observations();
        manifest << "split " << ds->split << " samples " << ds->samples.size() << " observations " << obs << " file "
                 << dataset_file_name(ds->split) << "\n";
    }
    std::ofstream m(dir / "manifest.txt", std::ios::trunc);
    m << manifest.str();
}

Dataset load_split(const std::filesystem::path& dir, const std::string& split) {
    return read_dataset(dir / dataset_file_name(split));
}

}  // namespace lgode
