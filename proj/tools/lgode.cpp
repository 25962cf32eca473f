// lgode: data generation, training, evaluation, experiment matrix and plots.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lgode/config.hpp"
#include "lgode/evaluation.hpp"

namespace fs = std::filesystem;
using namespace lgode;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

struct Common {
    std::string config;
    std::optional<std::string> output_root;

    RunConfig load() const { return config.empty() ? RunConfig{} : RunConfig::load(config); }
    fs::path root(const RunConfig& c) const { return resolve_output_root(c, output_root); }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--output-root", c.output_root, "Output root (overrides $LGODE_OUTPUT_ROOT and the config)");
}

fs::path run_name(Task task, const std::string& variant) { return to_string(task) + "-" + variant; }

TrainResult train_run(RunConfig cfg, Task task, const std::string& variant, const fs::path& data_dir,
                      const fs::path& out, bool verbose) {
    cfg.train.task = task;
    cfg.train.model.encoder.variant = EncoderVariant::from_string(variant);
    cfg.train.out_dir = out;
    cfg.train.verbose = verbose;
    const Dataset train_set = load_split(data_dir, "train");
    const Dataset valid = load_split(data_dir, "valid");
    fs::create_directories(out);
    write_text(out / "config.json", cfg.to_json() + "\n");
    LgOde model = LgOde::create(cfg.train.model, cfg.train.seed);
    TrainResult r = train(model, train_set, &valid, cfg.train);
    if (r.aborted) std::cerr << "training aborted: " << r.abort_reason << "\n";
    std::cerr << "best epoch " << r.best_epoch << ", validation elbo " << r.best_valid_elbo << "\n";
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent graph ODE on irregularly observed multi-agent systems"};
    app.require_subcommand(1);

    // gen-data
    Common gc;
    std::optional<std::string> g_out;
    std::optional<std::uint64_t> g_seed;
    std::optional<std::size_t> g_objects, g_train, g_valid, g_test;
    std::optional<std::string> g_system;
    auto* gen = app.add_subcommand("gen-data", "Simulate and write train/valid/test datasets");
    add_common(gen, gc);
    gen->add_option("-o,--out", g_out, "Dataset directory (default <root>/data)");
    gen->add_option("--seed", g_seed);
    gen->add_option("--system", g_system)->check(CLI::IsMember({"spring", "charged"}));
    gen->add_option("--n-objects", g_objects);
    gen->add_option("--train-samples", g_train);
    gen->add_option("--valid-samples", g_valid);
    gen->add_option("--test-samples", g_test);

    // train
    Common tc;
    std::string t_data;
    std::optional<std::string> t_out, t_task, t_variant;
    std::optional<std::size_t> t_epochs, t_batch, t_micro;
    std::optional<double> t_lr, t_kl;
    std::optional<std::uint64_t> t_seed;
    bool t_quiet = false;
    auto* tr = app.add_subcommand("train", "Train a model; writes metrics, checkpoints and configs");
    add_common(tr, tc);
    tr->add_option("-d,--data", t_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("-o,--out", t_out, "Run directory (default <root>/runs/<task>-<variant>)");
    tr->add_option("--task", t_task)->check(CLI::IsMember({"interpolation", "extrapolation", "interp", "extrap"}));
    tr->add_option("--variant", t_variant)->check(CLI::IsMember(variant_names()));
    tr->add_option("--epochs", t_epochs);
    tr->add_option("--batch-size", t_batch);
    tr->add_option("--micro-batch", t_micro);
    tr->add_option("--lr", t_lr);
    tr->add_option("--kl-weight", t_kl);
    tr->add_option("--seed", t_seed);
    tr->add_flag("-q,--quiet", t_quiet, "No per-epoch progress on stderr");

    // eval
    std::string e_run, e_data, e_ckpt = "best.ckpt", e_task = "interpolation";
    std::vector<double> e_ratios{0.4, 0.6, 0.8};
    std::uint64_t e_seed = 0;
    bool e_denorm = false, e_baselines = false;
    std::size_t e_micro = 16;
    auto* ev = app.add_subcommand("eval", "Test-set MSE of a trained run");
    ev->add_option("-r,--run", e_run, "Run directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("-d,--data", e_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--checkpoint", e_ckpt, "Checkpoint file inside the run directory");
    ev->add_option("--task", e_task)->check(CLI::IsMember({"interpolation", "extrapolation", "interp", "extrap"}));
    ev->add_option("--ratio", e_ratios, "Observed ratios")->check(CLI::Range(1e-9, 1.0));
    ev->add_option("--seed", e_seed, "Conditioning split seed");
    ev->add_option("--micro-batch", e_micro);
    ev->add_flag("--denormalize", e_denorm, "Report MSE in simulation units");
    ev->add_flag("--baselines", e_baselines, "Also report the zero and last-observation baselines");

    // matrix
    Common mc;
    std::string m_data;
    std::optional<std::string> m_models, m_out;
    bool m_train = false;
    auto* mx = app.add_subcommand("matrix", "Task x ratio x variant MSE table, CSV and plots");
    add_common(mx, mc);
    mx->add_option("-d,--data", m_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    mx->add_option("--models", m_models, "Directory of <task>-<variant> runs (default <root>/runs)");
    mx->add_option("-o,--out", m_out, "Output directory (default <root>/matrix)");
    mx->add_flag("--train", m_train, "Train runs that have no checkpoint yet");

    // plot
    auto* pl = app.add_subcommand("plot", "SVG figures");
    pl->require_subcommand(1);
    std::string p_run, p_data, p_out, p_ckpt = "best.ckpt", p_task = "interpolation", p_csv;
    double p_ratio = 0.4;
    std::size_t p_sample = 0;
    std::uint64_t p_seed = 0;
    auto* pt = pl->add_subcommand("trajectories", "Ground truth against predicted paths for one test sample");
    pt->add_option("-r,--run", p_run)->required()->check(CLI::ExistingDirectory);
    pt->add_option("-d,--data", p_data)->required()->check(CLI::ExistingDirectory);
    pt->add_option("-o,--out", p_out)->required();
    pt->add_option("--checkpoint", p_ckpt);
    pt->add_option("--task", p_task)->check(CLI::IsMember({"interpolation", "extrapolation", "interp", "extrap"}));
    pt->add_option("--ratio", p_ratio)->check(CLI::Range(1e-9, 1.0));
    pt->add_option("--sample", p_sample);
    pt->add_option("--seed", p_seed);
    auto* pm = pl->add_subcommand("metrics", "Training curves from metrics.jsonl");
    pm->add_option("-r,--run", p_run)->required()->check(CLI::ExistingDirectory);
    pm->add_option("-o,--out", p_out)->required();
    auto* pc = pl->add_subcommand("matrix", "MSE against observed ratio from a matrix CSV");
    pc->add_option("--csv", p_csv)->required()->check(CLI::ExistingFile);
    pc->add_option("-o,--out", p_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            RunConfig cfg = gc.load();
            if (g_seed) cfg.data.seed = *g_seed;
            if (g_system) cfg.data.sim.kind = sim::system_kind_from_string(*g_system);
            if (g_objects) cfg.data.sim.n_objects = *g_objects;
            if (g_train) cfg.data.train_samples = *g_train;
            if (g_valid) cfg.data.valid_samples = *g_valid;
            if (g_test) cfg.data.test_samples = *g_test;
            const fs::path out = g_out ? fs::path(*g_out) : gc.root(cfg) / "data";
            write_generated(out, generate_data(cfg.data));
            std::cout << out.string() << "\n";
        } else if (tr->parsed()) {
            RunConfig cfg = tc.load();
            if (t_task) cfg.train.task = task_from_string(*t_task);
            if (t_variant) cfg.train.model.encoder.variant = EncoderVariant::from_string(*t_variant);
            if (t_epochs) cfg.train.epochs = *t_epochs;
            if (t_batch) cfg.train.batch_size = *t_batch;
            if (t_micro) cfg.train.micro_batch = *t_micro;
            if (t_lr) cfg.train.learning_rate = *t_lr;
            if (t_kl) cfg.train.kl_weight = *t_kl;
            if (t_seed) cfg.train.seed = *t_seed;
            const std::string variant = cfg.train.model.encoder.variant.name();
            const fs::path out = t_out ? fs::path(*t_out) : tc.root(cfg) / "runs" / run_name(cfg.train.task, variant);
            const TrainResult r = train_run(cfg, cfg.train.task, variant, t_data, out, !t_quiet);
            std::cout << out.string() << "\n";
            return r.aborted ? 2 : 0;
        } else if (ev->parsed()) {
            const LgOde model = load_run(e_run, e_ckpt);
            const Dataset test = load_split(e_data, "test");
            const Task task = task_from_string(e_task);
            std::cout << "task,ratio,predictor,mse,ci,samples,entries\n";
            for (double ratio : e_ratios) {
                const double r[] = {ratio};
                const auto samples = prepare_split(test, task, r, derive_seed(e_seed, static_cast<std::uint64_t>(task)), true);
                std::vector<std::pair<std::string, Predictor>> preds{{"model", model_predictor(model)}};
                if (e_baselines) {
                    preds.emplace_back("zero", zero_predictor());
                    preds.emplace_back("locf", locf_predictor());
                }
                for (const auto& [name, p] : preds) {
                    const MseReport m = evaluate(p, samples, e_micro, e_denorm ? &test.scale : nullptr);
                    std::cout << to_string(task) << "," << ratio << "," << name << "," << m.mse << "," << m.ci << ","
                              << m.samples << "," << m.entries << "\n";
                }
            }
        } else if (mx->parsed()) {
            const RunConfig cfg = mc.load();
            const fs::path root = mc.root(cfg);
            const fs::path models_dir = m_models ? fs::path(*m_models) : root / "runs";
            const fs::path out = m_out ? fs::path(*m_out) : root / "matrix";
            std::map<std::string, LgOde> cache;
            const ModelProvider provider = [&](Task task, const std::string& variant) -> const LgOde& {
                const std::string key = run_name(task, variant).string();
                if (auto it = cache.find(key); it != cache.end()) return it->second;
                const fs::path dir = models_dir / key;
                if (!fs::exists(dir / "best.ckpt")) {
                    if (!m_train) throw std::runtime_error("no checkpoint in " + dir.string());
                    train_run(cfg, task, variant, m_data, dir, true);
                }
                return cache.emplace(key, load_run(dir)).first->second;
            };
            const Dataset test = load_split(m_data, "test");
            const auto cells = run_experiment_matrix(cfg.matrix, test, provider);
            const std::string csv = matrix_csv(cells);
            write_text(out / "matrix.csv", csv);
            write_text(out / "summary.txt", matrix_summary(cells));
            const auto rows = parse_matrix_csv(csv);
            write_text(out / "matrix.svg", render_matrix_svg(rows));
            for (const auto& [key, model] : cache) {
                const Task task = task_from_string(key.substr(0, key.find('-')));
                const double r[] = {cfg.matrix.ratios.front()};
                const auto samples = prepare_split(test, task, r, derive_seed(cfg.matrix.seed, static_cast<std::uint64_t>(task)), true);
                for (std::size_t s = 0; s < std::min(cfg.plot_samples, samples.size()); ++s) {
                    TrajectoryPlot p = trajectory_plot(model, samples[s]);
                    p.title = key + " sample " + std::to_string(s) + " ratio " + std::to_string(r[0]).substr(0, 4);
                    write_text(out / "plots" / (key + "-sample" + std::to_string(s) + ".svg"), render_svg(p));
                }
            }
            std::cout << matrix_summary(cells);
            for (const auto& c : cells)
                if (!c.error.empty()) return 3;
        } else if (pt->parsed()) {
            const LgOde model = load_run(p_run, p_ckpt);
            const Dataset test = load_split(p_data, "test");
            const Task task = task_from_string(p_task);
            const double r[] = {p_ratio};
            const auto samples = prepare_split(test, task, r, derive_seed(p_seed, static_cast<std::uint64_t>(task)), true);
            if (p_sample >= samples.size()) throw std::out_of_range("sample index beyond the test set");
            TrajectoryPlot p = trajectory_plot(model, samples[p_sample]);
            p.title = to_string(task) + " sample " + std::to_string(p_sample);
            write_text(p_out, render_svg(p));
        } else if (pm->parsed()) {
            write_text(p_out, render_metrics_svg(slurp(fs::path(p_run) / "metrics.jsonl")));
        } else if (pc->parsed()) {
            write_text(p_out, render_matrix_svg(parse_matrix_csv(slurp(p_csv))));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
