#include "lgode/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace lgode {

using namespace ad;

Var kl_diag_gaussian(Var mu, Var sigma) {
    // 0.5 * (sigma^2 + mu^2 - 1 - log sigma^2)
    const Var s2 = square(sigma);
    const Var inner = sub(add(s2, square(mu)), log(s2));
    return scale(add_scalar(sum(inner), -static_cast<double>(mu.value().size())), 0.5);
}

double kl_diag_gaussian(const Tensor& mu, const Tensor& sigma) {
    double kl = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double s2 = sigma[k] * sigma[k];
        kl += 0.5 * (s2 + mu[k] * mu[k] - 1.0 - std::log(s2));
    }
    return kl;
}

Tensor draw_noise(std::span<const PreparedSample* const> samples, std::size_t latent, std::mt19937_64& rng) {
    std::size_t n = 0;
    for (const auto* s : samples) n += s->graph.n_objects;
    Tensor eps(Shape{n, latent});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : eps.values()) v = normal(rng);
    return eps;
}

ElboResult elbo(const Bound& b, const LgOde& model, std::span<const PreparedSample* const> samples, const Tensor& eps,
                double kl_weight) {
    const Rollout r = rollout(b, model, samples, &eps);
    const GraphOde& ode = model.ode();
    const Var recon = ode.log_likelihood(r.predictions, b.tape().constant(r.targets));
    const Var kl = kl_diag_gaussian(r.posterior.mean, r.posterior.stddev);
    ElboResult out;
    out.elbo = sub(recon, scale(kl, kl_weight));

    ElboReport& rep = out.report;
    rep.reconstruction = recon.value().item();
    rep.kl = kl.value().item();
    rep.kl_weight = kl_weight;
    rep.elbo = out.elbo.value().item();
    rep.n_samples = samples.size();
    rep.n_observations = r.targets.rows();
    rep.object_reconstruction.assign(r.n_objects, 0.0);
    rep.object_kl.assign(r.n_objects, 0.0);
    const double s = ode.config().decoder_std;
    const double norm = gaussian_log_norm(s);
    const Tensor& pred = r.predictions.value();
    for (std::size_t k = 0; k < r.targets.rows(); ++k)
        for (std::size_t d = 0; d < r.targets.cols(); ++d) {
            const double e = r.targets(k, d) - pred(k, d);
            rep.object_reconstruction[r.target_object[k]] += -0.5 * e * e / (s * s) + norm;
        }
    const Tensor& mu = r.posterior.mean.value();
    const Tensor& sd = r.posterior.stddev.value();
    for (std::size_t i = 0; i < r.n_objects; ++i)
        for (std::size_t c = 0; c < mu.cols(); ++c) {
            const double s2 = sd(i, c) * sd(i, c);
            rep.object_kl[i] += 0.5 * (s2 + mu(i, c) * mu(i, c) - 1.0 - std::log(s2));
        }
    return out;
}

void TrainConfig::validate() const {
    model.validate();
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (micro_batch < 1) throw std::invalid_argument("TrainConfig: micro_batch must be >= 1");
    if (observed_ratios.empty()) throw std::invalid_argument("TrainConfig: observed_ratios is empty");
    for (double r : observed_ratios)
        if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("TrainConfig: observed ratio outside (0, 1]");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip_norm must be positive");
}

std::string EpochMetrics::to_json() const {
    nlohmann::json j = {{"epoch", epoch}, {"split", split},           {"elbo", elbo},
                        {"recon", reconstruction}, {"kl", kl},       {"grad_norm", grad_norm},
                        {"skipped", skipped_steps}};
    return j.dump();
}

std::vector<PreparedSample> prepare_split(const Dataset& ds, Task task, std::span<const double> ratios,
                                          std::uint64_t seed, bool test_mode) {
    std::vector<PreparedSample> out(ds.samples.size());
    const auto n = static_cast<std::ptrdiff_t>(ds.samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const double ratio = ratios[i % ratios.size()];
        const TaskSample ts = prepare_task(ds.samples[i], task, ratio, derive_seed(seed, i), test_mode);
        out[i] = prepare(ts, task_threshold(ds.config, ratio));
    }
    return out;
}

ElboReport evaluate_elbo(const LgOde& model, const std::vector<PreparedSample>& samples, std::size_t micro_batch,
                         double kl_weight, std::uint64_t noise_seed) {
    ElboReport total;
    total.kl_weight = kl_weight;
    std::mt19937_64 rng(noise_seed);
    for (std::size_t s = 0; s < samples.size(); s += micro_batch) {
        std::vector<const PreparedSample*> mb;
        for (std::size_t k = s; k < std::min(samples.size(), s + micro_batch); ++k) mb.push_back(&samples[k]);
        const Tensor eps = draw_noise(mb, model.config().encoder.latent, rng);
        Tape tape;
        const Bound b(tape, model.params());
        const ElboReport r = elbo(b, model, mb, eps, kl_weight).report;
        total.elbo += r.elbo;
        total.reconstruction += r.reconstruction;
        total.kl += r.kl;
        total.n_samples += r.n_samples;
        total.n_observations += r.n_observations;
    }
    if (total.n_samples > 0) {
        const double n = static_cast<double>(total.n_samples);
        total.elbo /= n;
        total.reconstruction /= n;
        total.kl /= n;
    }
    return total;
}

namespace {

std::vector<Tensor> snapshot(const ParamSet& ps) {
    std::vector<Tensor> v;
    for (const auto& p : ps.all()) v.push_back(p.value);
    return v;
}

void restore(ParamSet& ps, const std::vector<Tensor>& v) {
    for (std::size_t k = 0; k < ps.size(); ++k) ps[k].value = v[k];
}

}  // namespace

TrainResult train(LgOde& model, const Dataset& train_set, const Dataset* valid_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.samples.empty()) throw std::invalid_argument("train: empty training set");
    ParamSet& ps = model.params();
    Adam adam(ps, AdamConfig{cfg.learning_rate});
    TrainResult result;

    std::ofstream metrics, timing;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        metrics.open(cfg.out_dir / "metrics.jsonl", std::ios::trunc);
        timing.open(cfg.out_dir / "timing.jsonl", std::ios::trunc);
        std::ofstream(cfg.out_dir / "model.json", std::ios::trunc) << model.config().to_json() << "\n";
    }
    auto log = [&](EpochMetrics m) {
        result.history.push_back(m);
        if (metrics.is_open()) {
            metrics << m.to_json() << "\n";
            metrics.flush();
            timing << nlohmann::json{{"epoch", m.epoch}, {"split", m.split}, {"wall_seconds", m.wall_seconds}}.dump()
                   << "\n";
            timing.flush();
        }
        if (cfg.verbose)
            std::cerr << "epoch " << m.epoch << " " << m.split << " elbo " << m.elbo << " recon " << m.reconstruction
                      << " kl " << m.kl << " grad " << m.grad_norm << " (" << m.wall_seconds << " s)\n";
    };

    std::vector<PreparedSample> valid;
    if (valid_set != nullptr && !valid_set->samples.empty())
        valid = prepare_split(*valid_set, cfg.task, cfg.observed_ratios, derive_seed(cfg.seed, 0x7a11d), false);
    const std::uint64_t valid_noise = derive_seed(cfg.seed, 0x7a11e);

    std::vector<Tensor> last_good = snapshot(ps);
    result.best_valid_elbo = -std::numeric_limits<double>::infinity();
    const std::size_t n = train_set.samples.size();
    const std::size_t latent = model.config().encoder.latent;

    for (std::size_t epoch = 1; epoch <= cfg.epochs && !result.aborted; ++epoch) {
        const auto t_begin = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::mt19937_64 noise_rng(derive_seed(cfg.seed, 2, epoch));
        const std::uint64_t split_seed = derive_seed(cfg.seed, 3, epoch);

        EpochMetrics em;
        em.epoch = epoch;
        em.split = "train";
        std::size_t steps = 0, seen = 0;

        for (std::size_t start = 0; start < n && !result.aborted; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const double batch_n = static_cast<double>(stop - start);
            ps.zero_grad();
            double batch_elbo = 0.0, batch_recon = 0.0, batch_kl = 0.0;

            for (std::size_t mstart = start; mstart < stop; mstart += cfg.micro_batch) {
                const std::size_t mstop = std::min(stop, mstart + cfg.micro_batch);
                std::vector<PreparedSample> prepared;
                for (std::size_t k = mstart; k < mstop; ++k) {
                    const std::size_t idx = order[k];
                    std::mt19937_64 pick(derive_seed(split_seed, idx));
                    const double ratio = cfg.observed_ratios[pick() % cfg.observed_ratios.size()];
                    const TaskSample ts = prepare_task(train_set.samples[idx], cfg.task, ratio, pick(), false);
                    prepared.push_back(prepare(ts, task_threshold(train_set.config, ratio)));
                }
                std::vector<const PreparedSample*> mb;
                for (const auto& p : prepared) mb.push_back(&p);
                const Tensor eps = draw_noise(mb, latent, noise_rng);

                Tape tape;
                const Bound b(tape, ps);
                const ElboResult er = elbo(b, model, mb, eps, cfg.kl_weight);
                if (!std::isfinite(er.report.elbo)) {
                    result.aborted = true;
                    result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
                    break;
                }
                tape.backward(scale(er.elbo, -1.0 / batch_n));
                b.accumulate_grads(ps);
                batch_elbo += er.report.elbo;
                batch_recon += er.report.reconstruction;
                batch_kl += er.report.kl;
            }
            if (result.aborted) break;

            const double norm = ps.grad_norm();
            if (std::isfinite(norm) && norm > cfg.clip_norm) ps.scale_grad(cfg.clip_norm / norm);
            if (adam.step(ps)) {
                em.grad_norm += norm;
                ++steps;
            } else {
                ++em.skipped_steps;
                if (cfg.verbose) std::cerr << "epoch " << epoch << ": non-finite gradient, step skipped\n";
            }
            em.elbo += batch_elbo;
            em.reconstruction += batch_recon;
            em.kl += batch_kl;
            seen += stop - start;
        }

        if (result.aborted) {
            restore(ps, last_good);
            if (!cfg.out_dir.empty()) ps.save(cfg.out_dir / "last.ckpt");
            if (cfg.verbose) std::cerr << "aborting: " << result.abort_reason << "\n";
            break;
        }
        last_good = snapshot(ps);
        const double ns = static_cast<double>(std::max<std::size_t>(seen, 1));
        em.elbo /= ns;
        em.reconstruction /= ns;
        em.kl /= ns;
        if (steps > 0) em.grad_norm /= static_cast<double>(steps);
        em.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        log(em);

        bool improved = valid.empty();
        if (!valid.empty()) {
            const auto v_begin = std::chrono::steady_clock::now();
            const ElboReport vr = evaluate_elbo(model, valid, cfg.micro_batch, cfg.kl_weight, valid_noise);
            EpochMetrics vm;
            vm.epoch = epoch;
            vm.split = "valid";
            vm.elbo = vr.elbo;
            vm.reconstruction = vr.reconstruction;
            vm.kl = vr.kl;
            vm.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - v_begin).count();
            log(vm);
            improved = std::isfinite(vr.elbo) && vr.elbo > result.best_valid_elbo;
            if (improved) result.best_valid_elbo = vr.elbo;
        }
        if (improved) {
            result.best_epoch = epoch;
            if (!cfg.out_dir.empty()) ps.save(cfg.out_dir / "best.ckpt");
        }
        if (!cfg.out_dir.empty()) ps.save(cfg.out_dir / "last.ckpt");
    }
    return result;
}

}  // namespace lgode
