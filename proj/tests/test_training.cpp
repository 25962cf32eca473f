#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lgode/training.hpp"
#include "test_util.hpp"

using namespace lgode;
using namespace lgode::ad;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.encoder.hidden = 8;
    c.encoder.layers = 1;
    c.encoder.latent = 3;
    c.encoder.posterior_hidden = 8;
    c.ode.latent = 3;
    c.ode.aux = 2;
    c.ode.relation_hidden = 8;
    c.ode.edge_dim = 8;
    c.ode.object_hidden = 8;
    return c;
}

// 2 objects, 3 observations each, related.
ObservationSet toy_obs(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ObservationSet obs;
    obs.relations = sim::InteractionGraph(2);
    obs.relations.add_edge(0, 1);
    obs.objects.resize(2);
    obs.objects[0].times = {0.1, 0.4, 0.8};
    obs.objects[1].times = {0.2, 0.4, 0.9};
    for (auto& o : obs.objects)
        for (std::size_t j = 0; j < 3 * obs.feature_dim; ++j) o.features.push_back(u(rng));
    return obs;
}

PreparedSample toy_sample(std::uint64_t seed) {
    TaskSample ts;
    ts.conditioning = toy_obs(seed);
    ts.targets = ts.conditioning;
    return prepare(ts, 0.5);
}

Tensor fixed_noise(std::size_t n, std::size_t latent, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return testing::random_tensor(Shape{n, latent}, rng);
}

GenDataConfig small_data(std::size_t train, std::uint64_t seed) {
    GenDataConfig c;
    c.sim.n_objects = 3;
    c.train_samples = train;
    c.valid_samples = 2;
    c.test_samples = 2;
    c.seed = seed;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("kl examples") {
    CHECK(kl_diag_gaussian(Tensor::scalar(0.0), Tensor::scalar(1.0)) == 0.0);
    CHECK(kl_diag_gaussian(Tensor::scalar(1.0), Tensor::scalar(1.0)) == doctest::Approx(0.5).epsilon(1e-15));

    std::mt19937_64 rng(3);
    const Tensor mu = testing::random_tensor(Shape{4, 3}, rng);
    const Tensor sd = testing::random_tensor(Shape{4, 3}, rng, 0.2, 2.0);
    Tape t;
    const double v = kl_diag_gaussian(t.constant(mu), t.constant(sd)).value().item();
    CHECK(v == doctest::Approx(kl_diag_gaussian(mu, sd)).epsilon(1e-14));
    CHECK(v >= 0.0);
}

TEST_CASE("closed-form kl matches a monte carlo estimate") {
    std::mt19937_64 rng(17);
    const Tensor mu = testing::random_tensor(Shape{1, 3}, rng);
    const Tensor sd = testing::random_tensor(Shape{1, 3}, rng, 0.3, 1.8);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        double log_ratio = 0.0;  // log q(z) - log p(z)
        for (std::size_t d = 0; d < 3; ++d) {
            const double e = normal(rng);
            const double z = mu[d] + sd[d] * e;
            log_ratio += -0.5 * e * e - std::log(sd[d]) + 0.5 * z * z;
        }
        sum += log_ratio;
        sum2 += log_ratio * log_ratio;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - kl_diag_gaussian(mu, sd)) < 3.0 * se);
}

TEST_CASE("kl gradient") {
    std::mt19937_64 rng(5);
    const Tensor mu = testing::random_tensor(Shape{2, 3}, rng);
    const Tensor sd = testing::random_tensor(Shape{2, 3}, rng, 0.3, 1.5);
    const auto r = grad_check([](Tape&, const std::vector<Var>& v) { return kl_diag_gaussian(v[0], v[1]); }, {mu, sd});
    CHECK(r.passed(1e-5));
}

TEST_CASE("elbo report identity and per-object breakdown") {
    const LgOde model = LgOde::create(tiny_model(), 1);
    const PreparedSample a = toy_sample(2), c = toy_sample(3);
    const std::vector<const PreparedSample*> mb{&a, &c};
    const Tensor eps = fixed_noise(4, 3, 4);
    for (double w : {0.0, 0.5, 1.0}) {
        Tape t;
        const Bound b(t, model.params());
        const ElboReport r = elbo(b, model, mb, eps, w).report;
        CHECK(std::abs(r.elbo - (r.reconstruction - w * r.kl)) < 1e-10);
        CHECK(r.kl >= 0.0);
        CHECK(r.n_samples == 2);
        CHECK(r.n_observations == 12);
        REQUIRE(r.object_reconstruction.size() == 4);
        double rs = 0.0, ks = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            rs += r.object_reconstruction[i];
            ks += r.object_kl[i];
        }
        CHECK(rs == doctest::Approx(r.reconstruction).epsilon(1e-12));
        CHECK(ks == doctest::Approx(r.kl).epsilon(1e-12));
    }
}

TEST_CASE("pinned decoder and prior posterior give the maximal elbo") {
    LgOde model = LgOde::create(tiny_model(), 1);
    ParamSet& ps = model.params();
    PreparedSample s = toy_sample(2);
    for (auto* set : {&s.task.targets, &s.task.conditioning})
        for (auto& o : set->objects)
            for (std::size_t k = 0; k < o.features.size(); ++k) o.features[k] = 0.25 * static_cast<double>(k % 4) - 0.3;
    s = prepare(s.task, 0.5);

    ps[ps.find("dec.weight")].value.fill(0.0);
    Tensor& db = ps[ps.find("dec.bias")].value;
    for (std::size_t d = 0; d < 4; ++d) db[d] = 0.25 * static_cast<double>(d) - 0.3;
    // Head output: mean 0, stddev softplus(x) + 1e-6 = 1.
    ps[ps.find("enc.posterior.1.weight")].value.fill(0.0);
    Tensor& hb = ps[ps.find("enc.posterior.1.bias")].value;
    const double x = std::log(std::expm1(1.0 - 1e-6));
    for (std::size_t k = 0; k < 6; ++k) hb[k] = k < 3 ? 0.0 : x;

    const std::vector<const PreparedSample*> mb{&s};
    Tape t;
    const Bound b(t, ps);
    const ElboReport r = elbo(b, model, mb, fixed_noise(2, 3, 9), 1.0).report;
    const double best = 6.0 * 4.0 * gaussian_log_norm(model.config().ode.decoder_std);
    CHECK(r.kl < 1e-20);
    CHECK(r.reconstruction == doctest::Approx(best).epsilon(1e-12));
    CHECK(r.elbo == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("reconstruction only counts observed targets") {
    const LgOde model = LgOde::create(tiny_model(), 1);
    const PreparedSample a = toy_sample(2);
    // A second sample whose targets put extra times in the shared solve grid.
    TaskSample other;
    other.conditioning = toy_obs(5);
    other.targets = other.conditioning;
    other.targets.objects[0].times = {0.15, 0.55, 0.7};
    other.targets.objects[1].times = {0.33, 0.61, 0.97};
    const PreparedSample c = prepare(other, 0.5);
    const Tensor eps = fixed_noise(4, 3, 4);

    Tape t1, t2;
    const std::vector<const PreparedSample*> alone{&a}, joint{&a, &c};
    const ElboReport r1 = elbo(Bound(t1, model.params()), model, alone, Tensor(Shape{2, 3}, std::vector<double>(eps.values().begin(), eps.values().begin() + 6)), 1.0).report;
    const ElboReport r2 = elbo(Bound(t2, model.params()), model, joint, eps, 1.0).report;
    CHECK(r1.n_observations == 6);
    CHECK(r2.n_observations == 12);
    // Extra grid points only refine the RK4 steps; object terms move by the
    // discretization difference, not by any added likelihood.
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(r2.object_kl[i] == r1.object_kl[i]);
        CHECK(std::abs(r2.object_reconstruction[i] - r1.object_reconstruction[i]) < 1e-6);
    }
}

TEST_CASE("frozen-noise elbo gradient check on a 2-object toy") {
    // Step 1e-4 keeps round-off off the tiny attention-key gradients; the seeds
    // put no relu pre-activation within that step of its kink.
    const LgOde model = LgOde::create(tiny_model(), 3);
    const PreparedSample s = toy_sample(4);
    const std::vector<const PreparedSample*> mb{&s};
    const Tensor eps = fixed_noise(2, 3, 9);
    GradCheckOptions opt;
    opt.eps = 1e-4;
    const auto checks = param_grad_check(
        model.params(), [&](const Bound& b) { return elbo(b, model, mb, eps, 1.0).elbo; }, opt);
    for (const auto& c : checks) CHECK_MESSAGE(c.result.passed(1e-3), c.name << " " << c.result.max_rel_error);
}

TEST_CASE("kl weight zero leaves kl out of the gradient") {
    const LgOde model = LgOde::create(tiny_model(), 1);
    const PreparedSample s = toy_sample(2);
    const std::vector<const PreparedSample*> mb{&s};
    const Tensor eps = fixed_noise(2, 3, 4);

    ParamSet g1 = model.params(), g2 = model.params();
    g1.zero_grad();
    g2.zero_grad();
    {
        Tape t;
        const Bound b(t, model.params());
        const ElboResult r = elbo(b, model, mb, eps, 0.0);
        CHECK(r.report.kl > 0.0);
        CHECK(r.report.elbo == r.report.reconstruction);
        t.backward(r.elbo);
        b.accumulate_grads(g1);
    }
    {
        Tape t;
        const Bound b(t, model.params());
        const Rollout ro = rollout(b, model, mb, &eps);
        t.backward(model.ode().log_likelihood(ro.predictions, t.constant(ro.targets)));
        b.accumulate_grads(g2);
    }
    for (std::size_t k = 0; k < g1.size(); ++k)
        for (std::size_t j = 0; j < g1[k].grad.size(); ++j)
            CHECK(g1[k].grad[j] == doctest::Approx(g2[k].grad[j]).epsilon(1e-13).scale(1e-300));
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.model = tiny_model();
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS(c.validate());
    c.learning_rate = 1e-3;
    c.batch_size = 0;
    CHECK_THROWS(c.validate());
    c.batch_size = 4;
    c.observed_ratios = {0.0};
    CHECK_THROWS(c.validate());
}

TEST_CASE("training is seeded, logged and checkpointed") {
    const GeneratedData data = generate_data(small_data(6, 21));
    const auto root = std::filesystem::temp_directory_path() / "lgode_test_training";
    std::filesystem::remove_all(root);

    auto run = [&](const std::string& name, Task task) {
        TrainConfig c;
        c.model = tiny_model();
        c.task = task;
        c.epochs = 3;
        c.batch_size = 4;
        c.micro_batch = 3;
        c.learning_rate = 1e-2;
        c.seed = 5;
        c.out_dir = root / name;
        LgOde m = LgOde::create(c.model, 5);
        return train(m, data.train, &data.valid, c);
    };
    const TrainResult a = run("a", Task::interpolation);
    const TrainResult b = run("b", Task::interpolation);
    CHECK_FALSE(a.aborted);
    REQUIRE(a.history.size() == 6);
    CHECK(a.history[0].split == "train");
    CHECK(a.history[1].split == "valid");
    for (const auto& m : a.history) CHECK(std::isfinite(m.elbo));
    CHECK(a.best_epoch >= 1);
    CHECK(slurp(root / "a" / "metrics.jsonl") == slurp(root / "b" / "metrics.jsonl"));
    CHECK(slurp(root / "a" / "best.ckpt") == slurp(root / "b" / "best.ckpt"));
    CHECK(std::filesystem::exists(root / "a" / "last.ckpt"));
    CHECK(std::filesystem::exists(root / "a" / "timing.jsonl"));

    const ModelConfig loaded = ModelConfig::from_json(slurp(root / "a" / "model.json"));
    CHECK(loaded.to_json() == tiny_model().to_json());
    CHECK_NOTHROW(LgOde::load(loaded, root / "a" / "best.ckpt"));

    const TrainResult e = run("e", Task::extrapolation);
    CHECK_FALSE(e.aborted);
    std::filesystem::remove_all(root);
}

TEST_CASE("a non-finite loss aborts and restores the last good parameters") {
    const GeneratedData data = generate_data(small_data(4, 22));
    TrainConfig c;
    c.model = tiny_model();
    c.epochs = 2;
    c.batch_size = 4;
    LgOde m = LgOde::create(c.model, 5);
    ParamSet& ps = m.params();
    ps[ps.find("dec.bias")].value[0] = std::numeric_limits<double>::quiet_NaN();
    const Tensor before = ps[ps.find("enc.embed.weight")].value;
    const TrainResult r = train(m, data.train, nullptr, c);
    CHECK(r.aborted);
    CHECK(r.history.empty());
    const Tensor& after = ps[ps.find("enc.embed.weight")].value;
    CHECK(std::equal(after.values().begin(), after.values().end(), before.values().begin()));
}
