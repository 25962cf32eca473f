// Times the OpenMP kernels against their serial reference twins, plus one
// training step of the full model.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lgode/kernels.hpp"
#include "lgode/training.hpp"

namespace k = lgode::kernels;

namespace {

double median_ms(const std::function<void()>& f, int reps) {
    f();  // warm-up
    std::vector<double> t;
    for (int r = 0; r < reps; ++r) {
        const auto a = std::chrono::steady_clock::now();
        f();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

void row(const std::string& name, double ref, double omp, double diff) {
    std::printf("%-34s %10.3f %10.3f %8.2fx %10.2e\n", name.c_str(), ref, omp, ref / omp, diff);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel benchmark: serial reference against OpenMP"};
    int reps = 7;
    std::size_t rows = 4096;
    bool step = true;
    app.add_option("--reps", reps, "Timed repetitions per kernel (median reported)");
    app.add_option("--rows", rows, "Rows of the activation matrices");
    app.add_flag("!--no-step", step, "Skip the full training-step timing");
    CLI11_PARSE(app, argc, argv);

    std::mt19937_64 rng(1);
    std::printf("threads: %d\n", k::max_threads());
    std::printf("%-34s %10s %10s %9s %10s\n", "kernel", "ref ms", "omp ms", "speedup", "max |diff|");

    for (std::size_t width : {64, 128}) {
        const std::size_t m = rows, kk = width, n = width;
        const auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
        std::vector<double> c1(m * n), c2(m * n);
        const std::string shape = std::to_string(m) + "x" + std::to_string(kk) + "x" + std::to_string(n);
        const double r = median_ms([&] { k::reference::matmul(a.data(), b.data(), c1.data(), m, kk, n); }, reps);
        const double o = median_ms([&] { k::matmul(a.data(), b.data(), c2.data(), m, kk, n); }, reps);
        row("matmul " + shape, r, o, max_diff(c1, c2));

        const auto g = random_vec(m * n, rng);
        std::vector<double> w1(kk * n, 0.0), w2(kk * n, 0.0);
        const double rt = median_ms([&] { std::fill(w1.begin(), w1.end(), 0.0); k::reference::matmul_tn(a.data(), g.data(), w1.data(), kk, m, n); }, reps);
        const double ot = median_ms([&] { std::fill(w2.begin(), w2.end(), 0.0); k::matmul_tn(a.data(), g.data(), w2.data(), kk, m, n); }, reps);
        row("matmul_tn " + shape, rt, ot, max_diff(w1, w2));

        std::vector<double> d1(m * kk, 0.0), d2(m * kk, 0.0);
        const double rn = median_ms([&] { std::fill(d1.begin(), d1.end(), 0.0); k::reference::matmul_nt(g.data(), b.data(), d1.data(), m, n, kk); }, reps);
        const double on = median_ms([&] { std::fill(d2.begin(), d2.end(), 0.0); k::matmul_nt(g.data(), b.data(), d2.data(), m, n, kk); }, reps);
        row("matmul_nt " + shape, rn, on, max_diff(d1, d2));
    }

    {
        // Blocks of 5 fully connected objects, the relation sum's layout.
        const std::size_t width = 128, block = 5;
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
        for (std::size_t s = 0; s + block <= rows; s += block)
            for (std::size_t i = 0; i < block; ++i)
                for (std::size_t j = 0; j < block; ++j)
                    if (i != j) pairs.emplace_back(static_cast<std::uint32_t>(s + i), static_cast<std::uint32_t>(s + j));
        const auto pl = k::PairList::build(rows, pairs);
        const auto p = random_vec(rows * width, rng), q = random_vec(rows * width, rng), g = random_vec(rows * width, rng);
        std::vector<double> o1(rows * width), o2(rows * width);
        const double r = median_ms([&] { k::reference::pair_relu_sum(p.data(), q.data(), pl, width, o1.data()); }, reps);
        const double o = median_ms([&] { k::pair_relu_sum(p.data(), q.data(), pl, width, o2.data()); }, reps);
        row("pair_relu_sum " + std::to_string(pl.size()) + " pairs", r, o, max_diff(o1, o2));
        std::vector<double> dp1(rows * width), dq1(rows * width), dp2(rows * width), dq2(rows * width);
        const double rb = median_ms([&] {
            std::fill(dp1.begin(), dp1.end(), 0.0), std::fill(dq1.begin(), dq1.end(), 0.0);
            k::reference::pair_relu_sum_backward(p.data(), q.data(), g.data(), pl, width, dp1.data(), dq1.data());
        }, reps);
        const double ob = median_ms([&] {
            std::fill(dp2.begin(), dp2.end(), 0.0), std::fill(dq2.begin(), dq2.end(), 0.0);
            k::pair_relu_sum_backward(p.data(), q.data(), g.data(), pl, width, dp2.data(), dq2.data());
        }, reps);
        row("pair_relu_sum_backward", rb, ob, std::max(max_diff(dp1, dp2), max_diff(dq1, dq2)));
    }

    if (step) {
        using namespace lgode;
        GenDataConfig dc;
        dc.sim.n_objects = 3;
        dc.train_samples = 16;
        dc.valid_samples = 1;
        dc.test_samples = 1;
        const GeneratedData data = generate_data(dc);
        const double ratios[] = {0.6};
        const auto samples = prepare_split(data.train, Task::interpolation, ratios, 1, false);
        std::vector<const PreparedSample*> mb;
        for (const auto& s : samples) mb.push_back(&s);
        LgOde model = LgOde::create(ModelConfig{}, 1);
        std::mt19937_64 noise(2);
        const Tensor eps = draw_noise(mb, model.config().encoder.latent, noise);
        const double ms = median_ms([&] {
            ad::Tape tape;
            const Bound b(tape, model.params());
            const ElboResult r = elbo(b, model, mb, eps, 1.0);
            tape.backward(r.elbo);
        }, std::max(1, reps / 3));
        std::printf("elbo forward+backward, 16 samples x 3 objects, default model: %.1f ms\n", ms);
    }
    return 0;
}
