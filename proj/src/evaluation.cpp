#include "lgode/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace lgode {

using namespace ad;

Tensor target_matrix(const PreparedSample& s) {
    const ObservationSet& tg = s.task.targets;
    std::vector<double> v;
    for (std::size_t i = 0; i < tg.n_objects(); ++i)
        v.insert(v.end(), tg.objects[i].features.begin(), tg.objects[i].features.end());
    return Tensor(Shape{tg.total_observations(), tg.feature_dim}, std::move(v));
}

Predictor model_predictor(const LgOde& model) {
    return [&model](std::span<const PreparedSample* const> samples) {
        Tape tape;
        const Bound b(tape, model.params());
        const Rollout r = rollout(b, model, samples, nullptr);
        const Tensor& pred = r.predictions.value();
        const std::size_t D = pred.cols();
        std::vector<std::vector<double>> blocks(samples.size());
        for (std::size_t k = 0; k < pred.rows(); ++k) {
            auto& blk = blocks[r.target_sample[k]];
            for (std::size_t d = 0; d < D; ++d) blk.push_back(pred(k, d));
        }
        std::vector<Tensor> out;
        for (auto& blk : blocks) {
            const std::size_t rows = blk.size() / D;
            out.emplace_back(Shape{rows, D}, std::move(blk));
        }
        return out;
    };
}

Predictor zero_predictor() {
    return [](std::span<const PreparedSample* const> samples) {
        std::vector<Tensor> out;
        for (const auto* s : samples) out.emplace_back(target_matrix(*s).shape(), 0.0);
        return out;
    };
}

Predictor oracle_predictor() {
    return [](std::span<const PreparedSample* const> samples) {
        std::vector<Tensor> out;
        for (const auto* s : samples) out.push_back(target_matrix(*s));
        return out;
    };
}

Predictor locf_predictor() {
    return [](std::span<const PreparedSample* const> samples) {
        std::vector<Tensor> out;
        for (const auto* s : samples) {
            const ObservationSet& tg = s->task.targets;
            const ObservationSet& cd = s->task.conditioning;
            const std::size_t D = tg.feature_dim;
            std::vector<double> v;
            for (std::size_t i = 0; i < tg.n_objects(); ++i) {
                const auto& ct = cd.objects[i].times;
                if (ct.empty()) throw std::invalid_argument("locf: object without conditioning observations");
                for (double t : tg.objects[i].times) {
                    const auto it = std::upper_bound(ct.begin(), ct.end(), t);
                    const std::size_t k = it == ct.begin() ? 0 : static_cast<std::size_t>(it - ct.begin()) - 1;
                    const double* f = cd.feature(i, k);
                    v.insert(v.end(), f, f + D);
                }
            }
            const std::size_t rows = v.size() / D;
            out.emplace_back(Shape{rows, D}, std::move(v));
        }
        return out;
    };
}

MseReport evaluate(const Predictor& predict, std::span<const PreparedSample> samples, std::size_t micro_batch,
                   const ScaleRecord* denormalize) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    if (micro_batch == 0) throw std::invalid_argument("evaluate: micro_batch must be >= 1");
    MseReport rep;
    rep.per_sample.assign(samples.size(), 0.0);
    double total = 0.0;

    // Chunks of consecutive samples with equal t_start.
    std::size_t start = 0;
    while (start < samples.size()) {
        std::vector<const PreparedSample*> mb;
        std::size_t k = start;
        while (k < samples.size() && mb.size() < micro_batch && samples[k].task.t_start == samples[start].task.t_start)
            mb.push_back(&samples[k++]);
        const std::vector<Tensor> pred = predict(mb);
        if (pred.size() != mb.size()) throw std::runtime_error("evaluate: predictor returned the wrong sample count");
        for (std::size_t s = 0; s < mb.size(); ++s) {
            const Tensor tg = target_matrix(*mb[s]);
            if (pred[s].shape() != tg.shape()) throw ShapeError("evaluate", pred[s].shape(), tg.shape());
            double sq = 0.0;
            for (std::size_t r = 0; r < tg.rows(); ++r)
                for (std::size_t d = 0; d < tg.cols(); ++d) {
                    double e = pred[s](r, d) - tg(r, d);
                    if (denormalize != nullptr) e *= denormalize->scale.at(d);
                    sq += e * e;
                }
            rep.per_sample[start + s] = tg.size() > 0 ? sq / static_cast<double>(tg.size()) : 0.0;
            total += sq;
            rep.entries += tg.size();
        }
        start = k;
    }
    if (rep.entries == 0) throw std::invalid_argument("evaluate: no target entries");
    rep.samples = samples.size();
    rep.mse = total / static_cast<double>(rep.entries);
    if (rep.samples > 1) {
        double m = 0.0, v = 0.0;
        for (double x : rep.per_sample) m += x;
        m /= static_cast<double>(rep.samples);
        for (double x : rep.per_sample) v += (x - m) * (x - m);
        v /= static_cast<double>(rep.samples - 1);
        rep.ci = 1.96 * std::sqrt(v / static_cast<double>(rep.samples));
    }
    return rep;
}

LgOde load_run(const std::filesystem::path& run_dir, const std::string& checkpoint) {
    std::ifstream in(run_dir / "model.json");
    if (!in) throw std::runtime_error("cannot open " + (run_dir / "model.json").string());
    std::stringstream ss;
    ss << in.rdbuf();
    return LgOde::load(ModelConfig::from_json(ss.str()), run_dir / checkpoint);
}

std::vector<MatrixCell> run_experiment_matrix(const MatrixSpec& spec, const Dataset& test,
                                              const ModelProvider& models) {
    std::vector<MatrixCell> cells;
    std::vector<std::string> variants = spec.variants;
    if (spec.baselines) {
        variants.push_back("zero");
        variants.push_back("locf");
    }
    for (Task task : spec.tasks)
        for (double ratio : spec.ratios) {
            std::vector<PreparedSample> samples;
            std::string split_error;
            try {
                const double r[] = {ratio};
                samples = prepare_split(test, task, r, derive_seed(spec.seed, static_cast<std::uint64_t>(task)), true);
            } catch (const std::exception& e) {
                split_error = e.what();
            }
            for (const std::string& variant : variants) {
                MatrixCell cell;
                cell.row = {task, ratio, variant, 0.0, 0.0, spec.seed};
                try {
                    if (!split_error.empty()) throw std::runtime_error(split_error);
                    Predictor p;
                    if (variant == "zero")
                        p = zero_predictor();
                    else if (variant == "locf")
                        p = locf_predictor();
                    else
                        p = model_predictor(models(task, variant));
                    cell.report = evaluate(p, samples, spec.micro_batch);
                    cell.row.mse = cell.report->mse;
                    cell.row.ci = cell.report->ci;
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                cells.push_back(std::move(cell));
            }
        }
    return cells;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number: " + s);
    return v;
}

}  // namespace

std::string matrix_csv(std::span<const MatrixCell> cells) {
    std::string out = std::string(kMatrixCsvHeader) + "\n";
    for (const auto& c : cells) {
        if (!c.error.empty()) continue;
        const auto& r = c.row;
        out += to_string(r.task) + "," + fmt(r.ratio) + "," + r.variant + "," + fmt(r.mse) + "," + fmt(r.ci) + "," +
               std::to_string(r.seed) + "\n";
    }
    return out;
}

std::vector<MatrixRow> parse_matrix_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMatrixCsvHeader) throw std::invalid_argument("matrix csv: bad header");
    std::vector<MatrixRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 6) throw std::invalid_argument("matrix csv: expected 6 fields in '" + line + "'");
        rows.push_back({task_from_string(f[0]), parse_double(f[1]), f[2], parse_double(f[3]), parse_double(f[4]),
                        std::stoull(f[5])});
    }
    return rows;
}

std::string matrix_summary(std::span<const MatrixCell> cells) {
    std::ostringstream os;
    std::size_t failed = 0;
    for (const auto& c : cells) {
        os << to_string(c.row.task) << " ratio " << c.row.ratio << " " << c.row.variant << ": ";
        if (c.error.empty())
            os << "mse " << c.row.mse << " +- " << c.row.ci << " (" << c.report->samples << " samples)\n";
        else {
            os << "FAILED " << c.error << "\n";
            ++failed;
        }
    }
    os << cells.size() - failed << " of " << cells.size() << " cells succeeded\n";
    return os.str();
}

TrajectoryPlot trajectory_plot(const LgOde& model, const PreparedSample& s, std::size_t dense_points) {
    if (dense_points < 2) throw std::invalid_argument("trajectory_plot: need at least 2 dense points");
    const ObservationSet& tg = s.task.targets;
    double t_end = s.task.t_start;
    for (const auto& o : tg.objects)
        if (!o.times.empty()) t_end = std::max(t_end, o.times.back());

    PreparedSample dense = s;
    for (auto& o : dense.task.targets.objects) {
        o.times.clear();
        for (std::size_t k = 0; k < dense_points; ++k)
            o.times.push_back(s.task.t_start + (t_end - s.task.t_start) * static_cast<double>(k) /
                                                   static_cast<double>(dense_points - 1));
        o.features.assign(dense_points * tg.feature_dim, 0.0);
    }
    const PreparedSample* one[] = {&dense};
    const Tensor pred = model_predictor(model)(one).front();

    TrajectoryPlot p;
    const std::size_t N = tg.n_objects();
    p.truth.resize(N);
    p.observed.resize(N);
    p.predicted.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < tg.objects[i].size(); ++k)
            p.truth[i].emplace_back(tg.feature(i, k)[0], tg.feature(i, k)[1]);
        const auto& cd = s.task.conditioning;
        for (std::size_t k = 0; k < cd.objects[i].size(); ++k)
            p.observed[i].emplace_back(cd.feature(i, k)[0], cd.feature(i, k)[1]);
        for (std::size_t k = 0; k < dense_points; ++k)
            p.predicted[i].emplace_back(pred(i * dense_points + k, 0), pred(i * dense_points + k, 1));
    }
    return p;
}

namespace {

const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

// Fixed-size canvas mapping data bounds to pixels.
class Canvas {
public:
    Canvas(double x0, double x1, double y0, double y1, std::string title, std::string xlabel, std::string ylabel) {
        if (!(x1 > x0)) x1 = x0 + 1.0;
        if (!(y1 > y0)) y1 = y0 + 1.0;
        const double px = 0.05 * (x1 - x0), py = 0.05 * (y1 - y0);
        x0_ = x0 - px, x1_ = x1 + px, y0_ = y0 - py, y1_ = y1 + py;
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
            << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\""
            << kH - kT - kB << "\" fill=\"none\" stroke=\"#444\"/>\n"
            << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
            << "</text>\n"
            << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n"
            << "<text x=\"14\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << kH / 2
            << ")\">" << ylabel << "</text>\n";
        for (int k = 0; k <= 4; ++k) {
            const double fx = x0_ + (x1_ - x0_) * k / 4.0, fy = y0_ + (y1_ - y0_) * k / 4.0;
            os_ << "<text x=\"" << sx(fx) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\">" << tick(fx)
                << "</text>\n"
                << "<text x=\"" << kL - 6 << "\" y=\"" << sy(fy) + 4 << "\" text-anchor=\"end\">" << tick(fy)
                << "</text>\n";
        }
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& colour, bool dashed) {
        if (pts.empty()) return;
        os_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\""
            << (dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
        for (const auto& [x, y] : pts) os_ << sx(x) << "," << sy(y) << " ";
        os_ << "\"/>\n";
    }

    void dots(const std::vector<std::pair<double, double>>& pts, const std::string& colour, bool filled) {
        for (const auto& [x, y] : pts)
            os_ << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"2.5\" stroke=\"" << colour
                << "\" fill=\"" << (filled ? colour : "none") << "\"/>\n";
    }

    void legend(int row, const std::string& colour, const std::string& label) {
        const int y = kT + 14 + 16 * row;
        os_ << "<line x1=\"" << kW - kR + 10 << "\" y1=\"" << y - 4 << "\" x2=\"" << kW - kR + 30 << "\" y2=\"" << y - 4
            << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << kW - kR + 34 << "\" y=\"" << y << "\">" << label << "</text>\n";
    }

    std::string finish() {
        os_ << "</svg>\n";
        return os_.str();
    }

private:
    static constexpr int kW = 720, kH = 480, kL = 60, kR = 170, kT = 30, kB = 40;
    double sx(double x) const { return kL + (x - x0_) / (x1_ - x0_) * (kW - kL - kR); }
    double sy(double y) const { return kH - kB - (y - y0_) / (y1_ - y0_) * (kH - kT - kB); }
    static std::string tick(double v) {
        std::ostringstream s;
        s.precision(3);
        s << v;
        return s.str();
    }

    double x0_, x1_, y0_, y1_;
    std::ostringstream os_;
};

struct Bounds {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    void add(double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return;
        x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
    bool empty() const { return !(x1 >= x0); }
};

}  // namespace

std::string render_svg(const TrajectoryPlot& plot) {
    Bounds bb;
    for (const auto* set : {&plot.truth, &plot.predicted, &plot.observed})
        for (const auto& obj : *set)
            for (const auto& [x, y] : obj) bb.add(x, y);
    if (bb.empty()) bb = {0.0, 1.0, 0.0, 1.0};
    Canvas c(bb.x0, bb.x1, bb.y0, bb.y1, plot.title, "x", "y");
    for (std::size_t i = 0; i < plot.truth.size(); ++i) {
        const std::string col = kColours[i % std::size(kColours)];
        c.polyline(plot.truth[i], col, false);
        c.dots(plot.truth[i], col, false);
        if (i < plot.observed.size()) c.dots(plot.observed[i], col, true);
        if (i < plot.predicted.size()) c.polyline(plot.predicted[i], col, true);
        c.legend(static_cast<int>(i), col, "object " + std::to_string(i));
    }
    c.legend(static_cast<int>(plot.truth.size()) + 1, "#000", "solid: truth");
    c.legend(static_cast<int>(plot.truth.size()) + 2, "#000", "dashed: predicted");
    c.legend(static_cast<int>(plot.truth.size()) + 3, "#000", "filled: conditioning");
    return c.finish();
}

std::string render_matrix_svg(std::span<const MatrixRow> rows) {
    std::map<std::string, std::vector<std::pair<double, double>>> lines;
    Bounds bb;
    for (const auto& r : rows) {
        lines[to_string(r.task) + " " + r.variant].emplace_back(r.ratio, r.mse);
        bb.add(r.ratio, r.mse);
    }
    if (bb.empty()) bb = {0.0, 1.0, 0.0, 1.0};
    Canvas c(bb.x0, bb.x1, std::min(0.0, bb.y0), bb.y1, "test MSE", "observed ratio", "MSE");
    int k = 0;
    for (auto& [name, pts] : lines) {
        std::sort(pts.begin(), pts.end());
        const std::string col = kColours[k % std::size(kColours)];
        c.polyline(pts, col, name.rfind("extrapolation", 0) == 0);
        c.dots(pts, col, true);
        c.legend(k++, col, name);
    }
    return c.finish();
}

std::string render_metrics_svg(const std::string& metrics_jsonl) {
    std::map<std::string, std::vector<std::pair<double, double>>> lines;
    Bounds bb;
    std::istringstream in(metrics_jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const double e = j.at("epoch").get<double>(), v = -j.at("elbo").get<double>();
        lines[j.at("split").get<std::string>()].emplace_back(e, v);
        bb.add(e, v);
    }
    if (bb.empty()) bb = {0.0, 1.0, 0.0, 1.0};
    Canvas c(bb.x0, bb.x1, bb.y0, bb.y1, "negative ELBO per sample", "epoch", "-ELBO");
    int k = 0;
    for (const auto& [name, pts] : lines) {
        const std::string col = kColours[k % std::size(kColours)];
        c.polyline(pts, col, false);
        c.legend(k++, col, name);
    }
    return c.finish();
}

}  // namespace lgode
