#include "lgode/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lgode::ad {

namespace {

Tape& same_tape(const char* op, Var a, Var b) {
    if (!a.valid() || a.tape() != b.tape()) throw ShapeError(op, "operands live on different tapes");
    return *a.tape();
}

struct Broadcast {
    Shape out;
    bool a_expanded = false;
    bool b_expanded = false;
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return {a};
    if (a.cols == b.cols) {
        if (b.rows == 1) return {a, false, true};
        if (a.rows == 1) return {b, true, false};
    }
    throw ShapeError(op, a, b);
}

// Adds g (out-shaped) into sink, summing over rows when the operand was expanded.
void accumulate_reduced(Tensor* sink, const Tensor& g, bool expanded) {
    if (sink == nullptr) return;
    if (!expanded) {
        for (std::size_t i = 0; i < g.size(); ++i) (*sink)[i] += g[i];
        return;
    }
    const std::size_t c = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) (*sink)[j] += g(r, j);
}

template <typename F>
Tensor elementwise(const Tensor& a, const Tensor& b, const Broadcast& bc, F f) {
    Tensor out(bc.out);
    const std::size_t c = bc.out.cols;
    for (std::size_t r = 0; r < bc.out.rows; ++r) {
        const double* ar = a.data() + (bc.a_expanded ? 0 : r * c);
        const double* br = b.data() + (bc.b_expanded ? 0 : r * c);
        double* o = out.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) o[j] = f(ar[j], br[j]);
    }
    return out;
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    const NodeId ia = a.id();
    Tape& t = *a.tape();
    const NodeId self = static_cast<NodeId>(t.size());
    return t.record(std::move(y), {ia}, [ia, self, deriv](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        const Tensor& xv = tp.value(ia);
        const Tensor& yv = tp.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * deriv(xv[i], yv[i]);
    });
}

void check_index(const char* op, const Index& idx, std::size_t bound) {
    if (!idx) throw ShapeError(op, "null index");
    for (std::uint32_t v : *idx)
        if (v >= bound) throw ShapeError(op, "index " + std::to_string(v) + " out of range " + std::to_string(bound));
}

}  // namespace

Index make_index(std::vector<std::uint32_t> idx) {
    return std::make_shared<const std::vector<std::uint32_t>>(std::move(idx));
}

Var add(Var a, Var b) {
    Tape& t = same_tape("add", a, b);
    const auto bc = plan_broadcast("add", a.shape(), b.shape());
    Tensor out = elementwise(a.value(), b.value(), bc, [](double x, double y) { return x + y; });
    const NodeId ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib, bc](Tape& tp, const Tensor& g) {
        accumulate_reduced(tp.grad_sink(ia), g, bc.a_expanded);
        accumulate_reduced(tp.grad_sink(ib), g, bc.b_expanded);
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape("sub", a, b);
    const auto bc = plan_broadcast("sub", a.shape(), b.shape());
    Tensor out = elementwise(a.value(), b.value(), bc, [](double x, double y) { return x - y; });
    const NodeId ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib, bc](Tape& tp, const Tensor& g) {
        accumulate_reduced(tp.grad_sink(ia), g, bc.a_expanded);
        if (tp.grad_sink(ib) == nullptr) return;
        Tensor ng = g;
        for (double& v : ng.values()) v = -v;
        accumulate_reduced(tp.grad_sink(ib), ng, bc.b_expanded);
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape("mul", a, b);
    const auto bc = plan_broadcast("mul", a.shape(), b.shape());
    Tensor out = elementwise(a.value(), b.value(), bc, [](double x, double y) { return x * y; });
    const NodeId ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib, bc](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(ia);
        const Tensor& bv = tp.value(ib);
        if (tp.grad_sink(ia) != nullptr) {
            Broadcast gb{g.shape(), false, bc.b_expanded};
            accumulate_reduced(tp.grad_sink(ia), elementwise(g, bv, gb, [](double x, double y) { return x * y; }),
                               bc.a_expanded);
        }
        if (tp.grad_sink(ib) != nullptr) {
            Broadcast ga{g.shape(), false, bc.a_expanded};
            accumulate_reduced(tp.grad_sink(ib), elementwise(g, av, ga, [](double x, double y) { return x * y; }),
                               bc.b_expanded);
        }
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
    Tape& t = same_tape("matmul", a, b);
    const Shape sa = a.shape(), sb = b.shape();
    if (sa.cols != sb.rows) throw ShapeError("matmul", sa, sb);
    Tensor out({sa.rows, sb.cols});
    kernels::matmul(a.value().data(), b.value().data(), out.data(), sa.rows, sa.cols, sb.cols);
    const NodeId ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib, sa, sb](Tape& tp, const Tensor& g) {
        if (Tensor* s = tp.grad_sink(ia))
            kernels::matmul_nt(g.data(), tp.value(ib).data(), s->data(), sa.rows, sb.cols, sa.cols);
        if (Tensor* s = tp.grad_sink(ib))
            kernels::matmul_tn(tp.value(ia).data(), g.data(), s->data(), sb.rows, sa.rows, sb.cols);
    });
}

Var transpose(Var a) {
    const Tensor& x = a.value();
    Tensor out({x.cols(), x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
    const NodeId ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*s)(c, r) += g(r, c);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols", "no inputs");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    std::vector<NodeId> ids;
    std::vector<std::size_t> widths;
    for (const Var& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
        if (p.tape() != parts[0].tape()) throw ShapeError("concat_cols", "operands live on different tapes");
        ids.push_back(p.id());
        widths.push_back(p.cols());
        cols += p.cols();
    }
    Tensor out({rows, cols});
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * cols + off);
        off += v.cols();
    }
    auto parents = ids;
    return parts[0].tape()->record(std::move(out), std::move(parents), [ids, widths](Tape& tp, const Tensor& g) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (Tensor* s = tp.grad_sink(ids[k])) {
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c) (*s)(r, c) += g(r, o + c);
            }
            o += widths[k];
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows", "no inputs");
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    std::vector<NodeId> ids;
    std::vector<std::size_t> heights;
    for (const Var& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows", parts[0].shape(), p.shape());
        if (p.tape() != parts[0].tape()) throw ShapeError("concat_rows", "operands live on different tapes");
        ids.push_back(p.id());
        heights.push_back(p.rows());
        rows += p.rows();
    }
    Tensor out({rows, cols});
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy_n(p.value().data(), p.value().size(), out.data() + off);
        off += p.value().size();
    }
    auto parents = ids;
    return parts[0].tape()->record(std::move(out), std::move(parents), [ids, heights, cols](Tape& tp, const Tensor& g) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t n = heights[k] * cols;
            if (Tensor* s = tp.grad_sink(ids[k]))
                for (std::size_t i = 0; i < n; ++i) (*s)[i] += g[o + i];
            o += n;
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Shape sa = a.shape();
    if (begin > end || end > sa.cols)
        throw ShapeError("slice_cols", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") outside " + sa.str());
    const std::size_t w = end - begin;
    Tensor out({sa.rows, w});
    for (std::size_t r = 0; r < sa.rows; ++r)
        std::copy_n(a.value().data() + r * sa.cols + begin, w, out.data() + r * w);
    const NodeId ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, begin, w](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) (*s)(r, begin + c) += g(r, c);
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Shape sa = a.shape();
    if (begin > end || end > sa.rows)
        throw ShapeError("slice_rows", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") outside " + sa.str());
    Tensor out({end - begin, sa.cols});
    std::copy_n(a.value().data() + begin * sa.cols, out.size(), out.data());
    const NodeId ia = a.id();
    const std::size_t off = begin * sa.cols;
    return a.tape()->record(std::move(out), {ia}, [ia, off](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*s)[off + i] += g[i];
    });
}

Var broadcast_rows(Var a, std::size_t rows) {
    if (a.rows() != 1) throw ShapeError("broadcast_rows", "operand must have one row, got " + a.shape().str());
    const std::size_t c = a.cols();
    Tensor out({rows, c});
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(a.value().data(), c, out.data() + r * c);
    const NodeId ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, const Tensor& g) {
        accumulate_reduced(tp.grad_sink(ia), g, true);
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const NodeId ia = a.id();
    return a.tape()->record(Tensor::scalar(s), {ia}, [ia](Tape& tp, const Tensor& g) {
        Tensor* sink = tp.grad_sink(ia);
        if (sink == nullptr) return;
        const double gv = g[0];
        for (double& v : sink->values()) v += gv;
    });
}

Var sum(Var a, Axis axis) {
    const Tensor& x = a.value();
    const NodeId ia = a.id();
    if (axis == Axis::rows) {
        Tensor out({1, x.cols()});
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
        return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, const Tensor& g) {
            Tensor* s = tp.grad_sink(ia);
            if (s == nullptr) return;
            for (std::size_t r = 0; r < s->rows(); ++r)
                for (std::size_t c = 0; c < s->cols(); ++c) (*s)(r, c) += g[c];
        });
    }
    Tensor out({x.rows(), 1});
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out[r] += x(r, c);
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        for (std::size_t r = 0; r < s->rows(); ++r)
            for (std::size_t c = 0; c < s->cols(); ++c) (*s)(r, c) += g[r];
    });
}

Var mean(Var a) {
    if (a.value().size() == 0) throw ShapeError("mean", "empty operand");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean(Var a, Axis axis) {
    const std::size_t n = axis == Axis::rows ? a.rows() : a.cols();
    if (n == 0) throw ShapeError("mean", "empty reduction axis");
    return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
    return unary(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax(Var a, Axis axis) {
    const Tensor& x = a.value();
    const std::size_t R = x.rows(), C = x.cols();
    Tensor y(x.shape());
    // Normalize along "lines": each row for Axis::cols, each column for Axis::rows.
    const bool by_row = axis == Axis::cols;
    const std::size_t lines = by_row ? R : C, len = by_row ? C : R;
    auto at = [&](std::size_t line, std::size_t k) { return by_row ? line * C + k : k * C + line; };
    for (std::size_t l = 0; l < lines; ++l) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < len; ++k) m = std::max(m, x[at(l, k)]);
        double z = 0.0;
        for (std::size_t k = 0; k < len; ++k) z += (y[at(l, k)] = std::exp(x[at(l, k)] - m));
        for (std::size_t k = 0; k < len; ++k) y[at(l, k)] /= z;
    }
    const NodeId ia = a.id();
    Tape& t = *a.tape();
    const NodeId self = static_cast<NodeId>(t.size());
    return t.record(std::move(y), {ia}, [ia, self, by_row, lines, len, C](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        const Tensor& yv = tp.value(self);
        auto at = [&](std::size_t line, std::size_t k) { return by_row ? line * C + k : k * C + line; };
        for (std::size_t l = 0; l < lines; ++l) {
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k) dot += g[at(l, k)] * yv[at(l, k)];
            for (std::size_t k = 0; k < len; ++k) (*s)[at(l, k)] += yv[at(l, k)] * (g[at(l, k)] - dot);
        }
    });
}

Var gather_rows(Var a, const Index& idx) {
    check_index("gather_rows", idx, a.rows());
    const std::size_t c = a.cols();
    Tensor out({idx->size(), c});
    for (std::size_t k = 0; k < idx->size(); ++k)
        std::copy_n(a.value().data() + std::size_t{(*idx)[k]} * c, c, out.data() + k * c);
    const NodeId ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, idx, c](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        for (std::size_t k = 0; k < idx->size(); ++k) {
            double* dst = s->data() + std::size_t{(*idx)[k]} * c;
            const double* src = g.data() + k * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
    });
}

Var segment_sum(Var a, const Index& seg, std::size_t n_segments) {
    check_index("segment_sum", seg, n_segments);
    if (seg->size() != a.rows()) throw ShapeError("segment_sum", "segment ids must match row count " + a.shape().str());
    const std::size_t c = a.cols();
    Tensor out({n_segments, c});
    for (std::size_t k = 0; k < seg->size(); ++k) {
        double* dst = out.data() + std::size_t{(*seg)[k]} * c;
        const double* src = a.value().data() + k * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    const NodeId ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, seg, c](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        for (std::size_t k = 0; k < seg->size(); ++k) {
            const double* src = g.data() + std::size_t{(*seg)[k]} * c;
            double* dst = s->data() + k * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
    });
}

Var segment_softmax(Var scores, const Index& seg, std::size_t n_segments) {
    check_index("segment_softmax", seg, n_segments);
    if (scores.cols() != 1 || seg->size() != scores.rows())
        throw ShapeError("segment_softmax", "expected " + std::to_string(seg->size()) + "x1 scores, got " +
                                                scores.shape().str());
    const Tensor& x = scores.value();
    std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
    std::vector<double> z(n_segments, 0.0);
    for (std::size_t k = 0; k < seg->size(); ++k) mx[(*seg)[k]] = std::max(mx[(*seg)[k]], x[k]);
    Tensor y(x.shape());
    for (std::size_t k = 0; k < seg->size(); ++k) z[(*seg)[k]] += (y[k] = std::exp(x[k] - mx[(*seg)[k]]));
    for (std::size_t k = 0; k < seg->size(); ++k) y[k] /= z[(*seg)[k]];
    const NodeId ia = scores.id();
    Tape& t = *scores.tape();
    const NodeId self = static_cast<NodeId>(t.size());
    return t.record(std::move(y), {ia}, [ia, self, seg, n_segments](Tape& tp, const Tensor& g) {
        Tensor* s = tp.grad_sink(ia);
        if (s == nullptr) return;
        const Tensor& yv = tp.value(self);
        std::vector<double> dot(n_segments, 0.0);
        for (std::size_t k = 0; k < seg->size(); ++k) dot[(*seg)[k]] += g[k] * yv[k];
        for (std::size_t k = 0; k < seg->size(); ++k) (*s)[k] += yv[k] * (g[k] - dot[(*seg)[k]]);
    });
}

Var row_dot(Var a, Var b) {
    Tape& t = same_tape("row_dot", a, b);
    if (a.shape() != b.shape()) throw ShapeError("row_dot", a.shape(), b.shape());
    const std::size_t R = a.rows(), C = a.cols();
    Tensor out({R, 1});
    for (std::size_t r = 0; r < R; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += a.value()(r, c) * b.value()(r, c);
        out[r] = s;
    }
    const NodeId ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib, R, C](Tape& tp, const Tensor& g) {
        if (Tensor* s = tp.grad_sink(ia)) {
            const Tensor& bv = tp.value(ib);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) (*s)(r, c) += g[r] * bv(r, c);
        }
        if (Tensor* s = tp.grad_sink(ib)) {
            const Tensor& av = tp.value(ia);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) (*s)(r, c) += g[r] * av(r, c);
        }
    });
}

Var scale_rows(Var a, Var s) {
    Tape& t = same_tape("scale_rows", a, s);
    if (s.cols() != 1 || s.rows() != a.rows()) throw ShapeError("scale_rows", a.shape(), s.shape());
    const std::size_t R = a.rows(), C = a.cols();
    Tensor out(a.shape());
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out(r, c) = a.value()(r, c) * s.value()[r];
    const NodeId ia = a.id(), is = s.id();
    return t.record(std::move(out), {ia, is}, [ia, is, R, C](Tape& tp, const Tensor& g) {
        if (Tensor* sink = tp.grad_sink(ia)) {
            const Tensor& sv = tp.value(is);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) (*sink)(r, c) += g(r, c) * sv[r];
        }
        if (Tensor* sink = tp.grad_sink(is)) {
            const Tensor& av = tp.value(ia);
            for (std::size_t r = 0; r < R; ++r) {
                double d = 0.0;
                for (std::size_t c = 0; c < C; ++c) d += g(r, c) * av(r, c);
                (*sink)[r] += d;
            }
        }
    });
}

Var pair_relu_sum(Var p, Var q, std::shared_ptr<const kernels::PairList> pairs) {
    Tape& t = same_tape("pair_relu_sum", p, q);
    if (p.shape() != q.shape()) throw ShapeError("pair_relu_sum", p.shape(), q.shape());
    if (!pairs || pairs->n_rows != p.rows())
        throw ShapeError("pair_relu_sum", "pair list does not cover " + std::to_string(p.rows()) + " rows");
    const std::size_t w = p.cols();
    Tensor out(p.shape());
    kernels::pair_relu_sum(p.value().data(), q.value().data(), *pairs, w, out.data());
    const NodeId ip = p.id(), iq = q.id();
    return t.record(std::move(out), {ip, iq}, [ip, iq, pairs, w](Tape& tp, const Tensor& g) {
        Tensor* dp = tp.grad_sink(ip);
        Tensor* dq = tp.grad_sink(iq);
        kernels::pair_relu_sum_backward(tp.value(ip).data(), tp.value(iq).data(), g.data(), *pairs, w,
                                        dp != nullptr ? dp->data() : nullptr, dq != nullptr ? dq->data() : nullptr);
    });
}

}  // namespace lgode::ad
