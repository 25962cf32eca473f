#include "lgode/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lgode::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

}  // namespace

PairList PairList::build(std::size_t n_rows, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
    PairList pl;
    pl.n_rows = n_rows;
    pl.by_target_offsets.assign(n_rows + 1, 0);
    pl.by_source_offsets.assign(n_rows + 1, 0);
    for (const auto& [i, j] : pairs) {
        if (i >= n_rows || j >= n_rows) throw std::out_of_range("PairList: index outside row range");
        ++pl.by_target_offsets[i + 1];
        ++pl.by_source_offsets[j + 1];
    }
    for (std::size_t r = 0; r < n_rows; ++r) {
        pl.by_target_offsets[r + 1] += pl.by_target_offsets[r];
        pl.by_source_offsets[r + 1] += pl.by_source_offsets[r];
    }
    pl.by_target_source.resize(pairs.size());
    pl.by_source_target.resize(pairs.size());
    std::vector<std::uint32_t> fill_t(pl.by_target_offsets.begin(), pl.by_target_offsets.end() - 1);
    std::vector<std::uint32_t> fill_s(pl.by_source_offsets.begin(), pl.by_source_offsets.end() - 1);
    for (const auto& [i, j] : pairs) {
        pl.by_target_source[fill_t[i]++] = j;
        pl.by_source_target[fill_s[j]++] = i;
    }
    return pl;
}

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

// c[rows x cols] += a[rows x k] b[k x cols], with row strides lda, ldb, ldc.
// The full 4 x 16 tile stays in registers across the whole k loop.
inline void tile_full(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc, std::size_t k) {
    double acc[kTileRows][kTileCols];
    for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] = c[r * ldc + j];
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb;
        for (std::size_t r = 0; r < kTileRows; ++r) {
            const double av = a[r * lda + p];
#pragma omp simd
            for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t j = 0; j < kTileCols; ++j) c[r * ldc + j] = acc[r][j];
}

inline void tile_partial(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                         std::size_t ldc, std::size_t k, std::size_t rows, std::size_t cols) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb;
        for (std::size_t r = 0; r < rows; ++r) {
            const double av = a[r * lda + p];
            if (av == 0.0) continue;
            double* crow = c + r * ldc;
#pragma omp simd
            for (std::size_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
    const auto blocks = static_cast<std::ptrdiff_t>((m + kTileRows - 1) / kTileRows);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
    for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
        const std::size_t i0 = static_cast<std::size_t>(blk) * kTileRows;
        const std::size_t rows = std::min(kTileRows, m - i0);
        for (std::size_t j0 = 0; j0 < n; j0 += kTileCols) {
            const std::size_t cols = std::min(kTileCols, n - j0);
            if (rows == kTileRows && cols == kTileCols)
                tile_full(a + i0 * k, k, b + j0, n, c + i0 * n + j0, n, k);
            else
                tile_partial(a + i0 * k, k, b + j0, n, c + i0 * n + j0, n, k, rows, cols);
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> at(m * k);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
    matmul(at.data(), b, c, m, k, n, true);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    matmul(a, bt.data(), c, m, k, n, true);
}

void pair_relu_sum(const double* p, const double* q, const PairList& pairs, std::size_t width, double* out) {
    const auto n = static_cast<std::ptrdiff_t>(pairs.n_rows);
#pragma omp parallel for schedule(static) if (pairs.size() * width > kParallelWork)
    for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* o = out + i * width;
        std::fill(o, o + width, 0.0);
        const double* pi = p + i * width;
        for (std::uint32_t e = pairs.by_target_offsets[i]; e < pairs.by_target_offsets[i + 1]; ++e) {
            const double* qj = q + std::size_t{pairs.by_target_source[e]} * width;
#pragma omp simd
            for (std::size_t c = 0; c < width; ++c) {
                const double v = pi[c] + qj[c];
                o[c] += v > 0.0 ? v : 0.0;
            }
        }
    }
}

void pair_relu_sum_backward(const double* p, const double* q, const double* g, const PairList& pairs,
                            std::size_t width, double* dp, double* dq) {
    const auto n = static_cast<std::ptrdiff_t>(pairs.n_rows);
    const bool par = pairs.size() * width > kParallelWork;
    if (dp != nullptr) {
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            const double* pi = p + i * width;
            const double* gi = g + i * width;
            double* di = dp + i * width;
            for (std::uint32_t e = pairs.by_target_offsets[i]; e < pairs.by_target_offsets[i + 1]; ++e) {
                const double* qj = q + std::size_t{pairs.by_target_source[e]} * width;
#pragma omp simd
                for (std::size_t c = 0; c < width; ++c) di[c] += (pi[c] + qj[c] > 0.0) ? gi[c] : 0.0;
            }
        }
    }
    if (dq != nullptr) {
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t jj = 0; jj < n; ++jj) {
            const auto j = static_cast<std::size_t>(jj);
            const double* qj = q + j * width;
            double* dj = dq + j * width;
            for (std::uint32_t e = pairs.by_source_offsets[j]; e < pairs.by_source_offsets[j + 1]; ++e) {
                const std::size_t i = pairs.by_source_target[e];
                const double* pi = p + i * width;
                const double* gi = g + i * width;
#pragma omp simd
                for (std::size_t c = 0; c < width; ++c) dj[c] += (pi[c] + qj[c] > 0.0) ? gi[c] : 0.0;
            }
        }
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace reference {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
            c[i * n + j] += s;
        }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] += s;
        }
}

void pair_relu_sum(const double* p, const double* q, const PairList& pairs, std::size_t width, double* out) {
    std::fill(out, out + pairs.n_rows * width, 0.0);
    for (std::size_t i = 0; i < pairs.n_rows; ++i)
        for (std::uint32_t e = pairs.by_target_offsets[i]; e < pairs.by_target_offsets[i + 1]; ++e) {
            const std::size_t j = pairs.by_target_source[e];
            for (std::size_t c = 0; c < width; ++c)
                out[i * width + c] += std::max(0.0, p[i * width + c] + q[j * width + c]);
        }
}

void pair_relu_sum_backward(const double* p, const double* q, const double* g, const PairList& pairs,
                            std::size_t width, double* dp, double* dq) {
    for (std::size_t i = 0; i < pairs.n_rows; ++i)
        for (std::uint32_t e = pairs.by_target_offsets[i]; e < pairs.by_target_offsets[i + 1]; ++e) {
            const std::size_t j = pairs.by_target_source[e];
            for (std::size_t c = 0; c < width; ++c) {
                if (p[i * width + c] + q[j * width + c] <= 0.0) continue;
                if (dp != nullptr) dp[i * width + c] += g[i * width + c];
                if (dq != nullptr) dq[j * width + c] += g[i * width + c];
            }
        }
}

}  // namespace reference

}  // namespace lgode::kernels
