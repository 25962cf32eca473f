#pragma once

// Hot numeric loops. Every kernel in `lgode::kernels` has a serial twin in
// `lgode::kernels::reference` with the same signature; the reference versions
// are the plain textbook loops and exist for tests and the benchmark.
//
// OpenMP parallelism is always over independent output rows, so results do
// not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lgode::kernels {

/// Index lists for "for each target i, sum over sources j" reductions, stored
/// twice in CSR form so both the forward (by target) and the transpose (by
/// source) can be parallelized over their output rows.
struct PairList {
    std::size_t n_rows = 0;
    std::vector<std::uint32_t> by_target_offsets;  // n_rows + 1
    std::vector<std::uint32_t> by_target_source;   // j for each pair, grouped by i
    std::vector<std::uint32_t> by_source_offsets;  // n_rows + 1
    std::vector<std::uint32_t> by_source_target;   // i for each pair, grouped by j

    static PairList build(std::size_t n_rows, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs);
    std::size_t size() const { return by_target_source.size(); }
    std::size_t degree(std::size_t target) const {
        return by_target_offsets[target + 1] - by_target_offsets[target];
    }
};

/// c (m x n) = a (m x k) * b (k x n), or += when `accumulate`.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate = false);
/// c (m x n) += a^T * b with a (k x m), b (k x n).
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
/// c (m x n) += a * b^T with a (m x k), b (n x k).
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

/// out_i = sum over pairs (i, j) of relu(p_i + q_j); p, q, out are n_rows x width.
void pair_relu_sum(const double* p, const double* q, const PairList& pairs, std::size_t width, double* out);
/// Adjoint of pair_relu_sum: dp_i += sum_j g_i * [p_i + q_j > 0], dq_j += sum_i g_i * [p_i + q_j > 0].
void pair_relu_sum_backward(const double* p, const double* q, const double* g, const PairList& pairs,
                            std::size_t width, double* dp, double* dq);

namespace reference {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void pair_relu_sum(const double* p, const double* q, const PairList& pairs, std::size_t width, double* out);
void pair_relu_sum_backward(const double* p, const double* q, const double* g, const PairList& pairs,
                            std::size_t width, double* dp, double* dq);

}  // namespace reference

/// Threads OpenMP will use for kernels (1 when built without OpenMP).
int max_threads();

}  // namespace lgode::kernels
