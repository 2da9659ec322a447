#pragma once

// Dense kernels behind the tensor ops. Every kernel exists twice: a plain
// serial loop in kern::serial (the reference used by the kernel-equivalence
// tests and the benchmark baseline) and an OpenMP version in kern::par.
// A process-global backend flag picks which one runs.
//
// Parallel kernels only ever write disjoint output elements and accumulate
// each output element within a single iteration, so results are bitwise
// identical across thread counts and to the serial reference.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace htn::kern {

enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);
const char* backend_name(Backend b);

// Below this many output elements the dispatchers stay serial; spawning a
// team costs more than the loop.
inline constexpr std::int64_t kParallelGrain = 1 << 12;

namespace serial {

// One output row; loop forms chosen so the inner loop runs on contiguous
// memory for the common (ta=false) layouts.
template <class S>
void matmul_row(const S* __restrict a, const S* __restrict b, S* __restrict c, int i, int m,
                int k, int n, bool ta, bool tb) {
    S* __restrict crow = c + static_cast<std::size_t>(i) * n;
    if (!ta && !tb) {
        for (int j = 0; j < n; ++j) crow[j] = 0;
        const S* __restrict arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const S av = arow[p];
            const S* __restrict brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else if (!ta && tb) {
        const S* __restrict arow = a + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const S* __restrict brow = b + static_cast<std::size_t>(j) * k;
            S acc = 0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    } else if (ta && !tb) {
        for (int j = 0; j < n; ++j) crow[j] = 0;
        for (int p = 0; p < k; ++p) {
            const S av = a[static_cast<std::size_t>(p) * m + i];
            const S* __restrict brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else {
        for (int j = 0; j < n; ++j) {
            S acc = 0;
            for (int p = 0; p < k; ++p) {
                const S av = a[static_cast<std::size_t>(p) * m + i];
                const S bv = tb ? b[static_cast<std::size_t>(j) * k + p]
                                : b[static_cast<std::size_t>(p) * n + j];
                acc += av * bv;
            }
            crow[j] = acc;
        }
    }
}

template <class S>
void matmul(const S* a, const S* b, S* c, int m, int k, int n, bool ta, bool tb) {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, m, k, n, ta, tb);
}

template <class S, class F>
void map1(const S* x, S* y, std::int64_t len, F f) {
    for (std::int64_t i = 0; i < len; ++i) y[i] = f(x[i]);
}

// z[i] = f(x[i], y[i % period]); period == len gives the plain binary map.
template <class S, class F>
void map2(const S* x, const S* y, S* z, std::int64_t len, std::int64_t period, F f) {
    if (period == len) {
        for (std::int64_t i = 0; i < len; ++i) z[i] = f(x[i], y[i]);
    } else {
        for (std::int64_t i = 0; i < len; ++i) z[i] = f(x[i], y[i % period]);
    }
}

// Row-major (outer, n, inner) decomposition of a reduction axis.
template <class S>
void softmax_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner) {
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const S* xs = x + o * n * inner + in;
            S* ys = y + o * n * inner + in;
            S mx = xs[0];
            for (std::int64_t t = 1; t < n; ++t) mx = xs[t * inner] > mx ? xs[t * inner] : mx;
            S sum = 0;
            for (std::int64_t t = 0; t < n; ++t) {
                const S e = std::exp(xs[t * inner] - mx);
                ys[t * inner] = e;
                sum += e;
            }
            for (std::int64_t t = 0; t < n; ++t) ys[t * inner] /= sum;
        }
    }
}

template <class S>
void layernorm_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner,
                    S eps) {
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const S* xs = x + o * n * inner + in;
            S* ys = y + o * n * inner + in;
            S mean = 0;
            for (std::int64_t t = 0; t < n; ++t) mean += xs[t * inner];
            mean /= static_cast<S>(n);
            S var = 0;
            for (std::int64_t t = 0; t < n; ++t) {
                const S d = xs[t * inner] - mean;
                var += d * d;
            }
            var /= static_cast<S>(n);
            const S inv = S(1) / std::sqrt(var + eps);
            for (std::int64_t t = 0; t < n; ++t) ys[t * inner] = (xs[t * inner] - mean) * inv;
        }
    }
}

template <class S>
void reduce_sum_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner) {
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const S* xs = x + o * n * inner + in;
            S acc = 0;
            for (std::int64_t t = 0; t < n; ++t) acc += xs[t * inner];
            y[o * inner + in] = acc;
        }
    }
}

// out[i,:] = sum_j w[i][j] * x[nbr[i][j], :]. Neighbor lists are CSR-style.
template <class S>
void weighted_gather_sum(const int* nbr, const double* w, const std::int64_t* row_off,
                         const S* x, S* out, std::int64_t rows, std::int64_t d) {
    for (std::int64_t i = 0; i < rows; ++i) {
        S* o = out + i * d;
        for (std::int64_t c = 0; c < d; ++c) o[c] = 0;
        for (std::int64_t e = row_off[i]; e < row_off[i + 1]; ++e) {
            const S wij = static_cast<S>(w[e]);
            const S* src = x + static_cast<std::int64_t>(nbr[e]) * d;
            for (std::int64_t c = 0; c < d; ++c) o[c] += wij * src[c];
        }
    }
}

}  // namespace serial

namespace par {

template <class S>
void matmul(const S* a, const S* b, S* c, int m, int k, int n, bool ta, bool tb) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) serial::matmul_row(a, b, c, i, m, k, n, ta, tb);
}

template <class S, class F>
void map1(const S* x, S* y, std::int64_t len, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t i = 0; i < len; ++i) y[i] = f(x[i]);
}

template <class S, class F>
void map2(const S* x, const S* y, S* z, std::int64_t len, std::int64_t period, F f) {
    if (period == len) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (std::int64_t i = 0; i < len; ++i) z[i] = f(x[i], y[i]);
    } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (std::int64_t i = 0; i < len; ++i) z[i] = f(x[i], y[i % period]);
    }
}

template <class S>
void softmax_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t o = 0; o < outer; ++o)
        serial::softmax_axis(x + o * n * inner, y + o * n * inner, 1, n, inner);
}

template <class S>
void layernorm_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner,
                    S eps) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t o = 0; o < outer; ++o)
        serial::layernorm_axis(x + o * n * inner, y + o * n * inner, 1, n, inner, eps);
}

template <class S>
void reduce_sum_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t o = 0; o < outer; ++o)
        serial::reduce_sum_axis(x + o * n * inner, y + o * inner, 1, n, inner);
}

template <class S>
void weighted_gather_sum(const int* nbr, const double* w, const std::int64_t* row_off,
                         const S* x, S* out, std::int64_t rows, std::int64_t d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t i = 0; i < rows; ++i)
        serial::weighted_gather_sum(nbr, w, row_off + i, x, out + i * d, 1, d);
}

}  // namespace par

// ---- dispatchers ----

template <class S>
void matmul(const S* a, const S* b, S* c, int m, int k, int n, bool ta, bool tb) {
    if (backend() == Backend::Parallel && static_cast<std::int64_t>(m) * n >= kParallelGrain / 8)
        par::matmul(a, b, c, m, k, n, ta, tb);
    else
        serial::matmul(a, b, c, m, k, n, ta, tb);
}

template <class S, class F>
void map1(const S* x, S* y, std::int64_t len, F f) {
    if (backend() == Backend::Parallel && len >= kParallelGrain)
        par::map1(x, y, len, f);
    else
        serial::map1(x, y, len, f);
}

template <class S, class F>
void map2(const S* x, const S* y, S* z, std::int64_t len, std::int64_t period, F f) {
    if (backend() == Backend::Parallel && len >= kParallelGrain)
        par::map2(x, y, z, len, period, f);
    else
        serial::map2(x, y, z, len, period, f);
}

template <class S>
void softmax_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner) {
    if (backend() == Backend::Parallel && outer > 1 && outer * n * inner >= kParallelGrain)
        par::softmax_axis(x, y, outer, n, inner);
    else
        serial::softmax_axis(x, y, outer, n, inner);
}

template <class S>
void layernorm_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner,
                    S eps) {
    if (backend() == Backend::Parallel && outer > 1 && outer * n * inner >= kParallelGrain)
        par::layernorm_axis(x, y, outer, n, inner, eps);
    else
        serial::layernorm_axis(x, y, outer, n, inner, eps);
}

template <class S>
void reduce_sum_axis(const S* x, S* y, std::int64_t outer, std::int64_t n, std::int64_t inner) {
    if (backend() == Backend::Parallel && outer > 1 && outer * n * inner >= kParallelGrain)
        par::reduce_sum_axis(x, y, outer, n, inner);
    else
        serial::reduce_sum_axis(x, y, outer, n, inner);
}

template <class S>
void weighted_gather_sum(const int* nbr, const double* w, const std::int64_t* row_off,
                         const S* x, S* out, std::int64_t rows, std::int64_t d) {
    if (backend() == Backend::Parallel && rows * d >= kParallelGrain)
        par::weighted_gather_sum(nbr, w, row_off, x, out, rows, d);
    else
        serial::weighted_gather_sum(nbr, w, row_off, x, out, rows, d);
}

// Total reduction stays serial in both backends: the result feeds a scalar
// loss and a fixed summation order keeps reruns byte-identical.
template <class S>
S reduce_sum_all(const S* x, std::int64_t len) {
    S acc = 0;
    for (std::int64_t i = 0; i < len; ++i) acc += x[i];
    return acc;
}

}  // namespace htn::kern
