// Benchmark comparing the serial reference kernels against the OpenMP
// backend, from raw kernels up to whole training phases. Run with
// OMP_NUM_THREADS set to see the parallel speedups; on a single core the
// two columns should roughly match.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "htn/dataset.hpp"
#include "htn/kernels.hpp"
#include "htn/knn.hpp"
#include "htn/model.hpp"
#include "htn/synth.hpp"
#include "htn/tensor.hpp"
#include "htn/trainer.hpp"

using namespace htn;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warmup
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void row(const std::string& name, const std::function<void()>& fn, int reps) {
    kern::set_backend(kern::Backend::Serial);
    const double serial_ms = time_ms(fn, reps);
    kern::set_backend(kern::Backend::Parallel);
    const double par_ms = time_ms(fn, reps);
    std::printf("%-32s %10.3f %10.3f %8.2fx\n", name.c_str(), serial_ms, par_ms,
                serial_ms / par_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without openmp; both columns run the serial reference\n");
#endif
    std::printf("%-32s %10s %10s %9s\n", "kernel", "serial ms", "openmp ms", "speedup");

    Rng rng = make_rng(7);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);

    // raw kernels
    {
        const int m = 512, k = 64, n = 64;
        std::vector<float> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n),
            c(static_cast<std::size_t>(m) * n);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        row("matmul 512x64x64", [&]() { kern::matmul(a.data(), b.data(), c.data(), m, k, n, false, false); }, 200);
    }
    {
        const std::int64_t outer = 4096, nn = 64;
        std::vector<float> x(static_cast<std::size_t>(outer * nn)), y(x.size());
        for (auto& v : x) v = dist(rng);
        row("softmax 4096x64", [&]() { kern::softmax_axis(x.data(), y.data(), outer, nn, 1); }, 200);
        row("layernorm 4096x64", [&]() { kern::layernorm_axis(x.data(), y.data(), outer, nn, 1, 1e-5f); }, 200);
    }

    // model-level phases on the bundled synthetic corpus
    SynthConfig scfg;
    const auto data = generate_synthetic(scfg);
    const auto idx = build_index(data.records);
    const auto split = split_leave_one_out(idx, 1);
    KnnPipelineConfig kcfg;
    kcfg.k = 5;
    kcfg.skipgram.dim = 32;
    kcfg.skipgram.epochs = 1;
    const auto graphs = build_knn_graphs(idx, kcfg, 1);

    row("knn graphs (walks+sgns+knn)",
        [&]() { (void)build_knn_graphs(idx, kcfg, 2); }, 1);

    TrainConfig tcfg;
    tcfg.maxlen = 20;
    tcfg.ssn_batch = 8;
    tcfg.neg_ratio = 3;
    tcfg.seed = 1;
    HyperTeNet<float> model(idx.n_users, idx.n_items, idx.n_lists, &graphs, tcfg.model_config());

    const auto positives = positive_triples(split);
    const auto negatives = sample_negative_triples(split.index, positives, 3, 5);
    TripleBatch gbatch;
    for (const auto& t : positives) {
        gbatch.triples.push_back(t);
        gbatch.labels.push_back(1.0);
    }
    for (const auto& t : negatives) {
        gbatch.triples.push_back(t);
        gbatch.labels.push_back(0.0);
    }
    row("graph loss fwd+bwd (6k triples)", [&]() {
        auto loss = model.graph_loss(gbatch);
        loss.backward();
        model.params().zero_grads();
    }, 5);

    const auto sbatches = make_sequence_batches(split, tcfg.maxlen, 150, 3, 5);
    Rng drng = make_rng(2);
    row("ssn loss fwd+bwd (150 lists)", [&]() {
        auto loss = model.ssn_loss(sbatches.front(), true, drng);
        loss.backward();
        model.params().zero_grads();
    }, 5);

    row("validation eval (150 pairs)", [&]() { (void)evaluate(model, split, false); }, 5);
    return 0;
}
