// OpenMP kernels against their serial references.

#include <random>

#include <benchmark/benchmark.h>

#include "crumq/harness/harness.hpp"
#include "crumq/retrieval/retrieval.hpp"

using namespace crumq;

namespace {

retrieval::VectorIndex make_index(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    retrieval::VectorIndex idx(dim, "bench");
    for (std::size_t i = 0; i < n; ++i) {
        Vector v(dim);
        for (auto& x : v) x = static_cast<float>(g(rng));
        normalize(v);
        idx.add("c" + std::to_string(i), v);
    }
    return idx;
}

Vector make_query(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vector q(dim);
    for (auto& x : q) x = static_cast<float>(g(rng));
    normalize(q);
    return q;
}

template <bool Parallel>
void BM_Search(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 256;
    auto idx = make_index(n, dim, rng);
    auto q = make_query(dim, rng);
    for (auto _ : state) {
        auto hits = Parallel ? idx.search(q, 10) : idx.search_serial(q, 10);
        benchmark::DoNotOptimize(hits);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

template <bool Parallel>
void BM_Bootstrap(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<double>(rng() % 2);
        b[i] = static_cast<double>(rng() % 2);
    }
    for (auto _ : state) {
        double p = Parallel ? harness::paired_bootstrap(a, b, 10000, 3) : harness::paired_bootstrap_serial(a, b, 10000, 3);
        benchmark::DoNotOptimize(p);
    }
}

}  // namespace

BENCHMARK_TEMPLATE(BM_Search, true)->Name("search/parallel")->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK_TEMPLATE(BM_Search, false)->Name("search/serial")->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK_TEMPLATE(BM_Bootstrap, true)->Name("bootstrap/parallel")->Arg(200)->Arg(2000);
BENCHMARK_TEMPLATE(BM_Bootstrap, false)->Name("bootstrap/serial")->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
