// Serial reference vs OpenMP kernels.

#include "etchpit/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

using namespace etchpit;

Matrix random_points(std::size_t n, std::size_t d)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i, j) = g(rng);
    return x;
}

GrayImage random_image(int w, int h)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    GrayImage img(w, h);
    for (float& v : img.data()) v = u(rng);
    return img;
}

kernels::StructuringElement ball(int r)
{
    kernels::StructuringElement se;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= r * r) {
                se.dx.push_back(dx);
                se.dy.push_back(dy);
                se.height.push_back(0.0f);
            }
    return se;
}

struct SsdQuery {
    std::vector<int> dx, dy;
    std::vector<double> w, t;
    kernels::WindowQuery view() const { return {dx, dy, w, t}; }
};

SsdQuery half_known_window(int half)
{
    SsdQuery q;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx)
            if (dy < 0 || (dy == 0 && dx < 0)) {
                q.dx.push_back(dx);
                q.dy.push_back(dy);
                q.w.push_back(1.0);
                q.t.push_back(0.5);
            }
    return q;
}

template <kernels::KnnGraph (*Knn)(const Matrix&, std::size_t)>
void BM_knn(benchmark::State& state)
{
    const Matrix x = random_points(static_cast<std::size_t>(state.range(0)), 43);
    for (auto _ : state) benchmark::DoNotOptimize(Knn(x, 9));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <void (*Ssd)(const GrayImage&, int, const kernels::WindowQuery&, std::span<double>)>
void BM_window_ssd(benchmark::State& state)
{
    const int side = static_cast<int>(state.range(0));
    const int half = 5;
    const GrayImage seed = random_image(side, side);
    const SsdQuery q = half_known_window(half);
    std::vector<double> out(static_cast<std::size_t>(side - 2 * half) * (side - 2 * half));
    for (auto _ : state) {
        Ssd(seed, half, q.view(), out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <GrayImage (*Dilate)(const GrayImage&, const kernels::StructuringElement&)>
void BM_dilate(benchmark::State& state)
{
    const GrayImage img = random_image(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
    const auto se = ball(6);
    for (auto _ : state) benchmark::DoNotOptimize(Dilate(img, se));
}

}  // namespace

BENCHMARK(BM_knn<kernels::serial::knn>)->Name("knn/serial")->Arg(500)->Arg(2000);
BENCHMARK(BM_knn<kernels::parallel::knn>)->Name("knn/parallel")->Arg(500)->Arg(2000);
BENCHMARK(BM_window_ssd<kernels::serial::window_ssd>)->Name("window_ssd/serial")->Arg(64)->Arg(200);
BENCHMARK(BM_window_ssd<kernels::parallel::window_ssd>)->Name("window_ssd/parallel")->Arg(64)->Arg(200);
BENCHMARK(BM_dilate<kernels::serial::dilate>)->Name("dilate/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_dilate<kernels::parallel::dilate>)->Name("dilate/parallel")->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
