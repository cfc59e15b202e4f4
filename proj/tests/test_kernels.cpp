#include "etchpit/kernels.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace etchpit;
using namespace etchpit::kernels;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, bool grid)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> u(0, 3);
    Matrix x(n, d);
    for (double& v : x.data()) v = grid ? u(rng) : g(rng);
    return x;
}

GrayImage random_image(int w, int h, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0, 1);
    GrayImage img(w, h);
    for (float& v : img.data()) v = u(rng);
    return img;
}

StructuringElement ball(int r)
{
    StructuringElement se;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy > r * r) continue;
            se.dx.push_back(dx);
            se.dy.push_back(dy);
            se.height.push_back(0.01f * static_cast<float>(r * r - dx * dx - dy * dy));
        }
    return se;
}

// Threads stay forced on, even on a single-core machine.
struct Threads {
    int before = thread_count();
    explicit Threads(int n) { set_thread_count(n); }
    ~Threads() { set_thread_count(before); }
};

}  // namespace

TEST_CASE("kNN matches a brute-force sort, ties by index")
{
    for (bool grid : {false, true}) {
        const Matrix x = random_matrix(60, 3, grid ? 2 : 1, grid);
        const auto g = serial::knn(x, 7);
        REQUIRE(g.k == 7);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            std::vector<std::pair<double, std::uint32_t>> all;
            for (std::size_t j = 0; j < x.rows(); ++j) {
                if (j == i) continue;
                double s = 0;
                for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
                all.emplace_back(s, static_cast<std::uint32_t>(j));
            }
            std::sort(all.begin(), all.end());
            for (std::size_t m = 0; m < 7; ++m) {
                CHECK(g.neighbors(i)[m] == all[m].second);
                CHECK(g.dists(i)[m] == doctest::Approx(std::sqrt(all[m].first)).epsilon(1e-12));
            }
        }
    }
    CHECK(serial::knn(random_matrix(4, 2, 3, false), 10).k == 3);
}

TEST_CASE("serial and parallel kernels agree bitwise")
{
    const Threads threads(4);

    for (bool grid : {false, true}) {
        const Matrix x = random_matrix(300, 8, 4, grid);
        const auto a = serial::knn(x, 10), b = parallel::knn(x, 10);
        CHECK(a.indices == b.indices);
        CHECK(a.distances == b.distances);
    }

    const GrayImage seed = random_image(40, 36, 5);
    const int half = 3;
    std::vector<int> dx, dy;
    std::vector<double> w, t;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    for (int oy = -half; oy <= half; ++oy)
        for (int ox = -half; ox <= half; ++ox)
            if (u(rng) < 0.6) {
                dx.push_back(ox);
                dy.push_back(oy);
                w.push_back(std::exp(-(ox * ox + oy * oy) / 4.0));
                t.push_back(u(rng));
            }
    const WindowQuery q{dx, dy, w, t};
    const std::size_t windows = static_cast<std::size_t>((40 - 2 * half) * (36 - 2 * half));
    std::vector<double> s(windows), p(windows);
    serial::window_ssd(seed, half, q, s);
    parallel::window_ssd(seed, half, q, p);
    CHECK(s == p);
    // Spot check against a direct sum at one window centre.
    double direct = 0;
    for (std::size_t m = 0; m < dx.size(); ++m) {
        const double d = seed.at(10 + dx[m], 7 + dy[m]) - t[m];
        direct += w[m] * d * d;
    }
    CHECK(s[static_cast<std::size_t>((7 - half) * (40 - 2 * half) + (10 - half))] == direct);

    const GrayImage img = random_image(70, 50, 7);
    for (int r : {1, 3, 6}) {
        const auto se = ball(r);
        CHECK(serial::dilate(img, se) == parallel::dilate(img, se));
        CHECK(serial::erode(img, se) == parallel::erode(img, se));
    }
}

TEST_CASE("grey dilation and erosion by a flat element")
{
    GrayImage img(9, 9, 0.0f);
    img.at(4, 4) = 1.0f;
    StructuringElement cross{{0, 1, -1, 0, 0}, {0, 0, 0, 1, -1}, {0, 0, 0, 0, 0}};
    const GrayImage d = parallel::dilate(img, cross);
    CHECK(d.at(4, 4) == 1.0f);
    CHECK(d.at(5, 4) == 1.0f);
    CHECK(d.at(4, 3) == 1.0f);
    CHECK(d.at(5, 5) == 0.0f);
    const GrayImage e = parallel::erode(d, cross);
    CHECK(e.at(4, 4) == 1.0f);
    CHECK(e.at(5, 4) == 0.0f);
}
