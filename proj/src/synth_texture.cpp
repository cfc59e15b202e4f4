#include "etchpit/synth.hpp"

#include "etchpit/error.hpp"
#include "etchpit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

namespace etchpit::synth {

GrayImage grow_texture(const GrayImage& seed, int width, int height, const TextureParams& p)
{
    const int w = p.window;
    if (w < 1 || w % 2 == 0) throw PreconditionError("texture window must be odd");
    if (w > seed.width() || w > seed.height()) throw PreconditionError("texture window larger than the seed");
    if (width < seed.width() || height < seed.height()) throw PreconditionError("output smaller than the seed");
    const int half = w / 2;

    GrayImage out(width, height);
    std::vector<char> filled(static_cast<std::size_t>(width) * height, 0);
    std::vector<int> known(filled.size(), 0);
    using Item = std::pair<int, long long>;  // (known count, -raster index)
    std::priority_queue<Item> queue;

    auto mark = [&](int x, int y, float v) {
        const std::size_t idx = static_cast<std::size_t>(y) * width + x;
        out.at(x, y) = v;
        filled[idx] = 1;
        for (int dy = -half; dy <= half; ++dy)
            for (int dx = -half; dx <= half; ++dx) {
                const int qx = x + dx, qy = y + dy;
                if (qx < 0 || qy < 0 || qx >= width || qy >= height) continue;
                const std::size_t q = static_cast<std::size_t>(qy) * width + qx;
                if (filled[q]) continue;
                ++known[q];
                queue.push({known[q], -static_cast<long long>(q)});
            }
    };

    const int ox = (width - seed.width()) / 2, oy = (height - seed.height()) / 2;
    for (int y = 0; y < seed.height(); ++y)
        for (int x = 0; x < seed.width(); ++x) mark(ox + x, oy + y, seed.at(x, y));

    // Gaussian weights over the window.
    const double sigma = w / 6.4;
    std::vector<double> gauss(static_cast<std::size_t>(w) * w);
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx)
            gauss[static_cast<std::size_t>(dy + half) * w + dx + half] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));

    const int span_x = seed.width() - 2 * half, span_y = seed.height() - 2 * half;
    std::vector<double> ssd(static_cast<std::size_t>(span_x) * span_y);
    std::vector<int> qdx, qdy;
    std::vector<double> qw, qt;
    std::vector<std::size_t> candidates;
    std::mt19937_64 rng(p.seed);

    while (!queue.empty()) {
        const auto [count, neg] = queue.top();
        queue.pop();
        const auto idx = static_cast<std::size_t>(-neg);
        if (filled[idx] || count != known[idx]) continue;
        const int x = static_cast<int>(idx % width), y = static_cast<int>(idx / width);

        qdx.clear();
        qdy.clear();
        qw.clear();
        qt.clear();
        double wsum = 0.0;
        for (int dy = -half; dy <= half; ++dy)
            for (int dx = -half; dx <= half; ++dx) {
                const int qx = x + dx, qy = y + dy;
                if (qx < 0 || qy < 0 || qx >= width || qy >= height) continue;
                if (!filled[static_cast<std::size_t>(qy) * width + qx]) continue;
                qdx.push_back(dx);
                qdy.push_back(dy);
                const double g = gauss[static_cast<std::size_t>(dy + half) * w + dx + half];
                qw.push_back(g);
                qt.push_back(out.at(qx, qy));
                wsum += g;
            }
        for (double& v : qw) v /= wsum;
        kernels::parallel::window_ssd(seed, half, {qdx, qdy, qw, qt}, ssd);

        const double best = *std::min_element(ssd.begin(), ssd.end());
        const double limit = best * (1.0 + p.epsilon);
        candidates.clear();
        for (std::size_t c = 0; c < ssd.size(); ++c)
            if (ssd[c] <= limit) candidates.push_back(c);
        if (candidates.empty()) throw Error("texture growth found no candidate window");
        const std::size_t pick = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
        const int sx = static_cast<int>(pick % span_x) + half, sy = static_cast<int>(pick / span_x) + half;
        mark(x, y, seed.at(sx, sy));
    }
    return out;
}

BackgroundPool grow_backgrounds(const std::vector<GrayImage>& seeds, int count, int width, int height,
                                const TextureParams& params)
{
    if (seeds.empty()) throw ConfigError("no texture seeds");
    BackgroundPool pool;
    pool.images.resize(static_cast<std::size_t>(count));
    pool.ids.resize(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        TextureParams p = params;
        p.seed = scene_seed(params.seed, static_cast<std::size_t>(i));
        pool.images[i] = grow_texture(seeds[static_cast<std::size_t>(i) % seeds.size()], width, height, p);
        pool.ids[i] = "bg_" + std::to_string(i);
    }
    return pool;
}

}  // namespace etchpit::synth
