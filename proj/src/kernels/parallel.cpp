#include "common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace etchpit::kernels {

namespace parallel {

KnnGraph knn(const Matrix& x, std::size_t k)
{
    KnnGraph g = detail::make_graph(x, k);
    const auto n = static_cast<std::ptrdiff_t>(g.n);
#pragma omp parallel
    {
        std::vector<std::pair<double, std::uint32_t>> scratch;
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < n; ++i) detail::knn_row(x, static_cast<std::size_t>(i), g.k, scratch, g);
    }
    return g;
}

void window_ssd(const GrayImage& seed, int half, const WindowQuery& q, std::span<double> out)
{
    const int span_x = seed.width() - 2 * half;
    const int span_y = seed.height() - 2 * half;
    // Small searches are not worth a parallel region per synthesized pixel.
    const bool big = static_cast<long>(span_x) * span_y * static_cast<long>(q.dx.size()) > 200000;
#pragma omp parallel for schedule(static) if (big)
    for (int wy = 0; wy < span_y; ++wy)
        for (int wx = 0; wx < span_x; ++wx)
            out[static_cast<std::size_t>(wy) * span_x + wx] = detail::window_ssd_at(seed, wx + half, wy + half, q);
}

GrayImage dilate(const GrayImage& img, const StructuringElement& se)
{
    GrayImage out(img.width(), img.height());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = detail::dilate_at(img, x, y, se);
    return out;
}

GrayImage erode(const GrayImage& img, const StructuringElement& se)
{
    GrayImage out(img.width(), img.height());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = detail::erode_at(img, x, y, se);
    return out;
}

}  // namespace parallel

int thread_count()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_thread_count(int n)
{
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace etchpit::kernels
