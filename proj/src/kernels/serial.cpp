#include "common.hpp"

namespace etchpit::kernels::serial {

KnnGraph knn(const Matrix& x, std::size_t k)
{
    KnnGraph g = detail::make_graph(x, k);
    std::vector<std::pair<double, std::uint32_t>> scratch;
    for (std::size_t i = 0; i < g.n; ++i) detail::knn_row(x, i, g.k, scratch, g);
    return g;
}

void window_ssd(const GrayImage& seed, int half, const WindowQuery& q, std::span<double> out)
{
    const int span_x = seed.width() - 2 * half;
    const int span_y = seed.height() - 2 * half;
    for (int wy = 0; wy < span_y; ++wy)
        for (int wx = 0; wx < span_x; ++wx)
            out[static_cast<std::size_t>(wy) * span_x + wx] = detail::window_ssd_at(seed, wx + half, wy + half, q);
}

GrayImage dilate(const GrayImage& img, const StructuringElement& se)
{
    GrayImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = detail::dilate_at(img, x, y, se);
    return out;
}

GrayImage erode(const GrayImage& img, const StructuringElement& se)
{
    GrayImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = detail::erode_at(img, x, y, se);
    return out;
}

}  // namespace etchpit::kernels::serial
