#pragma once

// Data-parallel hot loops. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::parallel`; both
// produce bit-identical results (each output element is computed by one
// thread with a fixed summation order).

#include "etchpit/image.hpp"
#include "etchpit/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace etchpit::kernels {

/// k nearest neighbours of every row, self excluded, sorted by (distance, index).
struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::uint32_t> indices;  // n*k
    std::vector<double> distances;       // n*k, Euclidean

    std::span<const std::uint32_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
    std::span<const double> dists(std::size_t i) const { return {distances.data() + i * k, k}; }
};

/// Weighted SSD of a partially known neighbourhood against every full window of a seed.
/// Offsets are relative to the window centre; only known (filled) pixels are listed.
struct WindowQuery {
    std::span<const int> dx;
    std::span<const int> dy;
    std::span<const double> weight;
    std::span<const double> target;
};

/// Non-flat structuring element: offsets with additive heights.
struct StructuringElement {
    std::vector<int> dx;
    std::vector<int> dy;
    std::vector<float> height;
};

namespace serial {
KnnGraph knn(const Matrix& x, std::size_t k);
/// `out` has one entry per window centre (cx,cy), cx,cy in [half, side-1-half], row-major.
void window_ssd(const GrayImage& seed, int half, const WindowQuery& q, std::span<double> out);
GrayImage dilate(const GrayImage& img, const StructuringElement& se);
GrayImage erode(const GrayImage& img, const StructuringElement& se);
}  // namespace serial

namespace parallel {
KnnGraph knn(const Matrix& x, std::size_t k);
void window_ssd(const GrayImage& seed, int half, const WindowQuery& q, std::span<double> out);
GrayImage dilate(const GrayImage& img, const StructuringElement& se);
GrayImage erode(const GrayImage& img, const StructuringElement& se);
}  // namespace parallel

/// Number of OpenMP threads in use (1 without OpenMP).
int thread_count();
void set_thread_count(int n);

}  // namespace etchpit::kernels
