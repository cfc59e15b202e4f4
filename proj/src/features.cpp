#include "etchpit/features.hpp"

#include "etchpit/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace etchpit::features {

namespace {

constexpr char kMagic[5] = {'F', 'V', 'E', 'C', '1'};

template <typename T>
T to_le(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <typename T>
void put(std::ostream& out, T v)
{
    v = to_le(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::vector<char>& buf, std::size_t& pos)
{
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return to_le(v);
}

}  // namespace

double otsu_threshold(const GrayImage& img)
{
    std::array<double, 256> hist{};
    for (float v : img.data()) hist[to_u8(v)] += 1.0;
    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_t = 127;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[t];
        sum0 += t * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    // Foreground is everything at or below level best_t.
    return (best_t + 0.5) / 255.0;
}

std::array<double, 7> hu_moments(const BinaryMask& m)
{
    std::array<double, 7> hu{};
    double m00 = 0.0, m10 = 0.0, m01 = 0.0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) {
                m00 += 1.0;
                m10 += x;
                m01 += y;
            }
    if (m00 == 0.0) return hu;
    const double cx = m10 / m00, cy = m01 / m00;
    double mu[4][4] = {};
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            if (!m.get(x, y)) continue;
            const double dx = x - cx, dy = y - cy;
            double px = 1.0;
            for (int p = 0; p <= 3; ++p) {
                double py = 1.0;
                for (int q = 0; p + q <= 3; ++q) {
                    mu[p][q] += px * py;
                    py *= dy;
                }
                px *= dx;
            }
        }
    auto eta = [&](int p, int q) { return mu[p][q] / std::pow(m00, 1.0 + (p + q) / 2.0); };
    const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
    const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
    const double a = n30 + n12, b = n21 + n03;
    hu[0] = n20 + n02;
    hu[1] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
    hu[2] = (n30 - 3 * n12) * (n30 - 3 * n12) + (3 * n21 - n03) * (3 * n21 - n03);
    hu[3] = a * a + b * b;
    hu[4] = (n30 - 3 * n12) * a * (a * a - 3 * b * b) + (3 * n21 - n03) * b * (3 * a * a - b * b);
    hu[5] = (n20 - n02) * (a * a - b * b) + 4 * n11 * a * b;
    hu[6] = (3 * n21 - n03) * a * (a * a - 3 * b * b) - (n30 - 3 * n12) * b * (3 * a * a - b * b);
    return hu;
}

ClassicalFeatures classical_features(const imgproc::Patch& patch)
{
    ClassicalFeatures out;
    out.values.reserve(kClassicalDim);
    const GrayImage img = (patch.image.width() == kSide && patch.image.height() == kSide)
                              ? patch.image
                              : resample_bilinear(patch.image, kSide, kSide);

    const double t = otsu_threshold(img);
    BinaryMask fg(kSide, kSide);
    double sx = 0.0, sy = 0.0, n = 0.0;
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x)
            if (img.at(x, y) < t) {
                fg.set(x, y, true);
                sx += x;
                sy += y;
                n += 1.0;
            }
    out.empty_mask = n == 0.0;
    const auto hu = hu_moments(fg);
    out.values.insert(out.values.end(), hu.begin(), hu.end());

    const double cx = n > 0 ? sx / n : (kSide - 1) / 2.0;
    const double cy = n > 0 ? sy / n : (kSide - 1) / 2.0;
    std::array<double, kRadialBins> ring_sum{}, ring_n{};
    double total = 0.0;
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
            total += img.at(x, y);
            const auto bin = static_cast<std::size_t>(std::hypot(x - cx, y - cy) / 2.0);
            if (bin >= kRadialBins) continue;
            ring_sum[bin] += img.at(x, y);
            ring_n[bin] += 1.0;
        }
    // Rings that miss the grid repeat the previous ring.
    double last = total / (kSide * kSide);
    for (std::size_t b = 0; b < kRadialBins; ++b) {
        if (ring_n[b] > 0) last = ring_sum[b] / ring_n[b];
        out.values.push_back(last);
    }

    std::array<double, kHistBins> hist{};
    for (float v : img.data()) hist[std::min<std::size_t>(kHistBins - 1, static_cast<std::size_t>(std::clamp(v, 0.0f, 1.0f) * kHistBins))] += 1.0;
    for (double h : hist) out.values.push_back(h / (kSide * kSide));

    const imgproc::EllipseFit fit = imgproc::fit_ellipse(patch.blob);
    const imgproc::ShapeDescriptors d = imgproc::describe(patch.blob, fit);
    out.values.push_back(static_cast<double>(patch.blob.area()));
    out.values.push_back(d.lengthiness);
    out.values.push_back(d.compactness);
    out.values.push_back(d.circularity);
    return out;
}

MinMaxNormalizer MinMaxNormalizer::fit(const Matrix& x)
{
    MinMaxNormalizer nz;
    nz.lo.assign(x.cols(), 0.0);
    nz.hi.assign(x.cols(), 0.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double lo = x.rows() ? x(0, j) : 0.0, hi = lo;
        for (std::size_t i = 1; i < x.rows(); ++i) {
            lo = std::min(lo, x(i, j));
            hi = std::max(hi, x(i, j));
        }
        nz.lo[j] = lo;
        nz.hi[j] = hi;
    }
    return nz;
}

std::vector<double> MinMaxNormalizer::apply(std::span<const double> row) const
{
    if (row.size() != lo.size()) throw PreconditionError("normalizer dimension mismatch");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double span = hi[j] - lo[j];
        out[j] = span > 0 ? (row[j] - lo[j]) / span : 0.0;
    }
    return out;
}

Matrix MinMaxNormalizer::apply(const Matrix& x) const
{
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = apply(x.row(i));
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

void write_fvec(const std::filesystem::path& path, const FeatureSet& set)
{
    if (set.ids.size() != set.size()) throw PreconditionError("feature set has " + std::to_string(set.size()) +
                                                              " rows but " + std::to_string(set.ids.size()) + " ids");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim()));
    for (double v : set.values.data()) put<float>(out, static_cast<float>(v));
    for (const auto& id : set.ids) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!out) throw DataError("write failed: " + path.string());
}

FeatureSet read_fvec(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = path.string() + ": ";
    constexpr std::size_t header = sizeof kMagic + 8;
    if (buf.size() < header || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw FormatError(where + "not an FVEC1 file");
    std::size_t pos = sizeof kMagic;
    const auto count = take<std::uint32_t>(buf, pos);
    const auto dim = take<std::uint32_t>(buf, pos);
    const std::size_t payload = static_cast<std::size_t>(count) * dim * sizeof(float);
    if (buf.size() - header < payload)
        throw FormatError(where + "payload truncated: expected " + std::to_string(payload) + " bytes for " +
                          std::to_string(count) + "x" + std::to_string(dim) + " floats, found " +
                          std::to_string(buf.size() - header));

    FeatureSet set;
    set.source = FeatureSource::External;
    set.values = Matrix(count, dim);
    set.flags.assign(count, "");
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            const float v = take<float>(buf, pos);
            if (!std::isfinite(v))
                throw FormatError(where + "non-finite value in row " + std::to_string(i) + ", column " + std::to_string(j));
            set.values(i, j) = v;
        }
    }
    set.ids.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (buf.size() - pos < 4) throw FormatError(where + "missing id for row " + std::to_string(i));
        const auto len = take<std::uint32_t>(buf, pos);
        if (buf.size() - pos < len) throw FormatError(where + "id of row " + std::to_string(i) + " truncated");
        set.ids.emplace_back(buf.data() + pos, len);
        pos += len;
    }
    if (pos != buf.size())
        throw FormatError(where + std::to_string(buf.size() - pos) + " trailing bytes after the id table");
    return set;
}

}  // namespace etchpit::features
