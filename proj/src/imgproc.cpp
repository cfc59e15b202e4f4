#include "etchpit/imgproc.hpp"

#include "etchpit/error.hpp"
#include "etchpit/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace etchpit::imgproc {

namespace {

int shrink_factor(int radius)
{
    if (radius <= 10) return 1;
    if (radius <= 30) return 2;
    if (radius <= 100) return 4;
    return 8;
}

GrayImage max_pool(const GrayImage& img, int f)
{
    const int w = (img.width() + f - 1) / f;
    const int h = (img.height() + f - 1) / f;
    GrayImage out(w, h, 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float m = 0.0f;
            for (int yy = y * f; yy < std::min((y + 1) * f, img.height()); ++yy)
                for (int xx = x * f; xx < std::min((x + 1) * f, img.width()); ++xx) m = std::max(m, img.at(xx, yy));
            out.at(x, y) = m;
        }
    }
    return out;
}

kernels::StructuringElement ball_element(double radius_px, int shrink)
{
    kernels::StructuringElement se;
    const double r_small = radius_px / shrink;
    const int reach = static_cast<int>(std::floor(r_small));
    for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
            const double d2 = static_cast<double>(dx * dx + dy * dy) * shrink * shrink;
            if (d2 > radius_px * radius_px) continue;
            se.dx.push_back(dx);
            se.dy.push_back(dy);
            // Ball surface below its apex, in 8-bit gray levels per pixel of radius.
            se.height.push_back(static_cast<float>((std::sqrt(radius_px * radius_px - d2) - radius_px) / 255.0));
        }
    }
    return se;
}

std::vector<Point> disk_offsets(int radius)
{
    std::vector<Point> off;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) off.push_back({dx, dy});
    return off;
}

constexpr std::array<Point, 8> kDirs = {{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

int dir_index(int dx, int dy)
{
    for (int d = 0; d < 8; ++d)
        if (kDirs[d].x == dx && kDirs[d].y == dy) return d;
    return -1;
}

}  // namespace

GrayImage rolling_ball_background(const GrayImage& img, int radius)
{
    if (radius < 1) throw PreconditionError("rolling ball radius must be >= 1");
    const int f = shrink_factor(radius);
    const GrayImage small = f > 1 ? max_pool(img, f) : img;
    const auto se = ball_element(radius, f);
    const GrayImage closed = kernels::parallel::erode(kernels::parallel::dilate(small, se), se);
    if (f == 1) {
        GrayImage out = closed;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(out.data()[i], img.data()[i]);
        return out;
    }
    GrayImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        const double fy = std::clamp((y + 0.5) / f - 0.5, 0.0, closed.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, closed.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < img.width(); ++x) {
            const double fx = std::clamp((x + 0.5) / f - 0.5, 0.0, closed.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, closed.width() - 1);
            const double wx = fx - x0;
            const double v = (closed.at(x0, y0) * (1 - wx) + closed.at(x1, y0) * wx) * (1 - wy) +
                             (closed.at(x0, y1) * (1 - wx) + closed.at(x1, y1) * wx) * wy;
            out.at(x, y) = std::max(static_cast<float>(v), img.at(x, y));
        }
    }
    return out;
}

GrayImage clahe(const GrayImage& img, double clip, int tiles)
{
    if (tiles < 1) throw PreconditionError("clahe_tiles must be >= 1");
    if (img.width() < tiles || img.height() < tiles)
        throw SizingError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                          " is smaller than one CLAHE tile of a " + std::to_string(tiles) + "x" +
                          std::to_string(tiles) + " grid");
    constexpr int kBins = 256;
    const int w = img.width();
    const int h = img.height();
    std::vector<int> bins(img.size());
    for (std::size_t i = 0; i < bins.size(); ++i) bins[i] = to_u8(img.data()[i]);

    auto edge = [](int i, int n, int t) { return static_cast<int>(static_cast<long>(i) * n / t); };
    std::vector<std::array<float, kBins>> luts(static_cast<std::size_t>(tiles) * tiles);
    for (int ty = 0; ty < tiles; ++ty) {
        for (int tx = 0; tx < tiles; ++tx) {
            const int x0 = edge(tx, w, tiles), x1 = edge(tx + 1, w, tiles);
            const int y0 = edge(ty, h, tiles), y1 = edge(ty + 1, h, tiles);
            std::array<long, kBins> hist{};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) ++hist[bins[static_cast<std::size_t>(y) * w + x]];
            const long area = static_cast<long>(x1 - x0) * (y1 - y0);
            if (clip > 0.0) {
                const long limit = std::max(1L, static_cast<long>(clip * area / kBins));
                long excess = 0;
                for (auto& c : hist) {
                    if (c > limit) {
                        excess += c - limit;
                        c = limit;
                    }
                }
                const long batch = excess / kBins;
                long residual = excess - batch * kBins;
                for (auto& c : hist) c += batch;
                if (residual > 0) {
                    const long step = std::max(kBins / residual, 1L);
                    for (long i = 0; i < kBins && residual > 0; i += step, --residual) ++hist[static_cast<std::size_t>(i)];
                }
            }
            auto& lut = luts[static_cast<std::size_t>(ty) * tiles + tx];
            long sum = 0;
            for (int b = 0; b < kBins; ++b) {
                sum += hist[b];
                lut[b] = static_cast<float>(std::lround(static_cast<double>(sum) * 255.0 / area)) / 255.0f;
            }
        }
    }

    GrayImage out(w, h);
    const double tw = static_cast<double>(w) / tiles;
    const double th = static_cast<double>(h) / tiles;
    for (int y = 0; y < h; ++y) {
        const double fy = (y + 0.5) / th - 0.5;
        int ty1 = static_cast<int>(std::floor(fy));
        const double ya = fy - ty1;
        int ty2 = ty1 + 1;
        ty1 = std::clamp(ty1, 0, tiles - 1);
        ty2 = std::clamp(ty2, 0, tiles - 1);
        for (int x = 0; x < w; ++x) {
            const double fx = (x + 0.5) / tw - 0.5;
            int tx1 = static_cast<int>(std::floor(fx));
            const double xa = fx - tx1;
            int tx2 = tx1 + 1;
            tx1 = std::clamp(tx1, 0, tiles - 1);
            tx2 = std::clamp(tx2, 0, tiles - 1);
            const int b = bins[static_cast<std::size_t>(y) * w + x];
            const double v11 = luts[static_cast<std::size_t>(ty1) * tiles + tx1][b];
            const double v12 = luts[static_cast<std::size_t>(ty1) * tiles + tx2][b];
            const double v21 = luts[static_cast<std::size_t>(ty2) * tiles + tx1][b];
            const double v22 = luts[static_cast<std::size_t>(ty2) * tiles + tx2][b];
            const double v = (v11 * (1 - xa) + v12 * xa) * (1 - ya) + (v21 * (1 - xa) + v22 * xa) * ya;
            out.at(x, y) = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
        }
    }
    return out;
}

GrayImage correct_contrast(const GrayImage& img, const ContrastParams& p)
{
    if (p.ball_radius < 1) throw PreconditionError("ball_radius must be >= 1");
    if (p.clahe_tiles < 1) throw PreconditionError("clahe_tiles must be >= 1");
    if (img.width() < p.clahe_tiles || img.height() < p.clahe_tiles)
        throw SizingError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                          " is smaller than one CLAHE tile of a " + std::to_string(p.clahe_tiles) + "x" +
                          std::to_string(p.clahe_tiles) + " grid");

    const GrayImage bg = rolling_ball_background(img, p.ball_radius);
    std::vector<float> residual(img.size());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = std::min(0.0f, img.data()[i] - bg.data()[i]);

    std::vector<float> sorted = residual;
    const auto q = static_cast<std::size_t>(std::clamp(p.stretch_quantile, 0.0, 1.0) * (sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q), sorted.end());
    const double range = std::max(static_cast<double>(-sorted[q]), p.min_contrast);

    GrayImage flat(img.width(), img.height());
    for (std::size_t i = 0; i < residual.size(); ++i)
        flat.data()[i] = static_cast<float>(std::clamp(1.0 + residual[i] / range, 0.0, 1.0));
    return clahe(flat, p.clahe_clip, p.clahe_tiles);
}

MorphPlan parse_morph_plan(const std::string& text)
{
    MorphPlan plan;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("morphology step '" + item + "' must be op:radius");
        const std::string op = item.substr(0, colon);
        MorphStep step;
        if (op == "erode") step.op = MorphOp::Erode;
        else if (op == "open") step.op = MorphOp::Open;
        else if (op == "dilate") step.op = MorphOp::Dilate;
        else throw ConfigError("unknown morphology op '" + op + "'");
        try {
            step.radius = std::stoi(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad morphology radius in '" + item + "'");
        }
        if (step.radius < 0) throw ConfigError("morphology radius must be >= 0");
        plan.push_back(step);
    }
    return plan;
}

std::string to_string(const MorphPlan& plan)
{
    std::string s;
    for (const auto& st : plan) {
        if (!s.empty()) s += ',';
        s += st.op == MorphOp::Erode ? "erode" : st.op == MorphOp::Open ? "open" : "dilate";
        s += ':' + std::to_string(st.radius);
    }
    return s;
}

BinaryMask threshold_dark(const GrayImage& img, double threshold)
{
    BinaryMask m(img.width(), img.height());
    for (std::size_t i = 0; i < img.size(); ++i) m.bits()[i] = img.data()[i] < threshold ? 1 : 0;
    return m;
}

BinaryMask erode(const BinaryMask& m, int radius)
{
    const auto off = disk_offsets(radius);
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.get(x, y)) continue;
            bool all = true;
            for (const auto& o : off) {
                if (!m.get_or(x + o.x, y + o.y, true)) {
                    all = false;
                    break;
                }
            }
            out.set(x, y, all);
        }
    }
    return out;
}

BinaryMask dilate(const BinaryMask& m, int radius)
{
    const auto off = disk_offsets(radius);
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.get(x, y)) continue;
            for (const auto& o : off) {
                const int nx = x + o.x, ny = y + o.y;
                if (nx >= 0 && ny >= 0 && nx < m.width() && ny < m.height()) out.set(nx, ny, true);
            }
        }
    }
    return out;
}

BinaryMask open(const BinaryMask& m, int radius) { return dilate(erode(m, radius), radius); }

BinaryMask apply_morphology(const BinaryMask& m, const MorphPlan& plan)
{
    BinaryMask cur = m;
    for (const auto& step : plan) {
        switch (step.op) {
        case MorphOp::Erode: cur = erode(cur, step.radius); break;
        case MorphOp::Open: cur = open(cur, step.radius); break;
        case MorphOp::Dilate: cur = dilate(cur, step.radius); break;
        }
    }
    return cur;
}

BinaryMask Blob::local_mask() const
{
    BinaryMask m(bbox.width(), bbox.height());
    for (const auto& p : pixels) m.set(p.x - bbox.x0, p.y - bbox.y0, true);
    return m;
}

Blob make_blob(std::vector<Point> pixels)
{
    Blob b;
    std::sort(pixels.begin(), pixels.end(), [](const Point& a, const Point& c) {
        return a.y != c.y ? a.y < c.y : a.x < c.x;
    });
    b.pixels = std::move(pixels);
    if (b.pixels.empty()) return b;
    b.bbox = {b.pixels.front().x, b.pixels.front().y, b.pixels.front().x, b.pixels.front().y};
    double sx = 0.0, sy = 0.0;
    for (const auto& p : b.pixels) {
        b.bbox.x0 = std::min(b.bbox.x0, p.x);
        b.bbox.x1 = std::max(b.bbox.x1, p.x);
        b.bbox.y0 = std::min(b.bbox.y0, p.y);
        b.bbox.y1 = std::max(b.bbox.y1, p.y);
        sx += p.x;
        sy += p.y;
    }
    b.cx = sx / static_cast<double>(b.pixels.size());
    b.cy = sy / static_cast<double>(b.pixels.size());
    return b;
}

std::vector<Blob> label_components(const BinaryMask& m, std::size_t min_area)
{
    std::vector<Blob> blobs;
    std::vector<std::uint8_t> seen(m.bits().size(), 0);
    std::vector<Point> stack;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * m.width() + x;
            if (!m.get(x, y) || seen[idx]) continue;
            std::vector<Point> pix;
            stack.assign(1, {x, y});
            seen[idx] = 1;
            while (!stack.empty()) {
                const Point p = stack.back();
                stack.pop_back();
                pix.push_back(p);
                for (const auto& d : kDirs) {
                    const int nx = p.x + d.x, ny = p.y + d.y;
                    if (!m.get_or(nx, ny, false)) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ny) * m.width() + nx;
                    if (seen[nidx]) continue;
                    seen[nidx] = 1;
                    stack.push_back({nx, ny});
                }
            }
            if (pix.size() >= min_area) blobs.push_back(make_blob(std::move(pix)));
        }
    }
    return blobs;
}

std::vector<Blob> segment_candidates(const GrayImage& img, double threshold, const MorphPlan& plan,
                                     std::size_t min_area)
{
    if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("threshold must lie in (0,1)");
    return label_components(apply_morphology(threshold_dark(img, threshold), plan), min_area);
}

EllipseFit fit_ellipse(const Blob& blob)
{
    if (blob.area() < 4) throw PreconditionError("fit_ellipse needs a blob of at least 4 pixels");
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& p : blob.pixels) {
        const double dx = p.x - blob.cx;
        const double dy = p.y - blob.cy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    const double n = static_cast<double>(blob.area());
    sxx /= n;
    syy /= n;
    sxy /= n;

    const double mean = 0.5 * (sxx + syy);
    const double diff = 0.5 * (sxx - syy);
    const double root = std::sqrt(diff * diff + sxy * sxy);
    const double l1 = mean + root;
    const double l2 = std::max(0.0, mean - root);

    EllipseFit fit;
    fit.cx = blob.cx;
    fit.cy = blob.cy;
    fit.major = 4.0 * std::sqrt(l1);
    fit.minor = 4.0 * std::sqrt(l2);
    double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    if (theta < 0.0) theta += std::numbers::pi;
    if (theta >= std::numbers::pi) theta -= std::numbers::pi;
    fit.orientation = theta;
    if (l2 <= 1e-12 * std::max(1.0, l1)) {
        fit.degenerate = true;
        fit.minor = 1.0;
    }
    if (fit.minor > fit.major) std::swap(fit.minor, fit.major);
    return fit;
}

double boundary_length(const Blob& blob)
{
    if (blob.area() < 2) return 0.0;
    const BinaryMask m = blob.local_mask();
    const int ox = blob.bbox.x0, oy = blob.bbox.y0;
    auto fg = [&](Point p) { return m.get_or(p.x - ox, p.y - oy, false); };

    // Moore-neighbour tracing, clockwise, from the first pixel in raster order.
    const Point start = blob.pixels.front();
    auto next_step = [&](Point c, int back, int& dir_out, int& back_out) -> bool {
        for (int k = 1; k <= 8; ++k) {
            const int d = (back + k) % 8;
            const Point n{c.x + kDirs[d].x, c.y + kDirs[d].y};
            if (!fg(n)) continue;
            const int pd = (back + k - 1) % 8;
            const Point prev{c.x + kDirs[pd].x, c.y + kDirs[pd].y};
            dir_out = d;
            back_out = dir_index(prev.x - n.x, prev.y - n.y);
            return true;
        }
        return false;
    };

    int first_dir = 0, back = 0;
    if (!next_step(start, 4, first_dir, back)) return 0.0;
    Point cur{start.x + kDirs[first_dir].x, start.y + kDirs[first_dir].y};
    double length = (first_dir % 2 == 0) ? 1.0 : std::numbers::sqrt2;
    const std::size_t guard = 8 * blob.area() + 16;
    for (std::size_t it = 0; it < guard; ++it) {
        int dir = 0, nback = 0;
        next_step(cur, back, dir, nback);
        if (cur == start && dir == first_dir) break;
        length += (dir % 2 == 0) ? 1.0 : std::numbers::sqrt2;
        cur = {cur.x + kDirs[dir].x, cur.y + kDirs[dir].y};
        back = nback;
    }
    return length;
}

ShapeDescriptors describe(const Blob& blob, const EllipseFit& fit)
{
    ShapeDescriptors d;
    const double area = static_cast<double>(blob.area());
    d.lengthiness = fit.minor > 0.0 ? fit.major / fit.minor : 0.0;
    const double ellipse_area = std::numbers::pi * 0.25 * fit.major * fit.minor;
    d.compactness = ellipse_area > 0.0 ? area / ellipse_area : 0.0;
    const double perim = boundary_length(blob);
    d.circularity = perim > 0.0 ? 4.0 * std::numbers::pi * area / (perim * perim) : 0.0;
    return d;
}

std::string GateVerdict::verdict_string() const
{
    if (keep) return "keep";
    std::string s;
    auto add = [&](RejectReason r, const char* name) {
        if (!rejected_for(r)) return;
        if (!s.empty()) s += '+';
        s += name;
    };
    add(kRejectDegenerate, "degenerate");
    add(kRejectLengthiness, "lengthiness");
    add(kRejectCompactness, "compactness");
    add(kRejectCircularity, "circularity");
    return s;
}

GateVerdict shape_gate(const Blob& blob, const EllipseFit& fit, const GateLimits& limits)
{
    GateVerdict v;
    v.descriptors = describe(blob, fit);
    if (fit.degenerate) {
        v.reasons = kRejectDegenerate;
        return v;
    }
    if (v.descriptors.lengthiness > limits.max_lengthiness) v.reasons |= kRejectLengthiness;
    if (v.descriptors.compactness < limits.min_compactness) v.reasons |= kRejectCompactness;
    if (v.descriptors.circularity < limits.min_circularity) v.reasons |= kRejectCircularity;
    v.keep = v.reasons == kRejectNone;
    return v;
}

Patch extract_patch(const GrayImage& img, const Blob& blob, int border)
{
    if (border < 0) throw PreconditionError("patch border must be >= 0");
    if (blob.pixels.empty() || blob.bbox.x0 < 0 || blob.bbox.y0 < 0 || blob.bbox.x1 >= img.width() ||
        blob.bbox.y1 >= img.height())
        throw PreconditionError("blob does not lie within the image");
    Patch p;
    p.border = border;
    p.blob = blob;
    const Rect want{blob.bbox.x0 - border, blob.bbox.y0 - border, blob.bbox.x1 + border, blob.bbox.y1 + border};
    p.region = {std::max(0, want.x0), std::max(0, want.y0), std::min(img.width() - 1, want.x1),
                std::min(img.height() - 1, want.y1)};
    p.clipped = !(p.region == want);
    p.image = crop(img, p.region);
    p.mask = BinaryMask(p.region.width(), p.region.height());
    for (const auto& px : blob.pixels) p.mask.set(px.x - p.region.x0, px.y - p.region.y0, true);
    return p;
}

}  // namespace etchpit::imgproc
