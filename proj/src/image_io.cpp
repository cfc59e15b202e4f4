#include "etchpit/image_io.hpp"

#include "etchpit/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace etchpit::io {

namespace {

// Fixed PNG parameters keep artifacts byte-reproducible across runs.
const std::vector<int> kPngParams = {cv::IMWRITE_PNG_COMPRESSION, 6};

void write_mat(const std::filesystem::path& path, const cv::Mat& mat)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat, kPngParams);
    } catch (const cv::Exception& e) {
        throw DataError("cannot write image " + path.string() + ": " + e.what());
    }
    if (!ok) throw DataError("cannot write image " + path.string());
}

}  // namespace

GrayImage read_gray(const std::filesystem::path& path)
{
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read image " + path.string());
    GrayImage img(m.cols, m.rows);
    if (m.depth() == CV_8U) {
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x) img.at(x, y) = from_u8(m.at<std::uint8_t>(y, x));
    } else if (m.depth() == CV_16U) {
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x) img.at(x, y) = m.at<std::uint16_t>(y, x) / 65535.0f;
    } else {
        throw DataError("unsupported pixel depth in " + path.string());
    }
    return img;
}

BinaryMask read_mask(const std::filesystem::path& path)
{
    const GrayImage g = read_gray(path);
    BinaryMask m(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x) m.set(x, y, g.at(x, y) >= 0.5f);
    return m;
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& img)
{
    cv::Mat m(img.height(), img.width(), CV_8UC1);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) m.at<std::uint8_t>(y, x) = to_u8(img.at(x, y));
    write_mat(path, m);
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask)
{
    cv::Mat m(mask.height(), mask.width(), CV_8UC1);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) m.at<std::uint8_t>(y, x) = mask.get(x, y) ? 255 : 0;
    write_mat(path, m);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img)
{
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const auto& p = img.pixels[static_cast<std::size_t>(y) * img.width + x];
            m.at<cv::Vec3b>(y, x) = cv::Vec3b(p[2], p[1], p[0]);
        }
    }
    write_mat(path, m);
}

}  // namespace etchpit::io
