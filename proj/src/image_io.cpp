#include "utls/image_io.hpp"

#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <vector>

namespace utls::io {
namespace fs = std::filesystem;

namespace {

cv::Mat read_any(const fs::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw Error("cannot read image: " + path.string());
    return m;
}

void write_encoded(const fs::path& path, const cv::Mat& mat) {
    std::vector<uchar> buf;
    if (!cv::imencode(".png", mat, buf)) throw Error("cannot encode PNG: " + path.string());
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()));
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write file: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("cannot write file: " + tmp.string());
    }
    fs::rename(tmp, path);
}

GrayImage read_gray(const fs::path& path) {
    cv::Mat m = read_any(path);
    if (m.depth() == CV_16U) m.convertTo(m, CV_8U, 1.0 / 257.0);
    else if (m.depth() != CV_8U) throw Error("unsupported image depth: " + path.string());
    if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
    else if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2GRAY);
    else if (m.channels() != 1) throw Error("unsupported channel count: " + path.string());
    GrayImage out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const auto* src = m.ptr<std::uint8_t>(r);
        std::copy(src, src + m.cols, out.row(r).begin());
    }
    return out;
}

void write_gray(const fs::path& path, const GrayImage& image) {
    cv::Mat m(image.rows(), image.cols(), CV_8UC1, const_cast<std::uint8_t*>(image.data().data()));
    write_encoded(path, m);
}

void write_mask(const fs::path& path, const Mask& mask) {
    GrayImage g(mask.rows(), mask.cols());
    auto out = g.data();
    auto in = mask.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] ? 255 : 0;
    write_gray(path, g);
}

Mask read_mask(const fs::path& path) {
    cv::Mat m = read_any(path);
    if (m.channels() != 1) cv::cvtColor(m, m, m.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
    Mask out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c)
            out(r, c) = (m.depth() == CV_16U ? m.at<std::uint16_t>(r, c) : m.at<std::uint8_t>(r, c)) != 0;
    return out;
}

void write_labels(const fs::path& path, const LabelImage& labels) {
    cv::Mat m(labels.rows(), labels.cols(), CV_16UC1, const_cast<std::uint16_t*>(labels.data().data()));
    write_encoded(path, m);
}

LabelImage read_labels(const fs::path& path) {
    cv::Mat m = read_any(path);
    if (m.channels() != 1) throw Error("label map must be single-channel: " + path.string());
    if (m.depth() == CV_8U) m.convertTo(m, CV_16U);
    if (m.depth() != CV_16U) throw Error("label map must be 8- or 16-bit: " + path.string());
    LabelImage out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const auto* src = m.ptr<std::uint16_t>(r);
        std::copy(src, src + m.cols, out.row(r).begin());
    }
    return out;
}

void write_rgb(const fs::path& path, const RgbImage& image) {
    cv::Mat m(image.rows, image.cols, CV_8UC3);
    for (int r = 0; r < image.rows; ++r) {
        auto* dst = m.ptr<std::uint8_t>(r);
        const std::uint8_t* src = image.rgb.data() + static_cast<std::size_t>(r) * image.cols * 3;
        for (int c = 0; c < image.cols; ++c) {
            dst[3 * c + 0] = src[3 * c + 2];
            dst[3 * c + 1] = src[3 * c + 1];
            dst[3 * c + 2] = src[3 * c + 0];
        }
    }
    write_encoded(path, m);
}

}  // namespace utls::io
