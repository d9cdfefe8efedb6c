// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/image.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace xvs {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 0) {
        throw std::invalid_argument("Image: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

void Image::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool sample_bilinear(const Image& img, double x, double y, std::span<double> out) {
    constexpr double kEdge = 1e-9;
    const int w = img.width();
    const int h = img.height();
    if (w == 0 || h == 0 || !(x >= -kEdge && y >= -kEdge && x <= w - 1 + kEdge && y <= h - 1 + kEdge)) {
        return false;
    }
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    for (int c = 0; c < img.channels() && c < static_cast<int>(out.size()); ++c) {
        const double a = img.at(x0, y0, c);
        const double b = img.at(x0, y1, c);
        const double top = a + fx * (img.at(x1, y0, c) - a);
        const double bottom = b + fx * (img.at(x1, y1, c) - b);
        out[static_cast<std::size_t>(c)] = top + fy * (bottom - top);
    }
    return true;
}

Image to_grayscale(const Image& img) {
    Image gray(img.width(), img.height(), 1);
    const int c = img.channels();
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            double sum = 0.0;
            for (int k = 0; k < c; ++k) {
                sum += img.at(x, y, k);
            }
            gray.at(x, y) = sum / c;
        }
    }
    return gray;
}

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> to_interleaved_bytes(const Image& img, int& channels_out) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw FormatError("encode: only 1 or 3 channel images are supported");
    }
    channels_out = img.channels();
    std::vector<std::uint8_t> bytes(img.size());
    const auto data = img.data();
    std::transform(data.begin(), data.end(), bytes.begin(), to_byte);
    return bytes;
}

} // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw FormatError(std::string("png decode: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
        std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("png decode: " + msg);
    }
    Image out(static_cast<int>(image.width), static_cast<int>(image.height), 3);
    auto data = out.data();
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        data[i] = buffer[i] / 255.0;
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    int channels = 0;
    auto pixels = to_interleaved_bytes(img, channels);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr) == 0) {
        throw FormatError(std::string("png encode: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr) == 0) {
        throw FormatError(std::string("png encode: ") + image.message);
    }
    out.resize(size);
    return out;
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    char message[JMSG_LENGTH_MAX];
};

[[noreturn]] void jpeg_throw(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    throw FormatError(std::string("jpeg: ") + err->message);
}

} // namespace

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = jpeg_throw;
    try {
        jpeg_create_decompress(&cinfo);
        jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
        jpeg_read_header(&cinfo, TRUE);
        cinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo);
        const int w = static_cast<int>(cinfo.output_width);
        const int h = static_cast<int>(cinfo.output_height);
        Image out(w, h, 3);
        std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
        while (cinfo.output_scanline < cinfo.output_height) {
            const int y = static_cast<int>(cinfo.output_scanline);
            JSAMPROW rows[1] = {row.data()};
            jpeg_read_scanlines(&cinfo, rows, 1);
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    out.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
                }
            }
        }
        jpeg_finish_decompress(&cinfo);
        jpeg_destroy_decompress(&cinfo);
        return out;
    } catch (...) {
        jpeg_destroy_decompress(&cinfo);
        throw;
    }
}

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality) {
    int channels = 0;
    auto pixels = to_interleaved_bytes(img, channels);
    jpeg_compress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = jpeg_throw;
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    try {
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buffer, &size);
        cinfo.image_width = static_cast<JDIMENSION>(img.width());
        cinfo.image_height = static_cast<JDIMENSION>(img.height());
        cinfo.input_components = channels;
        cinfo.in_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, quality, TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        const std::size_t stride = static_cast<std::size_t>(img.width()) * channels;
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW rows[1] = {pixels.data() + cinfo.next_scanline * stride};
            jpeg_write_scanlines(&cinfo, rows, 1);
        }
        jpeg_finish_compress(&cinfo);
        std::vector<std::uint8_t> out(buffer, buffer + size);
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        return out;
    } catch (...) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw;
    }
}

Image decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
        return decode_png(bytes);
    }
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
        return decode_jpeg(bytes);
    }
    throw FormatError("unrecognized image format");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_image(bytes);
}

void write_image(const Image& img, const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        write_file_atomic(path, encode_png(img));
    } else if (ext == ".jpg" || ext == ".jpeg") {
        write_file_atomic(path, encode_jpeg(img));
    } else if (ext == ".npy") {
        write_npy(img, path);
    } else {
        throw FormatError("unsupported image extension: " + ext);
    }
}

namespace {

std::string npy_header_value(const std::string& header, const std::string& key) {
    const auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) {
        throw FormatError("npy: missing header key " + key);
    }
    auto colon = header.find(':', pos);
    auto start = header.find_first_not_of(' ', colon + 1);
    if (header[start] == '(') {
        return header.substr(start, header.find(')', start) - start + 1);
    }
    auto end = header.find_first_of(",}", start);
    return header.substr(start, end - start);
}

} // namespace

Image read_npy(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    static constexpr char kMagic[] = "\x93NUMPY";
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0) {
        throw FormatError("npy: bad magic in " + path.string());
    }
    const int major = bytes[6];
    std::size_t header_len = 0;
    std::size_t offset = 0;
    if (major == 1) {
        header_len = bytes[8] | (bytes[9] << 8);
        offset = 10;
    } else if (major == 2 || major == 3) {
        header_len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (static_cast<std::size_t>(bytes[11]) << 24);
        offset = 12;
    } else {
        throw FormatError("npy: unsupported version");
    }
    if (offset + header_len > bytes.size()) {
        throw FormatError("npy: truncated header");
    }
    const std::string header(reinterpret_cast<const char*>(bytes.data() + offset), header_len);
    const std::string descr = npy_header_value(header, "descr");
    const std::string fortran = npy_header_value(header, "fortran_order");
    const std::string shape = npy_header_value(header, "shape");
    if (fortran.find("True") != std::string::npos) {
        throw FormatError("npy: fortran order not supported");
    }
    std::size_t elem = 0;
    if (descr.find("<f4") != std::string::npos) {
        elem = 4;
    } else if (descr.find("<f8") != std::string::npos) {
        elem = 8;
    } else {
        throw FormatError("npy: unsupported dtype " + descr);
    }
    std::vector<long long> dims;
    std::string digits;
    for (char ch : shape) {
        if (std::isdigit(static_cast<unsigned char>(ch))) {
            digits += ch;
        } else if (!digits.empty()) {
            dims.push_back(std::stoll(digits));
            digits.clear();
        }
    }
    if (dims.size() != 2) {
        throw FormatError("npy: expected a 2-D array");
    }
    const int h = static_cast<int>(dims[0]);
    const int w = static_cast<int>(dims[1]);
    const std::size_t data_offset = offset + header_len;
    if (data_offset + static_cast<std::size_t>(w) * h * elem > bytes.size()) {
        throw FormatError("npy: truncated data");
    }
    Image out(w, h, 1);
    auto data = out.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint8_t* p = bytes.data() + data_offset + i * elem;
        if (elem == 4) {
            float v;
            std::memcpy(&v, p, 4);
            data[i] = v;
        } else {
            double v;
            std::memcpy(&v, p, 8);
            data[i] = v;
        }
    }
    return out;
}

void write_npy(const Image& img, const std::filesystem::path& path) {
    if (img.channels() != 1) {
        throw FormatError("npy: only single-channel images are written");
    }
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(img.height()) +
                         ", " + std::to_string(img.width()) + "), }";
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header += '\n';
    std::vector<std::uint8_t> out;
    out.reserve(10 + header.size() + img.size() * 4);
    const char magic[] = "\x93NUMPY\x01\x00";
    out.insert(out.end(), magic, magic + 8);
    out.push_back(static_cast<std::uint8_t>(header.size() & 0xFF));
    out.push_back(static_cast<std::uint8_t>((header.size() >> 8) & 0xFF));
    out.insert(out.end(), header.begin(), header.end());
    for (double v : img.data()) {
        const float f = static_cast<float>(v);
        std::uint8_t raw[4];
        std::memcpy(raw, &f, 4);
        out.insert(out.end(), raw, raw + 4);
    }
    write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    static std::atomic<unsigned long long> counter{0};
    std::random_device rd;
    const auto tmp = path.string() + ".tmp." + std::to_string(rd()) + "." + std::to_string(counter++);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp);
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw std::runtime_error("short write to " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace xvs
