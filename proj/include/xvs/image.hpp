// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xvs {

/// Decoding or encoding failure for an image or array file.
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major H x W x C image of doubles.
///
/// Pixel (x, y) is sampled at continuous image coordinate (x, y); color
/// images are nominally in [0, 1].
class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    void fill(double value);

  private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Bilinear sample at continuous coordinate (x, y). Returns false (and leaves
/// `out` untouched) when the point lies outside [0, W-1] x [0, H-1].
bool sample_bilinear(const Image& img, double x, double y, std::span<double> out);

/// Mean over channels, producing a single-channel image.
Image to_grayscale(const Image& img);

// 8-bit codecs. Decoders return RGB (3 channel) images scaled to [0, 1];
// encoders accept 1 or 3 channels and clamp to [0, 1].
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_jpeg(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality = 92);

/// Sniffs PNG/JPEG magic bytes.
Image decode_image(std::span<const std::uint8_t> bytes);

Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

/// Single-channel float arrays in NumPy `.npy` format (v1, little endian
/// `<f4` or `<f8`, C order, 2-D shape (H, W)).
Image read_npy(const std::filesystem::path& path);
void write_npy(const Image& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace xvs
