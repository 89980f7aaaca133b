#pragma once

#include <string>
#include <vector>

namespace csplat {

// Row-major, channel-interleaved RGB, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // size = height * width * 3

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(size_t(w) * h * 3, fill) {}

    double& at(int x, int y, int c) { return data[(size_t(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(size_t(y) * width + x) * 3 + c]; }
    size_t pixel_count() const { return size_t(width) * height; }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

// 8-bit PNG, values clamped to [0,1] and quantized.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Raw float32 dump: magic "CSF1", u32 width/height/channels, little-endian data.
void write_f32(const std::string& path, const Image& img);
Image read_f32(const std::string& path);

}  // namespace csplat
