#pragma once

#include <string>

#include "tace/numerics.hpp"

namespace tace {

/// Grayscale image, row-major, intensities nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    Vector pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0);

    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

/// Writes binary PGM (P5), maxval 65535, big-endian sample order. Intensities
/// are clamped to [0, 1] and quantized with round-to-nearest.
void save_pgm(const Image& img, const std::string& path);

/// Reads binary P5 PGM with maxval 65535 back into [0, 1] doubles.
Image load_pgm(const std::string& path);

double pixel_mse(const Image& a, const Image& b);

}  // namespace tace
