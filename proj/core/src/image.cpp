#include "tace/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace tace {

Image::Image(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("Image: non-positive dimensions");
}

void save_pgm(const Image& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0 || img.size() != img.pixels.size())
        throw std::invalid_argument("save_pgm: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::string buf;
    buf.reserve(img.size() * 2);
    for (double p : img.pixels) {
        const double c = std::clamp(p, 0.0, 1.0);
        const auto v = static_cast<std::uint16_t>(std::lround(c * 65535.0));
        buf.push_back(static_cast<char>(v >> 8));
        buf.push_back(static_cast<char>(v & 0xFF));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_pgm: write failed for " + path);
}

namespace {

// next whitespace-delimited token, skipping '#' comment lines
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            break;
        }
    }
    while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
    if (c != EOF && c != '\n' && c != '\r' && c != ' ' && c != '\t') in.unget();
    return tok;
}

}  // namespace

Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_pgm: cannot open " + path);
    if (next_token(in) != "P5") throw std::runtime_error("load_pgm: not a binary PGM: " + path);
    int w = 0, h = 0;
    long maxval = 0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        maxval = std::stol(next_token(in));
    } catch (const std::exception&) {
        throw std::runtime_error("load_pgm: malformed header: " + path);
    }
    if (w <= 0 || h <= 0) throw std::runtime_error("load_pgm: bad dimensions: " + path);
    if (maxval != 65535) throw std::runtime_error("load_pgm: expected maxval 65535: " + path);

    Image img(w, h);
    std::string buf(static_cast<std::size_t>(w) * h * 2, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("load_pgm: truncated pixel data: " + path);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const auto hi = static_cast<std::uint8_t>(buf[2 * i]);
        const auto lo = static_cast<std::uint8_t>(buf[2 * i + 1]);
        img.pixels[i] = static_cast<double>((hi << 8) | lo) / 65535.0;
    }
    return img;
}

double pixel_mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("pixel_mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace tace
