#include "capnet/image_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "capnet/errors.hpp"

namespace capnet {

namespace {

std::uint8_t to_byte(double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

struct PnmHeader {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t data_offset = 0;
};

// Parses "P6|P5 <w> <h> <maxval>" allowing netpbm whitespace and # comments.
PnmHeader parse_header(const std::vector<char>& bytes, const std::string& magic,
                       const std::string& path) {
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> PnmHeader {
        throw FormatError(path + ": " + msg, pos);
    };
    if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
        return fail("expected magic " + magic);
    }
    pos = 2;
    auto next_token = [&]() -> std::size_t {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
            fail("expected decimal header field");
        }
        std::size_t v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            ++pos;
        }
        return v;
    };
    PnmHeader h;
    h.width = next_token();
    h.height = next_token();
    const std::size_t maxval = next_token();
    if (maxval != 255) fail("only maxval 255 is supported, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !(bytes[pos] == ' ' || bytes[pos] == '\t' || bytes[pos] == '\r' ||
                                 bytes[pos] == '\n')) {
        fail("expected single whitespace after maxval");
    }
    ++pos;
    h.data_offset = pos;
    if (h.width == 0 || h.height == 0) fail("zero image dimension");
    return h;
}

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    const std::vector<char> bytes = read_file(path);
    const PnmHeader h = parse_header(bytes, "P6", path);
    const std::size_t need = h.width * h.height * 3;
    if (bytes.size() - h.data_offset < need) {
        throw FormatError(path + ": truncated pixel data", bytes.size());
    }
    Tensor img({3, h.height, h.width});
    const auto* px = reinterpret_cast<const std::uint8_t*>(bytes.data() + h.data_offset);
    for (std::size_t y = 0; y < h.height; ++y) {
        for (std::size_t x = 0; x < h.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                img.at(c, y, x) = static_cast<double>(px[(y * h.width + x) * 3 + c]) / 255.0;
            }
        }
    }
    return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("write_ppm expects a (3,H,W) tensor, got " + shape_str(image.shape()));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const std::size_t hgt = image.dim(1), wid = image.dim(2);
    out << "P6\n" << wid << " " << hgt << "\n255\n";
    std::vector<std::uint8_t> row(wid * 3);
    for (std::size_t y = 0; y < hgt; ++y) {
        for (std::size_t x = 0; x < wid; ++x) {
            for (std::size_t c = 0; c < 3; ++c) row[x * 3 + c] = to_byte(image.at(c, y, x));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("short write to " + path);
}

Tensor read_pgm(const std::string& path) {
    const std::vector<char> bytes = read_file(path);
    const PnmHeader h = parse_header(bytes, "P5", path);
    const std::size_t need = h.width * h.height;
    if (bytes.size() - h.data_offset < need) {
        throw FormatError(path + ": truncated pixel data", bytes.size());
    }
    Tensor map({h.height, h.width});
    const auto* px = reinterpret_cast<const std::uint8_t*>(bytes.data() + h.data_offset);
    for (std::size_t i = 0; i < need; ++i) map[i] = static_cast<double>(px[i]) / 255.0;
    return map;
}

void write_pgm(const std::string& path, const Tensor& map) {
    if (map.rank() != 2) {
        throw DimensionError("write_pgm expects a (H,W) tensor, got " + shape_str(map.shape()));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << map.dim(1) << " " << map.dim(0) << "\n255\n";
    std::vector<std::uint8_t> buf(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) buf[i] = to_byte(map[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + path);
}

namespace {

// src coordinate for corner-aligned sampling.
inline double src_coord(std::size_t i, std::size_t out_n, std::size_t in_n) {
    if (out_n <= 1 || in_n <= 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(in_n - 1) /
           static_cast<double>(out_n - 1);
}

void resize_plane(const double* src, std::size_t in_h, std::size_t in_w, double* dst,
                  std::size_t out_h, std::size_t out_w) {
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = src_coord(y, out_h, in_h);
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = src_coord(x, out_w, in_w);
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src[y0 * in_w + x0] * (1.0 - wx) + src[y0 * in_w + x1] * wx;
            const double bot = src[y1 * in_w + x0] * (1.0 - wx) + src[y1 * in_w + x1] * wx;
            dst[y * out_w + x] = top * (1.0 - wy) + bot * wy;
        }
    }
}

}  // namespace

Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ValidationError("resize target must be positive");
    if (t.rank() == 2) {
        Tensor out({out_h, out_w});
        resize_plane(t.data(), t.dim(0), t.dim(1), out.data(), out_h, out_w);
        return out;
    }
    if (t.rank() == 3) {
        Tensor out({t.dim(0), out_h, out_w});
        for (std::size_t c = 0; c < t.dim(0); ++c) {
            resize_plane(t.data() + c * t.dim(1) * t.dim(2), t.dim(1), t.dim(2),
                         out.data() + c * out_h * out_w, out_h, out_w);
        }
        return out;
    }
    throw DimensionError("bilinear_resize expects rank 2 or 3, got " + shape_str(t.shape()));
}

}  // namespace capnet
