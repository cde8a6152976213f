/**
 * @file io.hpp
 * @brief File formats: binary PGM (P5), grayscale/RGB PNG and spectral stack
 *        manifests.
 *
 * All writers go through write_atomic(): data lands in a sibling temp file
 * which is renamed over the target, so an interrupted run never leaves a
 * truncated artifact behind.
 */
#pragma once

#include "error.hpp"
#include "image.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace specreg {

// =============================================================================
// Raw byte helpers
// =============================================================================

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
    return bytes;
}

/// Writes bytes to `path` via temp file + rename.
inline void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failure on '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into '" + path.string() + "'");
    }
}

inline void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    write_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// =============================================================================
// PGM (P5)
// =============================================================================

namespace detail {

inline bool is_pgm_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Reads one ASCII header integer, skipping whitespace and '#' comments.
inline long pgm_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    for (;;) {
        while (pos < b.size() && is_pgm_space(b[pos])) ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    if (pos >= b.size() || b[pos] < '0' || b[pos] > '9') throw IoError("PGM: malformed header");
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        v = v * 10 + (b[pos] - '0');
        if (v > 1'000'000'000L) throw IoError("PGM: header value out of range");
        ++pos;
    }
    return v;
}

inline Image2D decode_pgm(const std::vector<std::uint8_t>& b) {
    if (b.size() < 2 || b[0] != 'P') throw IoError("PGM: missing magic");
    if (b[1] != '5') {
        if (b[1] == '6' || b[1] == '3') throw IoError("PGM: unsupported color format (P" + std::string(1, static_cast<char>(b[1])) + ")");
        throw IoError("PGM: unsupported format; only binary P5 is read");
    }
    std::size_t pos = 2;
    const long w = pgm_header_int(b, pos);
    const long h = pgm_header_int(b, pos);
    const long maxval = pgm_header_int(b, pos);
    if (pos >= b.size() || !is_pgm_space(b[pos])) throw IoError("PGM: malformed header");
    ++pos;  // single whitespace before raster
    if (w < 1 || h < 1) throw IoError("PGM: invalid dimensions");
    if (maxval < 1 || maxval > 65535) throw IoError("PGM: unsupported maxval");
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (b.size() - pos < n * bpp) throw IoError("PGM: truncated raster");
    std::vector<double> data(n);
    const double maxv = static_cast<double>(maxval);
    for (std::size_t i = 0; i < n; ++i) {
        unsigned v = bpp == 1 ? b[pos + i] : (static_cast<unsigned>(b[pos + 2 * i]) << 8) | b[pos + 2 * i + 1];
        data[i] = std::min(1.0, v / maxv);
    }
    return Image2D(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

inline unsigned quantize(double v, unsigned maxval) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(c * maxval));
}

inline std::vector<std::uint8_t> encode_pgm(const Image2D& img, int bit_depth) {
    const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
    std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n" +
                         std::to_string(maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.size() * (bit_depth == 16 ? 2 : 1));
    for (double v : img.data()) {
        const unsigned q = quantize(v, maxval);
        if (bit_depth == 16) out.push_back(static_cast<std::uint8_t>(q >> 8));
        out.push_back(static_cast<std::uint8_t>(q & 0xFF));
    }
    return out;
}

// ---- PNG via libpng (memory read / write) ----

struct PngReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t pos;
};

inline void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
    auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + len > cur->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(out, cur->bytes->data() + cur->pos, len);
    cur->pos += len;
}

inline void png_error_cb(png_structp, png_const_charp msg) { throw IoError(std::string("PNG: ") + msg); }
inline void png_warn_cb(png_structp, png_const_charp) {}

inline void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}
inline void png_flush_cb(png_structp) {}

inline bool is_png(const std::vector<std::uint8_t>& b) {
    static constexpr std::array<std::uint8_t, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    return b.size() >= 8 && std::equal(sig.begin(), sig.end(), b.begin());
}

inline Image2D decode_png(const std::vector<std::uint8_t>& b) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warn_cb);
    if (!png) throw IoError("PNG: cannot allocate decoder");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p; png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    PngReadCursor cursor{&b, 0};
    png_set_read_fn(png, &cursor, png_read_cb);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) throw IoError("PNG: unsupported color type (grayscale only)");
    if (depth != 8 && depth != 16) throw IoError("PNG: unsupported bit depth " + std::to_string(depth));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raster(rowbytes * static_cast<std::size_t>(h));
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = raster.data() + static_cast<std::size_t>(y) * rowbytes;
    png_read_image(png, rows.data());
    std::vector<double> data(static_cast<std::size_t>(w) * h);
    const double maxv = depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::uint8_t* r = rows[y];
            unsigned v = depth == 16 ? (static_cast<unsigned>(r[2 * x]) << 8) | r[2 * x + 1] : r[x];
            data[static_cast<std::size_t>(y) * w + x] = v / maxv;
        }
    return Image2D(w, h, std::move(data));
}

// channels: 1 (gray) or 3 (RGB); samples already packed big-endian for 16 bit.
inline std::vector<std::uint8_t> encode_png(int w, int h, int channels, int depth, const std::vector<std::uint8_t>& raster) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warn_cb);
    if (!png) throw IoError("PNG: cannot allocate encoder");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p; png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t rowbytes = static_cast<std::size_t>(w) * channels * (depth / 8);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(raster.data() + static_cast<std::size_t>(y) * rowbytes));
    png_write_end(png, nullptr);
    return out;
}

inline std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

} // namespace detail

// =============================================================================
// Public image I/O
// =============================================================================

/// Decodes a P5 PGM or grayscale PNG; intensities scaled by 1/maxval.
inline Image2D load_image(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    if (detail::is_png(bytes)) return detail::decode_png(bytes);
    if (!bytes.empty() && bytes[0] == 'P') return detail::decode_pgm(bytes);
    throw IoError("'" + path.string() + "': not a PGM or PNG file");
}

/// Encodes by extension (.png, otherwise PGM). Values are clamped to [0,1].
inline void save_image(const Image2D& img, const std::filesystem::path& path, int bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("save_image: bit depth must be 8 or 16");
    if (detail::lower_ext(path) == ".png") {
        const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
        std::vector<std::uint8_t> raster;
        raster.reserve(img.size() * (bit_depth / 8));
        for (double v : img.data()) {
            const unsigned q = detail::quantize(v, maxval);
            if (bit_depth == 16) raster.push_back(static_cast<std::uint8_t>(q >> 8));
            raster.push_back(static_cast<std::uint8_t>(q & 0xFF));
        }
        write_atomic(path, detail::encode_png(img.width(), img.height(), 1, bit_depth, raster));
    } else {
        write_atomic(path, detail::encode_pgm(img, bit_depth));
    }
}

/// 8-bit RGB PNG.
inline void save_rgb_png(const RgbImage& img, const std::filesystem::path& path) {
    std::vector<std::uint8_t> raster;
    raster.reserve(img.pixels.size() * 3);
    for (const auto& p : img.pixels) {
        raster.push_back(p.r);
        raster.push_back(p.g);
        raster.push_back(p.b);
    }
    write_atomic(path, detail::encode_png(img.width, img.height, 3, 8, raster));
}

/// Reads an RGB PNG back (used by tests and tooling).
inline RgbImage load_rgb_png(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    if (!detail::is_png(bytes)) throw IoError("not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_cb, detail::png_warn_cb);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p; png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    detail::PngReadCursor cursor{&bytes, 0};
    png_set_read_fn(png, &cursor, detail::png_read_cb);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8)
        throw IoError("PNG: expected 8-bit RGB");
    RgbImage out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> row(static_cast<std::size_t>(out.width) * 3);
    out.pixels.reserve(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < out.width; ++x) out.pixels.push_back({row[3 * x], row[3 * x + 1], row[3 * x + 2]});
    }
    return out;
}

// =============================================================================
// Stack manifests
// =============================================================================

/// Manifest: UTF-8 text, one channel path per line, '#' starts a comment.
/// Relative paths resolve against the manifest's directory.
inline SpectralStack load_stack(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
    SpectralStack stack;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r\n");
        std::filesystem::path p = line.substr(b, e - b + 1);
        if (p.is_relative()) p = manifest.parent_path() / p;
        Image2D img = load_image(p);
        if (!stack.channels.empty() && !img.same_shape(stack.channels.front()))
            throw IoError("manifest channel '" + p.string() + "' has mismatched dimensions");
        stack.channels.push_back(std::move(img));
        stack.labels.push_back(p.stem().string());
    }
    if (stack.channels.empty()) throw IoError("manifest '" + manifest.string() + "' lists no channels");
    return stack;
}

} // namespace specreg
