#include "dh/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace dh {

namespace {
uint8_t to_u8(double v) {
    double q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(q);
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
}  // namespace

void save_png(const FaceImage& img, const std::string& path) {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("save_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("save_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("save_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("save_png: libpng error writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] = to_u8(img.at(y, x, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

FaceImage load_png(const std::string& path) {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("load_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("load_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("load_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: libpng error reading " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_byte color_type = png_get_color_type(png, info);
    png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    FaceImage img(static_cast<int>(h), static_cast<int>(w));
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(static_cast<int>(y), static_cast<int>(x), c) =
                    row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

bool point_in_polygon(double px, double py,
                      const std::vector<std::array<double, 2>>& poly) {
    bool inside = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        double xi = poly[i][0], yi = poly[i][1];
        double xj = poly[j][0], yj = poly[j][1];
        if ((yi > py) != (yj > py)) {
            double xint = (xj - xi) * (py - yi) / (yj - yi) + xi;
            if (px < xint) inside = !inside;
        }
    }
    return inside;
}

void fill_polygon(FaceImage& img, const std::vector<std::array<double, 2>>& poly,
                  const Rgb& color) {
    if (poly.size() < 3) return;
    double x0 = poly[0][0], x1 = x0, y0 = poly[0][1], y1 = y0;
    for (const auto& p : poly) {
        x0 = std::min(x0, p[0]);
        x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]);
        y1 = std::max(y1, p[1]);
    }
    int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    int ix1 = std::min(img.w - 1, static_cast<int>(std::ceil(x1)));
    int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    int iy1 = std::min(img.h - 1, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y <= iy1; ++y)
        for (int x = ix0; x <= ix1; ++x)
            if (point_in_polygon(x + 0.5, y + 0.5, poly))
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
}

void fill_disc(FaceImage& img, double cx, double cy, double r, const Rgb& color) {
    int ix0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    int ix1 = std::min(img.w - 1, static_cast<int>(std::ceil(cx + r + 1)));
    int iy0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    int iy1 = std::min(img.h - 1, static_cast<int>(std::ceil(cy + r + 1)));
    double r2 = r * r;
    for (int y = iy0; y <= iy1; ++y)
        for (int x = ix0; x <= ix1; ++x) {
            double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= r2)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
        }
}

void stamp_disc_channel(FaceImage& img, double cx, double cy, double r, int channel,
                        bool* clipped) {
    if (cx < 0.0 || cx >= img.w || cy < 0.0 || cy >= img.h) {
        if (clipped) *clipped = true;
        return;
    }
    if (clipped) *clipped = false;
    int ix0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    int ix1 = std::min(img.w - 1, static_cast<int>(std::ceil(cx + r + 1)));
    int iy0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    int iy1 = std::min(img.h - 1, static_cast<int>(std::ceil(cy + r + 1)));
    double r2 = r * r;
    for (int y = iy0; y <= iy1; ++y)
        for (int x = ix0; x <= ix1; ++x) {
            double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= r2) img.at(y, x, channel) = 1.0;
        }
}

FaceImage hstack(const std::vector<FaceImage>& imgs, int pad) {
    if (imgs.empty()) return {};
    int h = imgs[0].h;
    int w = 0;
    for (const auto& im : imgs) {
        if (im.h != h) throw std::invalid_argument("hstack: height mismatch");
        w += im.w + pad;
    }
    w -= pad;
    FaceImage out(h, w, 1.0);
    int x0 = 0;
    for (const auto& im : imgs) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < im.w; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = im.at(y, x, c);
        x0 += im.w + pad;
    }
    return out;
}

}  // namespace dh
