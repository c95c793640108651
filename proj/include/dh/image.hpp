#pragma once

// RGB float image container, 8-bit PNG io, and the small set of scan
// conversion helpers (polygon fill, discs) shared by the synthetic renderer
// and the landmark rasterizer.

#include <array>
#include <string>
#include <vector>

namespace dh {

struct FaceImage {
    int h = 0, w = 0;
    std::vector<double> pix;  // h*w*3 row-major, values in [0,1]

    FaceImage() = default;
    FaceImage(int h_, int w_, double fill = 0.0)
        : h(h_), w(w_), pix(static_cast<size_t>(h_) * w_ * 3, fill) {}

    double& at(int y, int x, int c) { return pix[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const {
        return pix[(static_cast<size_t>(y) * w + x) * 3 + c];
    }
    bool same_shape(const FaceImage& o) const { return h == o.h && w == o.w; }
};

using Rgb = std::array<double, 3>;

void save_png(const FaceImage& img, const std::string& path);
FaceImage load_png(const std::string& path);

// Even-odd fill of a closed polygon given in (x, y) pixel coordinates; a
// pixel is covered when its center lies inside.
void fill_polygon(FaceImage& img, const std::vector<std::array<double, 2>>& poly,
                  const Rgb& color);
bool point_in_polygon(double px, double py,
                      const std::vector<std::array<double, 2>>& poly);

void fill_disc(FaceImage& img, double cx, double cy, double r, const Rgb& color);
// additive single-channel disc used by the landmark rasterizer
void stamp_disc_channel(FaceImage& img, double cx, double cy, double r, int channel,
                        bool* clipped = nullptr);

// side-by-side montage (equal heights required)
FaceImage hstack(const std::vector<FaceImage>& imgs, int pad = 2);

}  // namespace dh
