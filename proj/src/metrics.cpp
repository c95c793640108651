#include "dh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dh {

namespace {

void check_pair(const LandmarkSequence& a, const LandmarkSequence& b, const char* op) {
    if (a.length() != b.length())
        throw std::invalid_argument(std::string(op) + ": sequence length mismatch");
    if (a.landmark_count() != b.landmark_count())
        throw std::invalid_argument(std::string(op) + ": landmark count mismatch");
}

double mouth_distance_mean(const LandmarkSequence& pred, const LandmarkSequence& gt,
                           const std::vector<int>& mouth_idx) {
    double acc = 0.0;
    long n = 0;
    for (int f = 0; f < pred.length(); ++f)
        for (int idx : mouth_idx) {
            double dx = pred.frames[f].points[idx].x() - gt.frames[f].points[idx].x();
            double dy = pred.frames[f].points[idx].y() - gt.frames[f].points[idx].y();
            acc += std::sqrt(dx * dx + dy * dy);
            ++n;
        }
    return n > 0 ? acc / n : 0.0;
}

LandmarkSequence first_difference(const LandmarkSequence& seq) {
    LandmarkSequence out;
    out.fps = seq.fps;
    for (int f = 0; f + 1 < seq.length(); ++f) {
        LandmarkFrame d;
        d.points.reserve(seq.landmark_count());
        for (int i = 0; i < seq.landmark_count(); ++i)
            d.points.push_back(seq.frames[f + 1].points[i] - seq.frames[f].points[i]);
        out.frames.push_back(std::move(d));
    }
    return out;
}

}  // namespace

double lmd(const LandmarkSequence& pred, const LandmarkSequence& gt,
           const std::vector<int>& mouth_idx) {
    check_pair(pred, gt, "lmd");
    return mouth_distance_mean(pred, gt, mouth_idx);
}

double lmd_v(const LandmarkSequence& pred, const LandmarkSequence& gt,
             const std::vector<int>& mouth_idx) {
    check_pair(pred, gt, "lmd_v");
    if (pred.length() < 2) throw std::invalid_argument("lmd_v: need at least 2 frames");
    return mouth_distance_mean(first_difference(pred), first_difference(gt), mouth_idx);
}

// ---------------- convex hull machinery ----------------

namespace {

using P2 = std::array<double, 2>;

double cross(const P2& o, const P2& a, const P2& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Andrew monotone chain; returns CCW hull, collinear inputs collapse to a chain
std::vector<P2> convex_hull(std::vector<P2> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    int n = static_cast<int>(pts.size());
    if (n <= 2) return pts;
    std::vector<P2> hull(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    int lower = k + 1;
    for (int i = n - 2; i >= 0; --i) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool in_hull(const P2& p, const std::vector<P2>& hull) {
    int n = static_cast<int>(hull.size());
    for (int i = 0; i < n; ++i) {
        const P2& a = hull[i];
        const P2& b = hull[(i + 1) % n];
        if (cross(a, b, p) < -1e-9) return false;
    }
    return true;
}

double dist_to_segment(const P2& p, const P2& a, const P2& b) {
    double vx = b[0] - a[0], vy = b[1] - a[1];
    double wx = p[0] - a[0], wy = p[1] - a[1];
    double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
    double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

// membership test that degrades to a 1-px-dilated polyline for collinear hulls
struct HullRegion {
    std::vector<P2> hull;  // >= 3 points: area test
    std::vector<P2> chain; // < 3 points: dilated polyline
    bool empty = true;

    explicit HullRegion(const std::vector<P2>& pts) {
        if (pts.empty()) return;
        empty = false;
        auto h = convex_hull(pts);
        if (h.size() >= 3)
            hull = std::move(h);
        else
            chain = std::move(h);
    }

    bool contains(const P2& p) const {
        if (empty) return false;
        if (!hull.empty()) return in_hull(p, hull);
        if (chain.size() == 1)
            return dist_to_segment(p, chain[0], chain[0]) <= 1.0;
        return dist_to_segment(p, chain[0], chain[1]) <= 1.0;
    }
};

constexpr int kIoUSupersample = 8;

double hull_iou_frame(const std::vector<P2>& a_pts, const std::vector<P2>& b_pts) {
    if (a_pts.empty() && b_pts.empty()) return 1.0;
    HullRegion ra(a_pts), rb(b_pts);
    double x0 = 1e30, x1 = -1e30, y0 = 1e30, y1 = -1e30;
    for (const auto& p : a_pts) {
        x0 = std::min(x0, p[0]); x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]); y1 = std::max(y1, p[1]);
    }
    for (const auto& p : b_pts) {
        x0 = std::min(x0, p[0]); x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]); y1 = std::max(y1, p[1]);
    }
    x0 -= 2.0; y0 -= 2.0; x1 += 2.0; y1 += 2.0;
    long inter = 0, uni = 0;
    double step = 1.0 / kIoUSupersample;
    int nx = static_cast<int>(std::ceil((x1 - x0) / step));
    int ny = static_cast<int>(std::ceil((y1 - y0) / step));
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            P2 p{x0 + (ix + 0.5) * step, y0 + (iy + 0.5) * step};
            bool ina = ra.contains(p);
            bool inb = rb.contains(p);
            if (ina && inb) ++inter;
            if (ina || inb) ++uni;
        }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

std::vector<P2> mouth_points_2d(const LandmarkFrame& f, const std::vector<int>& idx) {
    std::vector<P2> pts;
    pts.reserve(idx.size());
    for (int i : idx) pts.push_back({f.points[i].x(), f.points[i].y()});
    return pts;
}

}  // namespace

double mouth_iou(const LandmarkSequence& pred, const LandmarkSequence& gt,
                 const std::vector<int>& mouth_idx) {
    check_pair(pred, gt, "mouth_iou");
    double acc = 0.0;
    for (int f = 0; f < pred.length(); ++f)
        acc += hull_iou_frame(mouth_points_2d(pred.frames[f], mouth_idx),
                              mouth_points_2d(gt.frames[f], mouth_idx));
    return pred.length() > 0 ? acc / pred.length() : 0.0;
}

double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("mask_iou: size mismatch");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        bool ia = a[i] != 0, ib = b[i] != 0;
        if (ia && ib) ++inter;
        if (ia || ib) ++uni;
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

std::vector<uint8_t> hull_mask(const std::vector<std::array<double, 2>>& pts,
                               int h, int w) {
    HullRegion region(pts);
    std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (region.contains({x + 0.5, y + 0.5}))
                mask[static_cast<size_t>(y) * w + x] = 1;
    return mask;
}

double error_norm(const LandmarkSequence& pred, const LandmarkSequence& gt) {
    check_pair(pred, gt, "error_norm");
    double acc = 0.0;
    long n = 0;
    for (int f = 0; f < pred.length(); ++f)
        for (int i = 0; i < pred.landmark_count(); ++i) {
            acc += (pred.frames[f].points[i] - gt.frames[f].points[i]).norm();
            ++n;
        }
    return n > 0 ? acc / n : 0.0;
}

double jitter(const LandmarkSequence& seq) {
    if (seq.length() < 3) throw std::invalid_argument("jitter: need at least 3 frames");
    double acc = 0.0;
    long n = 0;
    for (int f = 1; f + 1 < seq.length(); ++f)
        for (int i = 0; i < seq.landmark_count(); ++i) {
            Vec3 second_diff = seq.frames[f + 1].points[i] - 2.0 * seq.frames[f].points[i] +
                               seq.frames[f - 1].points[i];
            acc += second_diff.norm();
            ++n;
        }
    return acc / n;
}

double frame_consistency(const std::vector<FaceImage>& frames) {
    if (frames.size() < 2)
        throw std::invalid_argument("frame_consistency: need at least 2 frames");
    double acc = 0.0;
    for (size_t f = 0; f + 1 < frames.size(); ++f) {
        if (!frames[f].same_shape(frames[f + 1]))
            throw std::invalid_argument("frame_consistency: frame shape mismatch");
        double diff = 0.0;
        for (size_t i = 0; i < frames[f].pix.size(); ++i)
            diff += std::abs(frames[f].pix[i] - frames[f + 1].pix[i]);
        acc += 1.0 - diff / static_cast<double>(frames[f].pix.size());
    }
    return acc / static_cast<double>(frames.size() - 1);
}

}  // namespace dh
