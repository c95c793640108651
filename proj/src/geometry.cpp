#include "dh/geometry.hpp"

#include <Eigen/LU>

#include <cmath>
#include <stdexcept>

namespace dh {

std::vector<double> LandmarkFrame::flatten() const {
    std::vector<double> v;
    v.reserve(points.size() * 3);
    for (const auto& p : points) {
        v.push_back(p.x());
        v.push_back(p.y());
        v.push_back(p.z());
    }
    return v;
}

LandmarkFrame LandmarkFrame::unflatten(const std::vector<double>& v) {
    if (v.size() % 3 != 0)
        throw std::invalid_argument("LandmarkFrame::unflatten: size not divisible by 3");
    LandmarkFrame f;
    f.points.reserve(v.size() / 3);
    for (size_t i = 0; i < v.size(); i += 3)
        f.points.emplace_back(v[i], v[i + 1], v[i + 2]);
    return f;
}

bool RigidPose::valid(double tol) const {
    if (!(scale > 0.0) || !std::isfinite(scale)) return false;
    Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(rotation.determinant() - 1.0) > tol) return false;
    return true;
}

LandmarkFrame apply_pose(const LandmarkFrame& frame, const RigidPose& pose) {
    if (!pose.valid()) throw std::invalid_argument("apply_pose: invalid pose");
    LandmarkFrame out;
    out.points.reserve(frame.points.size());
    for (const auto& p : frame.points)
        out.points.push_back(pose.scale * (pose.rotation * p) + pose.translation);
    return out;
}

LandmarkFrame canonicalize(const LandmarkFrame& frame, const RigidPose& pose,
                           bool remove_scale) {
    if (!pose.valid()) throw std::invalid_argument("canonicalize: invalid pose");
    double inv_s = remove_scale ? 1.0 / pose.scale : 1.0;
    LandmarkFrame out;
    out.points.reserve(frame.points.size());
    for (const auto& p : frame.points)
        out.points.push_back(inv_s * (pose.rotation.transpose() * (p - pose.translation)));
    return out;
}

NormalizationStats compute_stats(const LandmarkSequence& seq) {
    if (seq.frames.empty()) throw std::invalid_argument("compute_stats: empty sequence");
    int n_lm = seq.landmark_count();
    int n_frames = seq.length();
    NormalizationStats stats;
    stats.mean.assign(n_lm, Vec3::Zero());
    stats.stddev.assign(n_lm, Vec3::Zero());
    for (const auto& f : seq.frames) {
        if (f.count() != n_lm)
            throw std::invalid_argument("compute_stats: inconsistent landmark count");
        for (int i = 0; i < n_lm; ++i) stats.mean[i] += f.points[i];
    }
    for (auto& m : stats.mean) m /= static_cast<double>(n_frames);
    for (const auto& f : seq.frames)
        for (int i = 0; i < n_lm; ++i) {
            Vec3 d = f.points[i] - stats.mean[i];
            stats.stddev[i] += d.cwiseProduct(d);
        }
    for (auto& s : stats.stddev)
        s = (s / static_cast<double>(n_frames)).cwiseSqrt();
    return stats;
}

namespace {
void check_stats_shape(const LandmarkFrame& frame, const NormalizationStats& stats) {
    if (frame.points.size() != stats.mean.size() ||
        frame.points.size() != stats.stddev.size())
        throw std::invalid_argument("normalization: stats shape mismatch");
}
}  // namespace

LandmarkFrame normalize(const LandmarkFrame& frame, const NormalizationStats& stats) {
    check_stats_shape(frame, stats);
    LandmarkFrame out;
    out.points.resize(frame.points.size());
    for (size_t i = 0; i < frame.points.size(); ++i)
        out.points[i] = (frame.points[i] - stats.mean[i]).array() /
                        (stats.stddev[i].array() + stats.eps);
    return out;
}

LandmarkFrame denormalize(const LandmarkFrame& frame, const NormalizationStats& stats) {
    check_stats_shape(frame, stats);
    LandmarkFrame out;
    out.points.resize(frame.points.size());
    for (size_t i = 0; i < frame.points.size(); ++i)
        out.points[i] = frame.points[i].array() * (stats.stddev[i].array() + stats.eps) +
                        stats.mean[i].array();
    return out;
}

LandmarkSequence normalize_sequence(const LandmarkSequence& seq,
                                    const NormalizationStats& stats) {
    LandmarkSequence out;
    out.fps = seq.fps;
    out.frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) out.frames.push_back(normalize(f, stats));
    return out;
}

LandmarkSequence denormalize_sequence(const LandmarkSequence& seq,
                                      const NormalizationStats& stats) {
    LandmarkSequence out;
    out.fps = seq.fps;
    out.frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) out.frames.push_back(denormalize(f, stats));
    return out;
}

}  // namespace dh
