#pragma once

// Landmark containers, rigid/similarity pose transforms, canonicalization and
// the per-video mean/deviation normalization the first diffusion hierarchy
// trains against.

#include <Eigen/Core>

#include <vector>

namespace dh {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct LandmarkFrame {
    std::vector<Vec3> points;

    int count() const { return static_cast<int>(points.size()); }
    // flat [x0,y0,z0,x1,...] view used as the diffusion state vector
    std::vector<double> flatten() const;
    static LandmarkFrame unflatten(const std::vector<double>& v);
};

struct LandmarkSequence {
    std::vector<LandmarkFrame> frames;
    double fps = 25.0;

    int length() const { return static_cast<int>(frames.size()); }
    int landmark_count() const { return frames.empty() ? 0 : frames[0].count(); }
};

// Similarity transform p -> scale * R * p + t. The rotation must be special
// orthogonal within 1e-6.
struct RigidPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    bool valid(double tol = 1e-6) const;
};

struct NormalizationStats {
    // per (landmark, axis)
    std::vector<Vec3> mean;
    std::vector<Vec3> stddev;
    double eps = 1e-8;
};

LandmarkFrame apply_pose(const LandmarkFrame& frame, const RigidPose& pose);
// Inverse of apply_pose. When remove_scale is false only rotation+translation
// are inverted, leaving the scale in place.
LandmarkFrame canonicalize(const LandmarkFrame& frame, const RigidPose& pose,
                           bool remove_scale = true);

NormalizationStats compute_stats(const LandmarkSequence& seq);
LandmarkFrame normalize(const LandmarkFrame& frame, const NormalizationStats& stats);
LandmarkFrame denormalize(const LandmarkFrame& frame, const NormalizationStats& stats);

LandmarkSequence normalize_sequence(const LandmarkSequence& seq,
                                    const NormalizationStats& stats);
LandmarkSequence denormalize_sequence(const LandmarkSequence& seq,
                                      const NormalizationStats& stats);

}  // namespace dh
