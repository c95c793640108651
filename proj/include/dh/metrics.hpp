#pragma once

// Evaluation metrics: mouth landmark distance and its velocity variant,
// mouth-area IoU (convex hull of mouth points or pixel masks), positional
// ErrorNorm, second-difference Jitter, and a frame-consistency score used in
// place of the external temporal-consistency metric (it is not that metric;
// see README).

#include "dh/geometry.hpp"
#include "dh/image.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dh {

// mean 2-D (image plane) distance over frames and mouth points
double lmd(const LandmarkSequence& pred, const LandmarkSequence& gt,
           const std::vector<int>& mouth_idx);
// same on first-difference (velocity) sequences
double lmd_v(const LandmarkSequence& pred, const LandmarkSequence& gt,
             const std::vector<int>& mouth_idx);

// per-frame IoU of rasterized convex hulls of the mouth points, averaged
double mouth_iou(const LandmarkSequence& pred, const LandmarkSequence& gt,
                 const std::vector<int>& mouth_idx);
// IoU of two binary masks (both-empty counts as 1)
double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

// mean 3-D distance over frames and all points
double error_norm(const LandmarkSequence& pred, const LandmarkSequence& gt);
// mean norm of the second temporal difference over all points
double jitter(const LandmarkSequence& seq);

// mean over consecutive pairs of (1 - mean absolute pixel difference)
double frame_consistency(const std::vector<FaceImage>& frames);

struct MetricReport {
    std::map<std::string, double> values;
    int clips = 0;
    int frames = 0;
};

// rasterize the convex hull of 2-D points onto a unit-pixel boolean grid
// covering [0,w) x [0,h)
std::vector<uint8_t> hull_mask(const std::vector<std::array<double, 2>>& pts,
                               int h, int w);

}  // namespace dh
