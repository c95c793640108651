#pragma once

// Procedural "talking head" clips with analytically known ground truth. A
// scalar articulation signal drives the mouth opening; audio features are a
// fixed linear encoding of that signal, so the audio-to-lip mapping is
// recoverable by construction. Everything (landmarks, poses, frames, audio)
// is a pure function of the config.

#include "dh/geometry.hpp"
#include "dh/image.hpp"

#include <string>
#include <vector>

namespace dh {

struct AudioFeatureSequence {
    std::vector<std::vector<double>> features;  // T_seq rows of D_a
    double fps = 25.0;

    int length() const { return static_cast<int>(features.size()); }
    int dim() const { return features.empty() ? 0 : static_cast<int>(features[0].size()); }
};

struct ClipDataset {
    std::vector<FaceImage> images;
    LandmarkSequence landmarks;  // image space (pixels)
    std::vector<RigidPose> poses;
    AudioFeatureSequence audio;
    std::vector<int> mouth_idx;
    std::vector<double> articulation;  // ground-truth mouth opening in [0,1]
    int image_size = 0;
    uint64_t seed = 0;

    int length() const { return landmarks.length(); }
};

struct GeneratorConfig {
    int L = 68;
    int D_a = 16;
    int T_seq = 120;
    int H = 64;
    double fps = 25.0;
    uint64_t seed = 1;
    // shared across clips so one audio "codec" covers the whole dataset
    uint64_t audio_map_seed = 0xA0D10;
    double articulation_scale = 1.0;
    double min_articulation = 0.05;
    double pose_wobble = 0.06;     // radians
    double trans_wobble = 1.5;     // pixels
    double scale_wobble = 0.02;    // relative
    double audio_noise = 0.03;
    double mouth_amp = 0.26;       // canonical units
};

ClipDataset generate_clip(const GeneratorConfig& cfg);

// Index layout of the face template for a given L (requires L >= 36).
struct TemplateLayout {
    int n_oval = 0;
    int eyes_begin = 0;   // 8 points
    int brows_begin = 0;  // 6 points
    int nose_begin = 0;   // 4 points
    int mouth_begin = 0;  // 12 points, loop order
};
TemplateLayout template_layout(int L);

// Mouth polygon (loop order, image space) of a landmark frame.
std::vector<std::array<double, 2>> mouth_polygon(const LandmarkFrame& frame,
                                                 const std::vector<int>& mouth_idx);

// Palette-based classifier for "mouth" pixels of rendered or generated
// frames; part of the generator's ground-truth contract.
bool is_mouth_pixel(double r, double g, double b);
// Binary mouth mask of a frame under the classifier.
std::vector<uint8_t> mouth_pixel_mask(const FaceImage& img);
// Exact mouth mask implied by the stored landmarks (polygon fill rule).
std::vector<uint8_t> mouth_mask_from_landmarks(const LandmarkFrame& frame,
                                               const std::vector<int>& mouth_idx,
                                               int h, int w);

void save_clip(const ClipDataset& clip, const std::string& dir);
ClipDataset load_clip(const std::string& dir);

}  // namespace dh
