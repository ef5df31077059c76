#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cmpose/embedder.h"
#include "cmpose/head.h"
#include "cmpose/rng.h"

namespace cmpose {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class CorruptionTag : std::uint8_t { none = 0, occlude = 1, blur = 2 };

const char* tag_name(CorruptionTag tag);

// Articulated stick figure over 3 frames. Joints follow a fixed 15-joint
// template (core joints first, so a truncated prefix is still a connected
// tree); bone lengths are set by the kinematic chain and only per-joint
// jitter can perturb them, bounded well under 5%.
struct SkeletonSequence {
    std::array<std::vector<Point>, 3> frames;  // K joints each
    double bbox_diag = 0.0;                    // keyframe keypoint bbox diagonal
};

// bones among the first `k` template joints
std::vector<std::pair<int, int>> skeleton_bones(int k);

SkeletonSequence sample_sequence(int height, int width, int k, Rng& rng);

// stick figure over a noisy background; deterministic given seq and rng state
VideoClip render(const SkeletonSequence& seq, int height, int width, int k, Rng& rng);

// occlude: one opaque rectangle (10-25% of keyframe area) at background
// intensity, keyframe only; blur: separable Gaussian (sigma 2 px, reflect
// boundaries) on all frames
VideoClip corrupt_video(const VideoClip& clip, CorruptionTag tag, Rng& rng);

// per keypoint, a 2-d Gaussian with peak exactly 1 at the scaled pixel
HeatmapSet make_gt_heatmaps(const std::vector<Point>& keypoints, int image_h, int image_w,
                            int map_h, int map_w, double sigma);

struct Sample {
    VideoClip clip;
    std::vector<Point> keypoints;  // keyframe ground truth, image pixels
    CorruptionTag tag = CorruptionTag::none;
    double bbox_diag = 0.0;
};

struct CorruptionMix {
    double clean = 1.0;
    double occlude = 0.0;
    double blur = 0.0;
};
CorruptionMix parse_corruption_mix(const std::string& text);

struct DatasetParams {
    std::uint64_t seed = 0;
    int count = 0;
    int height = 64;
    int width = 48;
    int num_keypoints = 15;
    CorruptionMix mix;
};

struct Dataset {
    std::uint64_t seed = 0;
    int height = 0;
    int width = 0;
    int num_keypoints = 0;
    std::vector<Sample> samples;
};

Sample generate_sample(const DatasetParams& p, int index);
Dataset generate_dataset(const DatasetParams& p);

// binary file (magic "CMSYN1") plus a JSON-lines ground-truth index at
// path + ".jsonl"
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cmpose
