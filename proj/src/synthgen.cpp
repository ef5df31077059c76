#include "cmpose/synthgen.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cmpose {

const char* tag_name(CorruptionTag tag) {
    switch (tag) {
        case CorruptionTag::none: return "clean";
        case CorruptionTag::occlude: return "occlude";
        case CorruptionTag::blur: return "blur";
    }
    return "?";
}

namespace {

constexpr int kTemplateJoints = 15;

// canonical template, y-up, pelvis at origin; order keeps the torso chain
// first so a prefix of joints is still connected
enum Joint {
    kPelvis = 0,
    kNeck,
    kHead,
    kLShoulder,
    kRShoulder,
    kLElbow,
    kRElbow,
    kLWrist,
    kRWrist,
    kLHip,
    kRHip,
    kLKnee,
    kRKnee,
    kLAnkle,
    kRAnkle,
};

constexpr double kUpperArm = 0.17, kForeArm = 0.16, kThigh = 0.24, kShin = 0.24;

const std::vector<std::pair<int, int>>& all_bones() {
    static const std::vector<std::pair<int, int>> bones = {
        {kPelvis, kNeck},    {kNeck, kHead},      {kNeck, kLShoulder}, {kNeck, kRShoulder},
        {kLShoulder, kLElbow}, {kLElbow, kLWrist}, {kRShoulder, kRElbow}, {kRElbow, kRWrist},
        {kPelvis, kLHip},    {kPelvis, kRHip},    {kLHip, kLKnee},     {kLKnee, kLAnkle},
        {kRHip, kRKnee},     {kRKnee, kRAnkle}};
    return bones;
}

struct PoseAngles {
    // limb angles measured from straight-down, radians
    double l_arm, r_arm, l_elbow, r_elbow;
    double l_leg, r_leg, l_knee, r_knee;
};

// canonical joint positions for one frame
std::array<Point, kTemplateJoints> pose_joints(const PoseAngles& a) {
    std::array<Point, kTemplateJoints> j{};
    j[kPelvis] = {0.0, 0.0};
    j[kNeck] = {0.0, 0.45};
    j[kHead] = {0.0, 0.62};
    j[kLShoulder] = {-0.13, 0.42};
    j[kRShoulder] = {0.13, 0.42};
    auto swing = [](Point base, double angle, double len) {
        // angle 0 hangs straight down; positive swings toward +x
        return Point{base.x + len * std::sin(angle), base.y - len * std::cos(angle)};
    };
    j[kLElbow] = swing(j[kLShoulder], a.l_arm, kUpperArm);
    j[kLWrist] = swing(j[kLElbow], a.l_arm + a.l_elbow, kForeArm);
    j[kRElbow] = swing(j[kRShoulder], a.r_arm, kUpperArm);
    j[kRWrist] = swing(j[kRElbow], a.r_arm + a.r_elbow, kForeArm);
    j[kLHip] = {-0.11, 0.0};
    j[kRHip] = {0.11, 0.0};
    j[kLKnee] = swing(j[kLHip], a.l_leg, kThigh);
    j[kLAnkle] = swing(j[kLKnee], a.l_leg + a.l_knee, kShin);
    j[kRKnee] = swing(j[kRHip], a.r_leg, kThigh);
    j[kRAnkle] = swing(j[kRKnee], a.r_leg + a.r_knee, kShin);
    return j;
}

double deg(double d) { return d * M_PI / 180.0; }

}  // namespace

std::vector<std::pair<int, int>> skeleton_bones(int k) {
    std::vector<std::pair<int, int>> out;
    for (auto [a, b] : all_bones())
        if (a < k && b < k) out.emplace_back(a, b);
    return out;
}

SkeletonSequence sample_sequence(int height, int width, int k, Rng& rng) {
    if (k < 1 || k > kTemplateJoints)
        throw ConfigError("sample_sequence: K must be in [1," +
                          std::to_string(kTemplateJoints) + "]");

    PoseAngles base{rng.uniform(-deg(55), deg(55)), rng.uniform(-deg(55), deg(55)),
                    rng.uniform(-deg(65), deg(5)),  rng.uniform(-deg(5), deg(65)),
                    rng.uniform(-deg(18), deg(18)), rng.uniform(-deg(18), deg(18)),
                    rng.uniform(-deg(40), deg(4)),  rng.uniform(-deg(4), deg(40))};
    PoseAngles vel{rng.uniform(-deg(9), deg(9)), rng.uniform(-deg(9), deg(9)),
                   rng.uniform(-deg(9), deg(9)), rng.uniform(-deg(9), deg(9)),
                   rng.uniform(-deg(7), deg(7)), rng.uniform(-deg(7), deg(7)),
                   rng.uniform(-deg(7), deg(7)), rng.uniform(-deg(7), deg(7))};

    const double scale = rng.uniform(0.52, 0.70) * height / 1.15;
    const double vx = rng.uniform(-2.0, 2.0), vy = rng.uniform(-1.2, 1.2);

    // joints in image-oriented pixels (y down), before global translation
    std::array<std::vector<Point>, 3> raw;
    double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
    for (int f = 0; f < 3; ++f) {
        const double dt = f - 1;
        PoseAngles a{base.l_arm + vel.l_arm * dt,   base.r_arm + vel.r_arm * dt,
                     base.l_elbow + vel.l_elbow * dt, base.r_elbow + vel.r_elbow * dt,
                     base.l_leg + vel.l_leg * dt,   base.r_leg + vel.r_leg * dt,
                     base.l_knee + vel.l_knee * dt, base.r_knee + vel.r_knee * dt};
        auto joints = pose_joints(a);
        raw[f].resize(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            const double px = joints[static_cast<size_t>(i)].x * scale + vx * dt;
            const double py = -joints[static_cast<size_t>(i)].y * scale + vy * dt;
            raw[f][static_cast<size_t>(i)] = {px, py};
            min_x = std::min(min_x, px);
            max_x = std::max(max_x, px);
            min_y = std::min(min_y, py);
            max_y = std::max(max_y, py);
        }
    }

    // translate so every joint of every frame stays inside a small margin
    const double margin = 2.0;
    auto pick_offset = [&rng, margin](double lo_ext, double hi_ext, double limit) {
        const double lo = margin - lo_ext;
        const double hi = (limit - 1.0 - margin) - hi_ext;
        return hi > lo ? rng.uniform(lo, hi) : 0.5 * (lo + hi);
    };
    const double ox = pick_offset(min_x, max_x, width);
    const double oy = pick_offset(min_y, max_y, height);

    SkeletonSequence seq;
    for (int f = 0; f < 3; ++f) {
        seq.frames[f].resize(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            double px = raw[f][static_cast<size_t>(i)].x + ox + rng.uniform(-0.02, 0.02);
            double py = raw[f][static_cast<size_t>(i)].y + oy + rng.uniform(-0.02, 0.02);
            px = std::clamp(px, 0.0, width - 1.0);
            py = std::clamp(py, 0.0, height - 1.0);
            seq.frames[f][static_cast<size_t>(i)] = {px, py};
        }
    }
    double kx0 = 1e9, kx1 = -1e9, ky0 = 1e9, ky1 = -1e9;
    for (const Point& p : seq.frames[1]) {
        kx0 = std::min(kx0, p.x);
        kx1 = std::max(kx1, p.x);
        ky0 = std::min(ky0, p.y);
        ky1 = std::max(ky1, p.y);
    }
    seq.bbox_diag = std::hypot(kx1 - kx0, ky1 - ky0);
    return seq;
}

namespace {

void draw_segment(std::vector<double>& ink, int height, int width, Point a, Point b, double amp,
                  double radius) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - 3 * radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + 3 * radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - 3 * radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + 3 * radius)));
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double t = len2 > 0.0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double ex = a.x + t * dx - x, ey = a.y + t * dy - y;
            const double d2 = ex * ex + ey * ey;
            const double v = amp * std::exp(-d2 / (2.0 * radius * radius));
            double& cell = ink[static_cast<size_t>(y) * width + x];
            cell = std::max(cell, v);
        }
}

void draw_blob(std::vector<double>& ink, int height, int width, Point c, double amp,
               double sigma) {
    const int x0 = std::max(0, static_cast<int>(std::floor(c.x - 3 * sigma)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.x + 3 * sigma)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.y - 3 * sigma)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.y + 3 * sigma)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
            const double v = amp * std::exp(-d2 / (2.0 * sigma * sigma));
            double& cell = ink[static_cast<size_t>(y) * width + x];
            cell = std::max(cell, v);
        }
}

}  // namespace

VideoClip render(const SkeletonSequence& seq, int height, int width, int k, Rng& rng) {
    VideoClip clip;
    clip.height = height;
    clip.width = width;
    const auto bones = skeleton_bones(k);
    for (int f = 0; f < 3; ++f) {
        std::vector<double>& img = clip.frames[f];
        img.resize(static_cast<size_t>(height) * width);
        for (double& v : img) v = std::clamp(0.1 + 0.05 * rng.normal(), 0.0, 1.0);

        const auto& joints = seq.frames[f];
        if (joints.empty()) continue;
        std::vector<double> ink(img.size(), 0.0);
        for (auto [a, b] : bones)
            draw_segment(ink, height, width, joints[static_cast<size_t>(a)],
                         joints[static_cast<size_t>(b)], 0.65, 0.7);
        for (int i = 0; i < static_cast<int>(joints.size()); ++i)
            draw_blob(ink, height, width, joints[static_cast<size_t>(i)], 0.9,
                      i == kHead ? 1.8 : 1.0);
        for (size_t p = 0; p < img.size(); ++p) img[p] = std::clamp(img[p] + ink[p], 0.0, 1.0);
    }
    return clip;
}

VideoClip corrupt_video(const VideoClip& clip, CorruptionTag tag, Rng& rng) {
    if (tag == CorruptionTag::none) return clip;
    VideoClip out = clip;
    const int h = clip.height, w = clip.width;
    if (tag == CorruptionTag::occlude) {
        // rectangle covering 10-25% of the keyframe, background fill
        const double frac = rng.uniform(0.10, 0.25);
        const double aspect = rng.uniform(0.5, 2.0);
        int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(frac * w * h * aspect))), 1, w);
        int rh = std::clamp(static_cast<int>(std::lround(frac * w * h / rw)), 1, h);
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - rw + 1)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - rh + 1)));
        std::vector<double>& key = out.frames[1];
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) key[static_cast<size_t>(y) * w + x] = 0.1;
        return out;
    }
    if (tag == CorruptionTag::blur) {
        const double sigma = 2.0;
        const int rad = 6;  // 3 sigma
        std::vector<double> kernel(2 * rad + 1);
        double ksum = 0.0;
        for (int i = -rad; i <= rad; ++i) {
            kernel[static_cast<size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
            ksum += kernel[static_cast<size_t>(i + rad)];
        }
        for (double& v : kernel) v /= ksum;
        auto reflect = [](int i, int n) {
            while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
            return i;
        };
        for (auto& img : out.frames) {
            std::vector<double> tmp(img.size());
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double s = 0.0;
                    for (int i = -rad; i <= rad; ++i)
                        s += kernel[static_cast<size_t>(i + rad)] *
                             img[static_cast<size_t>(y) * w + reflect(x + i, w)];
                    tmp[static_cast<size_t>(y) * w + x] = s;
                }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double s = 0.0;
                    for (int i = -rad; i <= rad; ++i)
                        s += kernel[static_cast<size_t>(i + rad)] *
                             tmp[static_cast<size_t>(reflect(y + i, h)) * w + x];
                    img[static_cast<size_t>(y) * w + x] = s;
                }
        }
        return out;
    }
    throw ContractError("corrupt_video: unknown tag");
}

HeatmapSet make_gt_heatmaps(const std::vector<Point>& keypoints, int image_h, int image_w,
                            int map_h, int map_w, double sigma) {
    HeatmapSet hm;
    hm.num_keypoints = static_cast<int>(keypoints.size());
    hm.height = map_h;
    hm.width = map_w;
    hm.is_ground_truth = true;
    hm.maps.assign(static_cast<size_t>(hm.num_keypoints) * map_h * map_w, 0.0);
    const double sx = static_cast<double>(map_w) / image_w;
    const double sy = static_cast<double>(map_h) / image_h;
    for (int i = 0; i < hm.num_keypoints; ++i) {
        const int cx = std::clamp(static_cast<int>(std::lround(keypoints[static_cast<size_t>(i)].x * sx)),
                                  0, map_w - 1);
        const int cy = std::clamp(static_cast<int>(std::lround(keypoints[static_cast<size_t>(i)].y * sy)),
                                  0, map_h - 1);
        for (int y = 0; y < map_h; ++y)
            for (int x = 0; x < map_w; ++x) {
                const double d2 = static_cast<double>((x - cx)) * (x - cx) +
                                  static_cast<double>((y - cy)) * (y - cy);
                hm.at(i, y, x) = std::exp(-d2 / (2.0 * sigma * sigma));
            }
    }
    return hm;
}

CorruptionMix parse_corruption_mix(const std::string& text) {
    CorruptionMix mix{0.0, 0.0, 0.0};
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("corruption mix entry missing ':': " + item);
        const std::string name = item.substr(0, colon);
        double v;
        try {
            v = std::stod(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad corruption mix weight: " + item);
        }
        if (v < 0.0) throw ConfigError("negative corruption mix weight: " + item);
        if (name == "clean")
            mix.clean = v;
        else if (name == "occlude")
            mix.occlude = v;
        else if (name == "blur")
            mix.blur = v;
        else
            throw ConfigError("unknown corruption tag: " + name);
    }
    const double total = mix.clean + mix.occlude + mix.blur;
    if (total <= 0.0) throw ConfigError("corruption mix sums to zero");
    mix.clean /= total;
    mix.occlude /= total;
    mix.blur /= total;
    return mix;
}

Sample generate_sample(const DatasetParams& p, int index) {
    Rng pose_rng(p.seed, RngStream::sample_pose, static_cast<std::uint64_t>(index));
    Rng render_rng(p.seed, RngStream::sample_render, static_cast<std::uint64_t>(index));
    Rng tag_rng(p.seed, RngStream::sample_tag, static_cast<std::uint64_t>(index));
    Rng corrupt_rng(p.seed, RngStream::sample_corrupt, static_cast<std::uint64_t>(index));

    Sample s;
    SkeletonSequence seq = sample_sequence(p.height, p.width, p.num_keypoints, pose_rng);
    s.clip = render(seq, p.height, p.width, p.num_keypoints, render_rng);

    const double u = tag_rng.uniform();
    if (u < p.mix.clean)
        s.tag = CorruptionTag::none;
    else if (u < p.mix.clean + p.mix.occlude)
        s.tag = CorruptionTag::occlude;
    else
        s.tag = CorruptionTag::blur;
    s.clip = corrupt_video(s.clip, s.tag, corrupt_rng);

    s.keypoints = seq.frames[1];
    s.bbox_diag = seq.bbox_diag;
    return s;
}

Dataset generate_dataset(const DatasetParams& p) {
    Dataset ds;
    ds.seed = p.seed;
    ds.height = p.height;
    ds.width = p.width;
    ds.num_keypoints = p.num_keypoints;
    ds.samples.resize(static_cast<size_t>(p.count));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < p.count; ++i) ds.samples[static_cast<size_t>(i)] = generate_sample(p, i);
    return ds;
}

namespace {

constexpr char kMagic[6] = {'C', 'M', 'S', 'Y', 'N', '1'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write dataset " + path);
    f.write(kMagic, sizeof(kMagic));
    write_pod(f, kVersion);
    write_pod(f, static_cast<std::uint32_t>(ds.samples.size()));
    write_pod(f, static_cast<std::uint16_t>(ds.height));
    write_pod(f, static_cast<std::uint16_t>(ds.width));
    write_pod(f, static_cast<std::uint16_t>(ds.num_keypoints));
    write_pod(f, static_cast<std::uint64_t>(ds.seed));
    for (const Sample& s : ds.samples) {
        for (const auto& frame : s.clip.frames)
            for (double v : frame) write_pod(f, static_cast<float>(v));
        for (const Point& kp : s.keypoints) {
            write_pod(f, static_cast<float>(kp.x));
            write_pod(f, static_cast<float>(kp.y));
        }
        write_pod(f, static_cast<std::uint8_t>(s.tag));
    }
    if (!f) throw IoError("short write to " + path);

    std::ofstream jf(path + ".jsonl");
    if (!jf) throw IoError("cannot write index " + path + ".jsonl");
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        nlohmann::json row;
        row["index"] = i;
        row["tag"] = tag_name(s.tag);
        row["bbox_diag"] = s.bbox_diag;
        auto& kps = row["keypoints"] = nlohmann::json::array();
        for (const Point& kp : s.keypoints) kps.push_back({kp.x, kp.y});
        jf << row.dump() << "\n";
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset " + path);
    char magic[6];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("bad dataset magic in " + path);
    if (read_pod<std::uint16_t>(f) != kVersion) throw IoError("unsupported dataset version");

    Dataset ds;
    const auto count = read_pod<std::uint32_t>(f);
    ds.height = read_pod<std::uint16_t>(f);
    ds.width = read_pod<std::uint16_t>(f);
    ds.num_keypoints = read_pod<std::uint16_t>(f);
    ds.seed = read_pod<std::uint64_t>(f);
    ds.samples.resize(count);
    const size_t frame_px = static_cast<size_t>(ds.height) * ds.width;
    for (Sample& s : ds.samples) {
        s.clip.height = ds.height;
        s.clip.width = ds.width;
        for (auto& frame : s.clip.frames) {
            frame.resize(frame_px);
            for (double& v : frame) v = read_pod<float>(f);
        }
        s.keypoints.resize(static_cast<size_t>(ds.num_keypoints));
        double x0 = 1e18, x1 = -1e18, y0 = 1e18, y1 = -1e18;
        for (Point& kp : s.keypoints) {
            kp.x = read_pod<float>(f);
            kp.y = read_pod<float>(f);
            x0 = std::min(x0, kp.x);
            x1 = std::max(x1, kp.x);
            y0 = std::min(y0, kp.y);
            y1 = std::max(y1, kp.y);
        }
        s.bbox_diag = std::hypot(x1 - x0, y1 - y0);
        s.tag = static_cast<CorruptionTag>(read_pod<std::uint8_t>(f));
    }
    if (!f) throw IoError("truncated dataset " + path);
    return ds;
}

}  // namespace cmpose
