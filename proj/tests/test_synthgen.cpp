#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cmpose/head.h"
#include "cmpose/synthgen.h"
#include "doctest.h"

using namespace cmpose;

TEST_CASE("sample_sequence: determinism, bounds, bone-length stability") {
    {
        Rng a(11, RngStream::sample_pose, 3), b(11, RngStream::sample_pose, 3);
        SkeletonSequence s1 = sample_sequence(64, 48, 15, a);
        SkeletonSequence s2 = sample_sequence(64, 48, 15, b);
        for (int f = 0; f < 3; ++f)
            for (int j = 0; j < 15; ++j) {
                CHECK(s1.frames[f][static_cast<size_t>(j)].x == s2.frames[f][static_cast<size_t>(j)].x);
                CHECK(s1.frames[f][static_cast<size_t>(j)].y == s2.frames[f][static_cast<size_t>(j)].y);
            }
    }

    const auto bones = skeleton_bones(15);
    CHECK(bones.size() == 14);

    Rng rng(5, RngStream::test);
    for (int it = 0; it < 1000; ++it) {
        Rng pose(42, RngStream::sample_pose, static_cast<std::uint64_t>(it));
        SkeletonSequence seq = sample_sequence(64, 48, 15, pose);
        for (int f = 0; f < 3; ++f)
            for (const Point& p : seq.frames[f]) {
                CHECK(p.x >= 0.0);
                CHECK(p.x <= 47.0);
                CHECK(p.y >= 0.0);
                CHECK(p.y <= 63.0);
            }
        // bone lengths vary at most 5% across frames
        for (auto [a, b] : bones) {
            double lo = 1e18, hi = -1e18;
            for (int f = 0; f < 3; ++f) {
                const Point& pa = seq.frames[f][static_cast<size_t>(a)];
                const Point& pb = seq.frames[f][static_cast<size_t>(b)];
                const double len = std::hypot(pa.x - pb.x, pa.y - pb.y);
                lo = std::min(lo, len);
                hi = std::max(hi, len);
            }
            CHECK(hi / lo <= 1.05);
        }
        CHECK(seq.bbox_diag > 0.0);
    }
}

TEST_CASE("render: background statistics and joint salience") {
    // empty skeleton renders pure background ~ N(0.1, 0.05) clamped
    SkeletonSequence empty;
    Rng rng(9, RngStream::sample_render, 0);
    VideoClip bg = render(empty, 64, 48, 0, rng);
    double mean = 0.0;
    for (double v : bg.keyframe()) mean += v;
    mean /= static_cast<double>(bg.keyframe().size());
    CHECK(mean == doctest::Approx(0.1).epsilon(0.05));
    for (double v : bg.keyframe()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // joint centers clear background mean + 5 sigma
    int salient = 0, total = 0;
    for (int it = 0; it < 50; ++it) {
        Rng pose(7, RngStream::sample_pose, static_cast<std::uint64_t>(it));
        Rng rrng(7, RngStream::sample_render, static_cast<std::uint64_t>(it));
        SkeletonSequence seq = sample_sequence(64, 48, 15, pose);
        VideoClip clip = render(seq, 64, 48, 15, rrng);
        for (const Point& p : seq.frames[1]) {
            const int x = static_cast<int>(std::lround(p.x));
            const int y = static_cast<int>(std::lround(p.y));
            ++total;
            if (clip.keyframe()[static_cast<size_t>(y) * 48 + x] > 0.1 + 5 * 0.05) ++salient;
        }
    }
    CHECK(salient == total);

    // determinism given the same sequence and rng state
    Rng r1(3, RngStream::sample_render, 1), r2(3, RngStream::sample_render, 1);
    Rng pose(3, RngStream::sample_pose, 1);
    SkeletonSequence seq = sample_sequence(64, 48, 15, pose);
    CHECK(render(seq, 64, 48, 15, r1).frames[0] == render(seq, 64, 48, 15, r2).frames[0]);
}

TEST_CASE("corrupt_video: occlusion rectangle, blur mass, identity") {
    Rng pose(21, RngStream::sample_pose, 0);
    Rng rrng(21, RngStream::sample_render, 0);
    SkeletonSequence seq = sample_sequence(64, 48, 15, pose);
    VideoClip clip = render(seq, 64, 48, 15, rrng);

    {
        Rng c(21, RngStream::sample_corrupt, 0);
        VideoClip occ = corrupt_video(clip, CorruptionTag::occlude, c);
        // neighbor frames untouched; keyframe has a constant-0.1 rectangle
        CHECK(occ.frames[0] == clip.frames[0]);
        CHECK(occ.frames[2] == clip.frames[2]);
        int filled = 0;
        for (size_t i = 0; i < occ.keyframe().size(); ++i)
            if (occ.keyframe()[i] == 0.1 && clip.keyframe()[i] != 0.1) ++filled;
        const double frac = static_cast<double>(filled) / (64.0 * 48.0);
        CHECK(frac > 0.05);
        CHECK(frac <= 0.26);
    }
    {
        Rng c(22, RngStream::sample_corrupt, 0);
        VideoClip blur = corrupt_video(clip, CorruptionTag::blur, c);
        for (int f = 0; f < 3; ++f) {
            double before = 0.0, after = 0.0;
            for (size_t i = 0; i < clip.frames[f].size(); ++i) {
                before += clip.frames[f][i];
                after += blur.frames[f][i];
            }
            CHECK(std::abs(after - before) / before < 0.01);
        }
    }
    {
        Rng c(23, RngStream::sample_corrupt, 0);
        VideoClip same = corrupt_video(clip, CorruptionTag::none, c);
        for (int f = 0; f < 3; ++f) CHECK(same.frames[f] == clip.frames[f]);
    }
}

TEST_CASE("ground-truth heatmaps: peak location, value, mass") {
    Rng pose(31, RngStream::sample_pose, 0);
    SkeletonSequence seq = sample_sequence(64, 48, 15, pose);
    HeatmapSet gt = make_gt_heatmaps(seq.frames[1], 64, 48, 64, 48, 2.0);
    CHECK(gt.is_ground_truth);

    Tensor maps;
    maps.shape = {gt.num_keypoints, gt.height * gt.width};
    maps.data = gt.maps;
    const auto peaks = argmax_decode(maps, gt.height, gt.width);
    for (int k = 0; k < 15; ++k) {
        const Point& kp = seq.frames[1][static_cast<size_t>(k)];
        CHECK(peaks[static_cast<size_t>(k)].first == static_cast<int>(std::lround(kp.y)));
        CHECK(peaks[static_cast<size_t>(k)].second == static_cast<int>(std::lround(kp.x)));
        CHECK(gt.at(k, peaks[static_cast<size_t>(k)].first, peaks[static_cast<size_t>(k)].second) ==
              1.0);

        // mass ~ 2 pi sigma^2 for interior keypoints
        if (kp.x > 8 && kp.x < 40 && kp.y > 8 && kp.y < 56) {
            double mass = 0.0;
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 48; ++x) mass += gt.at(k, y, x);
            CHECK(mass == doctest::Approx(2.0 * M_PI * 4.0).epsilon(0.05));
        }
    }
}

TEST_CASE("dataset generation is reproducible; corrupted variants share ground truth") {
    DatasetParams p;
    p.seed = 77;
    p.count = 12;
    p.height = 64;
    p.width = 48;
    p.num_keypoints = 15;
    p.mix = parse_corruption_mix("clean:0.5,occlude:0.25,blur:0.25");

    Dataset a = generate_dataset(p);
    Dataset b = generate_dataset(p);
    REQUIRE(a.samples.size() == 12);
    for (int i = 0; i < 12; ++i) {
        CHECK(a.samples[static_cast<size_t>(i)].tag == b.samples[static_cast<size_t>(i)].tag);
        CHECK(a.samples[static_cast<size_t>(i)].clip.frames[1] ==
              b.samples[static_cast<size_t>(i)].clip.frames[1]);
    }

    // forcing different tags for the same index keeps ground truth identical
    DatasetParams clean = p;
    clean.mix = parse_corruption_mix("clean:1.0");
    DatasetParams occluded = p;
    occluded.mix = parse_corruption_mix("occlude:1.0");
    for (int i = 0; i < 6; ++i) {
        Sample sc = generate_sample(clean, i);
        Sample so = generate_sample(occluded, i);
        for (int k = 0; k < 15; ++k) {
            CHECK(sc.keypoints[static_cast<size_t>(k)].x == so.keypoints[static_cast<size_t>(k)].x);
            CHECK(sc.keypoints[static_cast<size_t>(k)].y == so.keypoints[static_cast<size_t>(k)].y);
        }
        CHECK(sc.bbox_diag == so.bbox_diag);
    }

    CHECK_THROWS_AS(parse_corruption_mix("clean:0"), ConfigError);
    CHECK_THROWS_AS(parse_corruption_mix("foo:1"), ConfigError);
}

TEST_CASE("dataset binary round-trip preserves everything at f32 precision") {
    DatasetParams p;
    p.seed = 99;
    p.count = 8;
    p.height = 32;
    p.width = 24;
    p.num_keypoints = 7;
    p.mix = parse_corruption_mix("clean:0.6,occlude:0.2,blur:0.2");
    Dataset ds = generate_dataset(p);

    const std::string path = (std::filesystem::temp_directory_path() / "cmsyn_test.bin").string();
    save_dataset(ds, path);
    Dataset back = load_dataset(path);

    CHECK(back.height == 32);
    CHECK(back.width == 24);
    CHECK(back.num_keypoints == 7);
    CHECK(back.seed == 99);
    REQUIRE(back.samples.size() == 8);
    for (int i = 0; i < 8; ++i) {
        const Sample& s0 = ds.samples[static_cast<size_t>(i)];
        const Sample& s1 = back.samples[static_cast<size_t>(i)];
        CHECK(s0.tag == s1.tag);
        for (int f = 0; f < 3; ++f)
            for (size_t px = 0; px < s0.clip.frames[f].size(); ++px)
                CHECK(s1.clip.frames[f][px] ==
                      static_cast<double>(static_cast<float>(s0.clip.frames[f][px])));
        for (int k = 0; k < 7; ++k)
            CHECK(s1.keypoints[static_cast<size_t>(k)].x ==
                  static_cast<double>(static_cast<float>(s0.keypoints[static_cast<size_t>(k)].x)));
    }
    CHECK(std::filesystem::exists(path + ".jsonl"));

    // regenerating and saving again is byte-identical
    const std::string path2 = path + ".again";
    save_dataset(generate_dataset(p), path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    std::filesystem::remove(path);
    std::filesystem::remove(path + ".jsonl");
    std::filesystem::remove(path2);
    std::filesystem::remove(path2 + ".jsonl");

    CHECK_THROWS_AS(load_dataset("/nonexistent/nope.bin"), IoError);
}
