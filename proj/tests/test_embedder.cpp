#include <cmath>

#include "cmpose/embedder.h"
#include "doctest.h"
#include "testing_util.h"

using namespace cmpose;

namespace {

VideoClip random_clip(int h, int w, Rng& rng) {
    VideoClip clip;
    clip.height = h;
    clip.width = w;
    for (auto& f : clip.frames) {
        f.resize(static_cast<size_t>(h) * w);
        for (double& v : f) v = rng.uniform(0.0, 1.0);
    }
    return clip;
}

}  // namespace

TEST_CASE("patchify shapes: 64x48/P8 gives 48 tokens per frame, 144 total") {
    Config cfg;  // desk defaults
    ParamStore params;
    PatchEmbedder e = PatchEmbedder::create(params, cfg);
    CHECK(e.tokens_per_frame() == 48);

    Rng rng(1, RngStream::test);
    VideoClip clip = random_clip(64, 48, rng);
    Tape t;
    Var tokens = e.forward(t, clip);
    CHECK(t.value(tokens).rows() == 144);
    CHECK(t.value(tokens).cols() == 64);

    // paper-sized frames with P=16 give 192 tokens per frame
    Config big;
    big.image_height = 256;
    big.image_width = 192;
    big.patch_size = 16;
    ParamStore params2;
    PatchEmbedder e2 = PatchEmbedder::create(params2, big);
    CHECK(e2.tokens_per_frame() == 192);

    Config bad;
    bad.image_width = 50;
    ParamStore params3;
    CHECK_THROWS_AS(PatchEmbedder::create(params3, bad), ConfigError);
}

TEST_CASE("zero clip with zero patch weights leaves only the embeddings") {
    Config cfg;
    ParamStore params;
    PatchEmbedder e = PatchEmbedder::create(params, cfg);
    Rng rng(2, RngStream::test);
    for (double& v : e.pos_emb->data) v = rng.uniform(-1.0, 1.0);
    for (double& v : e.time_emb->data) v = rng.uniform(-1.0, 1.0);
    // patch weights/bias stay zero

    VideoClip zero;
    zero.height = 64;
    zero.width = 48;
    for (auto& f : zero.frames) f.assign(64 * 48, 0.0);

    Tape t;
    const Tensor& out = t.value(e.forward(t, zero));
    const int n = e.tokens_per_frame();
    for (int f = 0; f < 3; ++f)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 64; ++j)
                CHECK(out.at(f * n + i, j) == e.pos_emb->at(i, j) + e.time_emb->at(f, j));
}

TEST_CASE("clips differing only in frame f differ only in that token block") {
    Config cfg;
    ParamStore params;
    PatchEmbedder e = PatchEmbedder::create(params, cfg);
    Rng rng(3, RngStream::test);
    for (double& v : e.patch_w->data) v = rng.uniform(-0.2, 0.2);
    for (double& v : e.pos_emb->data) v = rng.uniform(-0.2, 0.2);
    for (double& v : e.time_emb->data) v = rng.uniform(-0.2, 0.2);

    VideoClip a = random_clip(64, 48, rng);
    VideoClip b = a;
    for (double& v : b.frames[2]) v = rng.uniform(0.0, 1.0);

    Tape t;
    const Tensor va = t.value(e.forward(t, a));
    const Tensor vb = t.value(e.forward(t, b));
    const int n = e.tokens_per_frame();
    for (int i = 0; i < 2 * n; ++i)
        for (int j = 0; j < 64; ++j) CHECK(va.at(i, j) == vb.at(i, j));
    double diff = 0.0;
    for (int i = 2 * n; i < 3 * n; ++i)
        for (int j = 0; j < 64; ++j) diff += std::abs(va.at(i, j) - vb.at(i, j));
    CHECK(diff > 0.0);
}

TEST_CASE("with embeddings zeroed, swapping equal-content patches swaps tokens") {
    Config cfg;
    ParamStore params;
    PatchEmbedder e = PatchEmbedder::create(params, cfg);
    Rng rng(4, RngStream::test);
    for (double& v : e.patch_w->data) v = rng.uniform(-0.2, 0.2);
    // pos/time embeddings stay zero

    VideoClip a = random_clip(64, 48, rng);
    // copy patch (0,0) into patch (0,1) of the keyframe to get equal content
    for (int py = 0; py < 8; ++py)
        for (int px = 0; px < 8; ++px)
            a.frames[1][static_cast<size_t>(py) * 48 + 8 + px] =
                a.frames[1][static_cast<size_t>(py) * 48 + px];

    Tape t;
    const Tensor va = t.value(e.forward(t, a));
    const int n = e.tokens_per_frame();
    for (int j = 0; j < 64; ++j) CHECK(va.at(n + 0, j) == va.at(n + 1, j));

    // but with a positional embedding the two tokens differ
    for (double& v : e.pos_emb->data) v = rng.uniform(-0.2, 0.2);
    Tape t2;
    const Tensor vb = t2.value(e.forward(t2, a));
    double diff = 0.0;
    for (int j = 0; j < 64; ++j) diff += std::abs(vb.at(n + 0, j) - vb.at(n + 1, j));
    CHECK(diff > 0.0);
}

TEST_CASE("keypoint token init: shape, determinism, variance") {
    Rng rng(5, RngStream::test);
    Tensor kp = init_keypoint_tokens(15, 64, rng);
    CHECK(kp.shape == Shape{15, 64});
    CHECK(kp.requires_grad);

    Rng r1(42, RngStream::init), r2(42, RngStream::init);
    Tensor a = init_keypoint_tokens(15, 64, r1);
    Tensor b = init_keypoint_tokens(15, 64, r2);
    CHECK(a.data == b.data);  // bit-identical across runs

    // sample variance over ~1e6 draws approaches 0.02^2 = 4e-4
    Rng big(7, RngStream::init);
    Tensor wide = init_keypoint_tokens(1000, 1000, big);
    double mean = 0.0;
    for (double v : wide.data) mean += v;
    mean /= static_cast<double>(wide.numel());
    double var = 0.0;
    for (double v : wide.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(wide.numel() - 1);
    CHECK(var == doctest::Approx(4e-4).epsilon(0.01));

    CHECK_THROWS_AS(init_keypoint_tokens(0, 8, rng), ConfigError);
}
