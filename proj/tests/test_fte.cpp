#include <cmath>
#include <set>

#include "cmpose/fte.h"
#include "doctest.h"
#include "oracles.h"
#include "testing_util.h"

using namespace cmpose;
using cmpose::testing::random_tensor;

TEST_CASE("dpc-knn: the worked six-point example") {
    // two tight triplets; k=2, L=2
    Tensor pts =
        Tensor::from({6, 2}, {0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 1.0, 1.0, 1.0, 1.1, 0.9, 1.0});
    ClusterResult res = dpc_knn(pts, 2, 2);

    CHECK(std::abs(res.rho[0] - std::exp(-0.01)) < 1e-12);   // A
    CHECK(std::abs(res.rho[3] - std::exp(-0.01)) < 1e-12);   // D
    CHECK(std::abs(res.rho[1] - std::exp(-0.015)) < 1e-12);  // B
    CHECK(std::abs(res.rho[2] - std::exp(-0.015)) < 1e-12);
    CHECK(std::abs(res.rho[4] - std::exp(-0.015)) < 1e-12);
    CHECK(std::abs(res.rho[5] - std::exp(-0.015)) < 1e-12);

    // tied maximal densities take the max-distance branch
    CHECK(std::abs(res.delta[0] - std::sqrt(2.21)) < 1e-12);  // A -> E
    CHECK(std::abs(res.delta[3] - std::sqrt(2.0)) < 1e-12);   // D -> A

    REQUIRE(res.centers.size() == 2);
    CHECK(res.centers[0] == 0);  // A
    CHECK(res.centers[1] == 3);  // D
    CHECK(res.assignment == std::vector<int>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("dpc-knn: degenerate single token") {
    Tensor one = Tensor::from({1, 4}, {1.0, -2.0, 0.5, 3.0});
    ClusterResult res = dpc_knn(one, 5, 1);
    REQUIRE(res.centers.size() == 1);
    CHECK(res.centers[0] == 0);
    CHECK(res.rho[0] == 1.0);    // k clamps to 0, empty sum
    CHECK(res.delta[0] == 0.0);  // no other token
    CHECK(res.assignment == std::vector<int>{0});
}

TEST_CASE("dpc-knn matches the brute-force oracle on 200 random instances") {
    Rng rng(1337, RngStream::test);
    for (int it = 0; it < 200; ++it) {
        const int m = 1 + static_cast<int>(rng.below(32));
        const int d = 1 + static_cast<int>(rng.below(8));
        const int k = 1 + static_cast<int>(rng.below(8));
        const int clusters = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
        // duplicated rows now and then to stress tie handling
        Tensor pts = random_tensor({m, d}, rng, -2.0, 2.0);
        if (m > 2 && it % 7 == 0)
            for (int c = 0; c < d; ++c) pts.at(1, c) = pts.at(0, c);

        ClusterResult got = dpc_knn(pts, k, clusters);
        testing::OracleDpc want = testing::oracle_dpc_knn(pts, k, clusters);

        REQUIRE(got.rho.size() == want.rho.size());
        for (size_t i = 0; i < want.rho.size(); ++i) {
            CHECK(got.rho[i] == want.rho[i]);
            CHECK(got.delta[i] == want.delta[i]);
        }
        CHECK(got.centers == want.centers);
        CHECK(got.assignment == want.assignment);
    }
}

TEST_CASE("dpc-knn invariants: rho range and translation invariance") {
    Rng rng(7, RngStream::test);
    for (int it = 0; it < 50; ++it) {
        const int m = 2 + static_cast<int>(rng.below(20));
        const int d = 1 + static_cast<int>(rng.below(6));
        Tensor pts = random_tensor({m, d}, rng, -3.0, 3.0);
        ClusterResult a = dpc_knn(pts, 5, 4);
        for (double r : a.rho) {
            CHECK(r > 0.0);
            CHECK(r <= 1.0);
        }
        Tensor shifted = pts;
        std::vector<double> offset(static_cast<size_t>(d));
        for (double& o : offset) o = rng.uniform(-10.0, 10.0);
        for (int i = 0; i < m; ++i)
            for (int c = 0; c < d; ++c) shifted.at(i, c) += offset[static_cast<size_t>(c)];
        ClusterResult b = dpc_knn(shifted, 5, 4);
        CHECK(a.centers == b.centers);
        CHECK(a.assignment == b.assignment);
        for (size_t i = 0; i < a.rho.size(); ++i) {
            CHECK(a.rho[i] == doctest::Approx(b.rho[i]).epsilon(1e-9));
            CHECK(a.delta[i] == doctest::Approx(b.delta[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("select_causal basics") {
    // K=1, n=1: plain argmax
    Tensor s1 = Tensor::from({1, 3}, {0.1, 0.7, 0.2});
    SelectionResult r1 = select_causal(s1, 1);
    CHECK(r1.causal_indices == std::vector<int>{1});
    CHECK(r1.noncausal_indices == std::vector<int>{0, 2});

    // two keypoints peak on the same token: the second takes its next best
    Tensor s2(Shape{2, 8}, 0.0);
    for (int j = 0; j < 8; ++j) {
        s2.at(0, j) = j == 5 ? 1.0 : 0.1 + 0.01 * j;
        s2.at(1, j) = j == 5 ? 1.0 : (j == 2 ? 0.9 : 0.05);
    }
    SelectionResult r2 = select_causal(s2, 1);
    CHECK(r2.causal_indices == std::vector<int>{5, 2});

    // n*K == N: everything causal
    Tensor s3 = Tensor::from({2, 2}, {0.6, 0.4, 0.3, 0.7});
    SelectionResult r3 = select_causal(s3, 1);
    CHECK(r3.causal_indices.size() == 2);
    CHECK(r3.noncausal_indices.empty());

    CHECK_THROWS_AS(select_causal(s3, 2), ConfigError);
}

TEST_CASE("select_causal matches the sequential oracle and partitions [0,N)") {
    Rng rng(99, RngStream::test);
    for (int it = 0; it < 300; ++it) {
        const int k = 1 + static_cast<int>(rng.below(6));
        const int n_per = 1 + static_cast<int>(rng.below(3));
        const int n = n_per * k + static_cast<int>(rng.below(20));
        Tensor scores = random_tensor({k, n}, rng, 0.0, 1.0);
        if (it % 5 == 0) {
            // exact ties stress the index tie-break
            for (int j = 0; j + 1 < n; j += 2) scores.at(0, j + 1) = scores.at(0, j);
        }
        SelectionResult got = select_causal(scores, n_per);
        SelectionResult want = testing::oracle_select_causal(scores, n_per);
        CHECK(got.causal_indices == want.causal_indices);
        CHECK(got.noncausal_indices == want.noncausal_indices);

        CHECK(static_cast<int>(got.causal_indices.size()) == n_per * k);
        std::set<int> all(got.causal_indices.begin(), got.causal_indices.end());
        CHECK(all.size() == got.causal_indices.size());  // distinct
        for (int j : got.noncausal_indices) all.insert(j);
        CHECK(static_cast<int>(all.size()) == n);  // partition of [0, N)
    }
}

TEST_CASE("temporal_fuse selector and averaging weights") {
    const int n = 4, d = 3;
    ParamStore params;
    Config cfg;
    cfg.embed_dim = d;
    FteParams p = FteParams::create(params, cfg);

    Rng rng(5, RngStream::test);
    Tensor frames = random_tensor({3 * n, d}, rng);

    // selector [I;0;0]: output equals frame t-1 rows
    std::fill(p.fuse_w->data.begin(), p.fuse_w->data.end(), 0.0);
    for (int j = 0; j < d; ++j) p.fuse_w->at(j, j) = 1.0;
    {
        Tape t;
        Var out = temporal_fuse(t, t.constant(frames), p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) CHECK(t.value(out).at(i, j) == frames.at(i, j));
    }

    // averaging weights with identical frames: output equals any frame
    Tensor same = frames;
    for (int f = 1; f < 3; ++f)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) same.at(f * n + i, j) = same.at(i, j);
    std::fill(p.fuse_w->data.begin(), p.fuse_w->data.end(), 0.0);
    for (int f = 0; f < 3; ++f)
        for (int j = 0; j < d; ++j) p.fuse_w->at(f * d + j, j) = 1.0 / 3.0;
    {
        Tape t;
        Var out = temporal_fuse(t, t.constant(same), p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                CHECK(t.value(out).at(i, j) == doctest::Approx(same.at(i, j)).epsilon(1e-12));
    }

    // gradients reach all three frames
    Rng rng2(6, RngStream::test);
    for (double& v : p.fuse_w->data) v = rng2.uniform(-0.5, 0.5);
    for (double& v : p.fuse_b->data) v = rng2.uniform(-0.1, 0.1);
    Tensor input = random_tensor({3 * n, d}, rng2);
    input.requires_grad = true;
    {
        Tape t;
        Var out = temporal_fuse(t, t.param(input), p);
        t.backward(t.sum_all(t.mul(out, out)));
    }
    auto loss = [&]() {
        Tape t(false);
        const Tensor& o = t.value(temporal_fuse(t, t.param(input), p));
        double s = 0.0;
        for (double v : o.data) s += v * v;
        return s;
    };
    CHECK(cmpose::testing::fd_check(input, input.grad, loss) <= 1e-4);
    double l1 = 0.0;
    for (double g : input.grad) l1 += std::abs(g);
    CHECK(l1 > 0.0);
}

TEST_CASE("keypoint_similarity rows are distributions; closed-form check") {
    const int d = 4;
    ParamStore params;
    Config cfg;
    cfg.embed_dim = d;
    FteParams p = FteParams::create(params, cfg);

    // identity projections, no bias
    std::fill(p.q_w->data.begin(), p.q_w->data.end(), 0.0);
    std::fill(p.k_w->data.begin(), p.k_w->data.end(), 0.0);
    for (int j = 0; j < d; ++j) {
        p.q_w->at(j, j) = 1.0;
        p.k_w->at(j, j) = 1.0;
    }

    // orthogonal query: uniform row
    {
        Tensor kp = Tensor::from({1, 4}, {1, 0, 0, 0});
        Tensor toks = Tensor::from({3, 4}, {0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
        Tape t;
        Var s = keypoint_similarity(t, t.constant(kp), t.constant(toks), p);
        for (int j = 0; j < 3; ++j)
            CHECK(t.value(s).at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    // logits (0, ln2, ln4) after scaling: row proportional to (1,2,4)/7
    {
        const double sq = std::sqrt(4.0);
        Tensor kp = Tensor::from({1, 4}, {1, 0, 0, 0});
        Tensor toks = Tensor::from(
            {3, 4}, {0.0, 0, 0, 0, sq * std::log(2.0), 0, 0, 0, sq * std::log(4.0), 0, 0, 0});
        Tape t;
        Var s = keypoint_similarity(t, t.constant(kp), t.constant(toks), p);
        CHECK(t.value(s).at(0, 0) == doctest::Approx(1.0 / 7).epsilon(1e-9));
        CHECK(t.value(s).at(0, 1) == doctest::Approx(2.0 / 7).epsilon(1e-9));
        CHECK(t.value(s).at(0, 2) == doctest::Approx(4.0 / 7).epsilon(1e-9));
    }

    // random rows sum to 1
    Rng rng(11, RngStream::test);
    for (double& v : p.q_w->data) v = rng.uniform(-0.3, 0.3);
    for (double& v : p.k_w->data) v = rng.uniform(-0.3, 0.3);
    Tensor kp = random_tensor({5, d}, rng);
    Tensor toks = random_tensor({9, d}, rng);
    Tape t;
    Var s = keypoint_similarity(t, t.constant(kp), t.constant(toks), p);
    for (int i = 0; i < 5; ++i) {
        double row = 0.0;
        for (int j = 0; j < 9; ++j) row += t.value(s).at(i, j);
        CHECK(std::abs(row - 1.0) < 1e-9);
    }
}

TEST_CASE("merge_clusters: weights, envelopes, translation") {
    Rng rng(21, RngStream::test);
    const int k = 3;
    for (int it = 0; it < 200; ++it) {
        const int m = 1 + static_cast<int>(rng.below(12));
        const int n = m + 2 + static_cast<int>(rng.below(8));
        const int d = 1 + static_cast<int>(rng.below(5));
        Tensor tokens = random_tensor({m, d}, rng, -2.0, 2.0);
        Tensor scores = random_tensor({k, n}, rng, 0.01, 1.0);
        std::vector<int> noncausal;
        for (int j = 0; j < m; ++j) noncausal.push_back(j);  // first m columns

        ClusterResult clusters = dpc_knn(tokens, 3, std::min(3, m));
        Tape t;
        Var merged = merge_clusters(t, t.constant(tokens), t.constant(scores), noncausal, clusters);
        const Tensor& mv = t.value(merged);
        REQUIRE(mv.rows() == static_cast<int>(clusters.centers.size()));

        // coordinate-wise inside the cluster envelope
        for (size_t slot = 0; slot < clusters.centers.size(); ++slot) {
            for (int c = 0; c < d; ++c) {
                double lo = 1e18, hi = -1e18;
                for (int j = 0; j < m; ++j) {
                    if (clusters.assignment[static_cast<size_t>(j)] != static_cast<int>(slot))
                        continue;
                    lo = std::min(lo, tokens.at(j, c));
                    hi = std::max(hi, tokens.at(j, c));
                }
                CHECK(mv.at(static_cast<int>(slot), c) >= lo - 1e-9);
                CHECK(mv.at(static_cast<int>(slot), c) <= hi + 1e-9);
            }
        }
    }

    // singleton cluster merges to its member; duplicate tokens merge to themselves
    Tensor two = Tensor::from({2, 2}, {0.5, -1.0, 0.5, -1.0});
    Tensor sc = Tensor::from({1, 4}, {0.3, 0.4, 0.2, 0.1});
    ClusterResult cl = dpc_knn(two, 1, 1);
    Tape t;
    Var merged = merge_clusters(t, t.constant(two), t.constant(sc), {0, 1}, cl);
    CHECK(t.value(merged).at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t.value(merged).at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("assemble_fine: concatenation, boundary recovery, width mismatch") {
    Rng rng(31, RngStream::test);
    Tensor causal = random_tensor({5, 6}, rng);
    Tensor merged = random_tensor({3, 6}, rng);
    Tape t;
    Var fine = assemble_fine(t, t.constant(causal), t.constant(merged));
    CHECK(t.value(fine).rows() == 8);
    CHECK(t.value(t.slice_rows(fine, 0, 5)).data == causal.data);

    Tensor bad = random_tensor({3, 5}, rng);
    CHECK_THROWS_AS(assemble_fine(t, t.constant(causal), t.constant(bad)), ShapeError);
}
