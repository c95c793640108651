#include "dh/geometry.hpp"
#include "dh/rng.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

using namespace dh;

namespace {

LandmarkFrame random_frame(int n, Rng& rng, double scale = 1.0) {
    LandmarkFrame f;
    for (int i = 0; i < n; ++i)
        f.points.emplace_back(scale * rng.normal(), scale * rng.normal(),
                              scale * rng.normal());
    return f;
}

RigidPose random_pose(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    RigidPose p;
    p.rotation = q.toRotationMatrix();
    p.translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.0;
    p.scale = 0.5 + rng.uniform() * 2.0;
    return p;
}

double max_point_dist(const LandmarkFrame& a, const LandmarkFrame& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.points.size(); ++i)
        m = std::max(m, (a.points[i] - b.points[i]).norm());
    return m;
}

}  // namespace

TEST_CASE("apply_pose: identity leaves the frame unchanged") {
    Rng rng(1);
    LandmarkFrame f = random_frame(6, rng);
    LandmarkFrame out = apply_pose(f, RigidPose{});
    CHECK(max_point_dist(f, out) == doctest::Approx(0.0));
}

TEST_CASE("apply_pose: 90 degree rotation about z maps (1,0,0) to (0,1,0)") {
    RigidPose p;
    p.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    LandmarkFrame f;
    f.points.emplace_back(1, 0, 0);
    LandmarkFrame out = apply_pose(f, p);
    CHECK(out.points[0].x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.points[0].y() == doctest::Approx(1.0));
    CHECK(out.points[0].z() == doctest::Approx(0.0));
}

TEST_CASE("apply_pose: pure translation") {
    RigidPose p;
    p.translation = Vec3(1, 2, 3);
    LandmarkFrame f;
    f.points.emplace_back(0, 0, 0);
    LandmarkFrame out = apply_pose(f, p);
    CHECK(out.points[0].isApprox(Vec3(1, 2, 3)));
}

TEST_CASE("apply_pose rejects non-orthonormal rotations") {
    RigidPose p;
    p.rotation << 1, 0, 0, 0, 2, 0, 0, 0, 1;
    LandmarkFrame f;
    f.points.emplace_back(1, 1, 1);
    CHECK_THROWS_AS(apply_pose(f, p), std::invalid_argument);
    p.rotation = Mat3::Identity();
    p.scale = -1.0;
    CHECK_THROWS_AS(apply_pose(f, p), std::invalid_argument);
    // reflection: orthonormal but det = -1
    p.scale = 1.0;
    p.rotation << 1, 0, 0, 0, 1, 0, 0, 0, -1;
    CHECK_THROWS_AS(apply_pose(f, p), std::invalid_argument);
}

TEST_CASE("canonicalize: identity and translation-only cases") {
    Rng rng(2);
    LandmarkFrame f = random_frame(5, rng);
    CHECK(max_point_dist(canonicalize(f, RigidPose{}), f) == doctest::Approx(0.0));

    RigidPose p;
    p.translation = Vec3(1, 0, 0);
    LandmarkFrame g;
    g.points.emplace_back(1, 0, 0);
    LandmarkFrame out = canonicalize(g, p);
    CHECK(out.points[0].norm() == doctest::Approx(0.0));
}

TEST_CASE("pose round-trip: canonicalize then apply_pose is identity") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        RigidPose p = random_pose(rng);
        LandmarkFrame f = random_frame(8, rng, 2.0);
        LandmarkFrame rt = apply_pose(canonicalize(f, p), p);
        CHECK(max_point_dist(rt, f) < 1e-6);
        // and the reverse composition
        LandmarkFrame rt2 = canonicalize(apply_pose(f, p), p);
        CHECK(max_point_dist(rt2, f) < 1e-6);
    }
}

TEST_CASE("canonicalize with remove_scale=false keeps the scale factor") {
    RigidPose p;
    p.scale = 2.0;
    LandmarkFrame f;
    f.points.emplace_back(2, 0, 0);
    LandmarkFrame kept = canonicalize(f, p, false);
    CHECK(kept.points[0].x() == doctest::Approx(2.0));
    LandmarkFrame removed = canonicalize(f, p, true);
    CHECK(removed.points[0].x() == doctest::Approx(1.0));
}

TEST_CASE("compute_stats: single frame, two-value column, constant sequence") {
    LandmarkSequence seq;
    LandmarkFrame a, b;
    a.points.emplace_back(0, 0, 0);
    b.points.emplace_back(2, 0, 0);

    seq.frames = {a};
    NormalizationStats s1 = compute_stats(seq);
    CHECK(s1.mean[0].isApprox(Vec3(0, 0, 0)));
    CHECK(s1.stddev[0].norm() == doctest::Approx(0.0));

    seq.frames = {a, b};
    NormalizationStats s2 = compute_stats(seq);
    CHECK(s2.mean[0].x() == doctest::Approx(1.0));
    CHECK(s2.stddev[0].x() == doctest::Approx(1.0));  // population std of {0,2}

    // constant sequence: normalize then denormalize is still identity
    seq.frames = {a, a, a};
    NormalizationStats s3 = compute_stats(seq);
    LandmarkFrame n = normalize(a, s3);
    CHECK(std::isfinite(n.points[0].x()));
    LandmarkFrame d = denormalize(n, s3);
    CHECK(max_point_dist(d, a) < 1e-9);

    CHECK_THROWS_AS(compute_stats(LandmarkSequence{}), std::invalid_argument);
}

TEST_CASE("compute_stats is permutation-invariant over frames") {
    Rng rng(4);
    LandmarkSequence seq;
    for (int i = 0; i < 7; ++i) seq.frames.push_back(random_frame(5, rng));
    NormalizationStats s1 = compute_stats(seq);
    std::reverse(seq.frames.begin(), seq.frames.end());
    std::swap(seq.frames[1], seq.frames[4]);
    NormalizationStats s2 = compute_stats(seq);
    for (int i = 0; i < 5; ++i) {
        CHECK(s1.mean[i].isApprox(s2.mean[i], 1e-12));
        CHECK((s1.stddev[i] - s2.stddev[i]).norm() < 1e-12);
    }
}

TEST_CASE("normalize: mean frame maps to zeros, zeros denormalize to mean") {
    Rng rng(5);
    LandmarkSequence seq;
    for (int i = 0; i < 6; ++i) seq.frames.push_back(random_frame(4, rng));
    NormalizationStats st = compute_stats(seq);

    LandmarkFrame mean;
    mean.points = st.mean;
    LandmarkFrame z = normalize(mean, st);
    for (const auto& p : z.points) CHECK(p.norm() < 1e-12);

    LandmarkFrame zeros;
    zeros.points.assign(4, Vec3::Zero());
    LandmarkFrame back = denormalize(zeros, st);
    CHECK(max_point_dist(back, mean) < 1e-12);
}

TEST_CASE("normalization round-trip within 1e-9") {
    Rng rng(6);
    LandmarkSequence seq;
    for (int i = 0; i < 10; ++i) seq.frames.push_back(random_frame(6, rng, 3.0));
    NormalizationStats st = compute_stats(seq);
    for (int trial = 0; trial < 100; ++trial) {
        LandmarkFrame f = random_frame(6, rng, 3.0);
        LandmarkFrame rt = denormalize(normalize(f, st), st);
        CHECK(max_point_dist(rt, f) < 1e-9);
    }
}

TEST_CASE("normalizing a sequence by its own stats gives mean 0, std near 1") {
    Rng rng(7);
    LandmarkSequence seq;
    for (int i = 0; i < 50; ++i) seq.frames.push_back(random_frame(5, rng, 2.0));
    NormalizationStats st = compute_stats(seq);
    LandmarkSequence norm = normalize_sequence(seq, st);
    NormalizationStats st2 = compute_stats(norm);
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(st2.mean[i][c]) < 1e-9);
            if (st.stddev[i][c] > st.eps * 1e3)
                CHECK(st2.stddev[i][c] == doctest::Approx(1.0).epsilon(1e-3));
        }
}

TEST_CASE("normalize rejects shape mismatches") {
    Rng rng(8);
    LandmarkSequence seq;
    seq.frames.push_back(random_frame(4, rng));
    NormalizationStats st = compute_stats(seq);
    LandmarkFrame wrong = random_frame(5, rng);
    CHECK_THROWS_AS(normalize(wrong, st), std::invalid_argument);
    CHECK_THROWS_AS(denormalize(wrong, st), std::invalid_argument);
}
