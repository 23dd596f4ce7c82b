// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "beamfix/error.hpp"
#include "beamfix/grid.hpp"
#include "beamfix/simulate.hpp"
#include "test_util.hpp"

using namespace beamfix;
using namespace beamfix::sim;

namespace {

double norm(const std::vector<std::complex<double>>& v) {
    double s = 0.0;
    for (const auto& c : v) s += std::norm(c);
    return std::sqrt(s);
}

int brute_force_beam(const BeamCodebook& cb, double az_deg) {
    const double s = std::sin(az_deg * M_PI / 180.0);
    int best = 0;
    double best_gain = -1.0;
    for (int q = 0; q < cb.num_beams; ++q) {
        const double sq = std::sin(cb.steering_angles_deg[static_cast<std::size_t>(q)] * M_PI / 180.0);
        std::complex<double> acc = 0.0;
        for (int m = 0; m < cb.num_antennas; ++m) {
            acc += std::exp(std::complex<double>(0.0, M_PI * m * (sq - s)));
        }
        const double g = std::abs(acc) / std::sqrt(static_cast<double>(cb.num_antennas));
        if (g > best_gain + 1e-12) {
            best_gain = g;
            best = q;
        }
    }
    return best;
}

}  // namespace

TEST(Codebook, SingleAntennaBeamsAreOne) {
    const auto cb = build_dft_codebook(1, 8);
    ASSERT_EQ(cb.beams.size(), 8u);
    for (const auto& b : cb.beams) {
        ASSERT_EQ(b.size(), 1u);
        EXPECT_NEAR(std::abs(b[0] - std::complex<double>(1.0, 0.0)), 0.0, 1e-15);
    }
}

TEST(Codebook, ShapeAndUnitNorm) {
    const auto cb = build_dft_codebook(16, 64);
    ASSERT_EQ(cb.beams.size(), 64u);
    for (const auto& b : cb.beams) {
        ASSERT_EQ(b.size(), 16u);
        EXPECT_NEAR(norm(b), 1.0, 1e-12);
    }
    EXPECT_DOUBLE_EQ(cb.steering_angles_deg.front(), -90.0);
    EXPECT_TRUE(std::is_sorted(cb.steering_angles_deg.begin(), cb.steering_angles_deg.end()));
    EXPECT_LT(cb.steering_angles_deg.back(), 90.0);
}

TEST(Codebook, AdjacentBeamsAreDistinct) {
    const auto cb = build_dft_codebook(16, 64);
    for (int q = 0; q + 1 < 64; ++q) {
        std::complex<double> ip = 0.0;
        for (int m = 0; m < 16; ++m) ip += std::conj(cb.beams[q][m]) * cb.beams[q + 1][m];
        EXPECT_LT(std::abs(ip), 1.0 - 1e-6);
    }
}

TEST(Codebook, RejectsFewerBeamsThanAntennas) {
    EXPECT_THROW(build_dft_codebook(16, 8), ValidationError);
    EXPECT_THROW(build_dft_codebook(0, 8), ValidationError);
}

TEST(BeamSelection, SteeringAngleSelectsItsBeam) {
    const auto cb = build_dft_codebook(16, 64);
    for (int q = 1; q < 64; ++q) {
        EXPECT_EQ(select_best_beam(cb, cb.steering_angles_deg[static_cast<std::size_t>(q)]), q) << q;
    }
}

TEST(BeamSelection, BroadsideMatchesBruteForce) {
    const auto cb = build_dft_codebook(16, 64);
    const int q = select_best_beam(cb, 0.0);
    EXPECT_EQ(q, brute_force_beam(cb, 0.0));
    EXPECT_EQ(cb.steering_angles_deg[static_cast<std::size_t>(q)], 0.0);
}

TEST(BeamSelection, SweepIsNonDecreasingAndMatchesBruteForce) {
    const auto cb = build_dft_codebook(16, 64);
    int prev = -1;
    for (double az = -80.0; az <= 80.0; az += 0.01) {
        const int q = select_best_beam(cb, az);
        EXPECT_GE(q, prev) << az;
        EXPECT_EQ(q, brute_force_beam(cb, az)) << az;
        prev = q;
    }
}

TEST(BeamSelection, BehindArrayRejected) {
    const auto cb = build_dft_codebook(16, 64);
    EXPECT_THROW(select_best_beam(cb, 90.0), ValidationError);
    EXPECT_THROW(select_best_beam(cb, -95.0), ValidationError);
}

TEST(Projection, BoresightEdgeAndSymmetry) {
    const auto scene = SceneGeometry::with_lane(14.0);
    const auto bs = scene.bs_position;
    EXPECT_NEAR(project_to_image(scene, geo::apply_offset(bs, {0, 14})), 0.5, 1e-12);
    // hfov 90: the right frustum edge is 45 degrees east of north.
    EXPECT_NEAR(project_to_image(scene, geo::apply_offset(bs, {10, 10})), 1.0, 1e-9);
    for (double e : {1.0, 3.5, 9.0}) {
        const double xl = project_to_image(scene, geo::apply_offset(bs, {-e, 14}));
        const double xr = project_to_image(scene, geo::apply_offset(bs, {e, 14}));
        EXPECT_NEAR(xl + xr, 1.0, 1e-12);
    }
    EXPECT_THROW(project_to_image(scene, geo::apply_offset(bs, {20, 10})), ValidationError);
    EXPECT_THROW(project_to_image(scene, geo::apply_offset(bs, {0, -10})), ValidationError);
}

TEST(Scene, WithLaneHonorsMarginAndValidates) {
    const auto scene = SceneGeometry::with_lane(14.0, 0.01);
    EXPECT_NEAR(project_to_image(scene, scene.road_start), 0.01, 1e-9);
    EXPECT_NEAR(project_to_image(scene, scene.road_end), 0.99, 1e-9);
    // Grid width at Z = 100 is about 0.28 m.
    const double width = geo::haversine_distance(scene.road_start, scene.road_end) / 98.0;
    EXPECT_GT(width, 0.25);
    EXPECT_LT(width, 0.30);
    auto bad = scene;
    bad.camera_hfov_deg = 180.0;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = scene;
    bad.road_end = bad.road_start;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = scene;
    bad.road_end = geo::apply_offset(scene.bs_position, {30, 5});
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Generate, SingleSampleNoDistractors) {
    TrajectoryConfig traj;
    traj.num_samples = 1;
    traj.num_distractors = 0;
    const auto b = generate_scenario(SceneGeometry::with_lane(14.0), build_dft_codebook(16, 64), traj, {0, 1});
    ASSERT_EQ(b.size(), 1u);
    ASSERT_EQ(b.samples[0].detections.size(), 1u);
    EXPECT_EQ(b.samples[0].detections[0].class_label, DetectionClass::Transmitter);
    EXPECT_EQ(*b.samples[0].noisy_position, b.samples[0].gt_position);
}

TEST(Generate, DirectionOrderingAndMonotoneBeams) {
    for (Direction dir : {Direction::LeftToRight, Direction::RightToLeft}) {
        const auto b = fixture::synthetic(1353, dir, 0.0);
        b.validate();
        EXPECT_EQ(b.metadata.direction, dir);
        EXPECT_EQ(b.metadata.codebook_size, 64);
        for (std::size_t i = 1; i < b.size(); ++i) {
            const double x0 = b.samples[i - 1].transmitter().x_center;
            const double x1 = b.samples[i].transmitter().x_center;
            const int q0 = b.samples[i - 1].beam_index;
            const int q1 = b.samples[i].beam_index;
            if (dir == Direction::LeftToRight) {
                EXPECT_LT(x0, x1);
                EXPECT_LE(q0, q1);
            } else {
                EXPECT_GT(x0, x1);
                EXPECT_GE(q0, q1);
            }
            EXPECT_EQ(b.samples[i].id, static_cast<std::int64_t>(i));
        }
        for (const auto& s : b.samples) {
            EXPECT_EQ(s.detections.size(), 3u);
            EXPECT_NEAR(s.transmitter().y_center, 0.5, 0.02 + 1e-15);
            EXPECT_EQ(*s.noisy_position, s.gt_position);
        }
    }
}

TEST(Generate, EverySampleHasExactlyOneGrid) {
    const auto b = fixture::synthetic(500);
    for (int z : {1, 7, 100, 1000}) {
        for (const auto& s : b.samples) {
            const int g = grid::assign_grid(s.transmitter().x_center, z);
            EXPECT_GE(g, 0);
            EXPECT_LT(g, z);
        }
    }
}

TEST(Generate, SeedDeterminism) {
    const auto a = fixture::synthetic(300, Direction::LeftToRight, 0.5, 3);
    const auto b = fixture::synthetic(300, Direction::LeftToRight, 0.5, 3);
    const auto c = fixture::synthetic(300, Direction::LeftToRight, 0.5, 4);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == c);
}

TEST(Generate, DistractorsKeepTheirDistance) {
    const auto b = fixture::synthetic(500);
    for (const auto& s : b.samples) {
        const auto& tx = s.transmitter();
        for (const auto& d : s.detections) {
            if (d.class_label == DetectionClass::Transmitter) continue;
            EXPECT_GE(std::hypot(d.x_center - tx.x_center, d.y_center - tx.y_center), 0.05);
        }
    }
}

TEST(Generate, RejectsBadTrajectory) {
    TrajectoryConfig traj;
    traj.num_samples = 0;
    EXPECT_THROW(generate_scenario(SceneGeometry::with_lane(14.0), build_dft_codebook(16, 64), traj, {0, 1}),
                 ValidationError);
}
