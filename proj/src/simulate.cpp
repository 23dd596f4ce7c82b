// SPDX-License-Identifier: Apache-2.0
#include "beamfix/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "beamfix/error.hpp"
#include "beamfix/rng.hpp"

namespace beamfix::sim {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double wrap_deg(double a) {
    while (a > 180.0) a -= 360.0;
    while (a <= -180.0) a += 360.0;
    return a;
}

}  // namespace

BeamCodebook build_dft_codebook(int num_antennas, int num_beams) {
    if (num_antennas < 1) throw ValidationError("codebook needs at least one antenna");
    if (num_beams < num_antennas) {
        throw ValidationError("codebook size Q = " + std::to_string(num_beams) +
                              " is smaller than the array size M = " +
                              std::to_string(num_antennas));
    }
    BeamCodebook cb;
    cb.num_antennas = num_antennas;
    cb.num_beams = num_beams;
    const double norm = 1.0 / std::sqrt(static_cast<double>(num_antennas));
    for (int q = 0; q < num_beams; ++q) {
        const double theta = -std::numbers::pi / 2.0 + std::numbers::pi * q / num_beams;
        cb.steering_angles_deg.push_back(theta / kDegToRad);
        std::vector<std::complex<double>> w(static_cast<std::size_t>(num_antennas));
        for (int m = 0; m < num_antennas; ++m) {
            w[static_cast<std::size_t>(m)] =
                norm * std::polar(1.0, -std::numbers::pi * m * std::sin(theta));
        }
        cb.beams.push_back(std::move(w));
    }
    return cb;
}

std::vector<std::complex<double>> steering_vector(int num_antennas, double azimuth_deg) {
    std::vector<std::complex<double>> a(static_cast<std::size_t>(num_antennas));
    const double s = std::sin(azimuth_deg * kDegToRad);
    for (int m = 0; m < num_antennas; ++m) {
        a[static_cast<std::size_t>(m)] = std::polar(1.0, -std::numbers::pi * m * s);
    }
    return a;
}

double beam_gain(const BeamCodebook& codebook, int beam, double azimuth_deg) {
    const auto a = steering_vector(codebook.num_antennas, azimuth_deg);
    const auto& f = codebook.beams.at(static_cast<std::size_t>(beam));
    std::complex<double> acc = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) acc += std::conj(f[m]) * a[m];
    return std::abs(acc);
}

int select_best_beam(const BeamCodebook& codebook, double azimuth_deg) {
    if (!(std::abs(azimuth_deg) < 90.0)) {
        std::ostringstream os;
        os << "azimuth " << azimuth_deg << " deg is behind or along the array";
        throw ValidationError(os.str());
    }
    if (codebook.num_beams < 1) throw ValidationError("empty codebook");
    int best = 0;
    double best_gain = -1.0;
    for (int q = 0; q < codebook.num_beams; ++q) {
        const double g = beam_gain(codebook, q, azimuth_deg);
        if (g > best_gain) {
            best_gain = g;
            best = q;
        }
    }
    return best;
}

void SceneGeometry::validate() const {
    geo::validate(bs_position);
    geo::validate(road_start);
    geo::validate(road_end);
    if (!(camera_hfov_deg > 0.0 && camera_hfov_deg < 180.0)) {
        throw ValidationError("camera_hfov_deg must lie in (0, 180)");
    }
    if (road_start == road_end) throw ValidationError("road endpoints must be distinct");
    // Both endpoints inside the frustum implies the whole segment is (convexity).
    project_to_image(*this, road_start);
    project_to_image(*this, road_end);
}

SceneGeometry SceneGeometry::with_lane(double lane_distance_m, double x_margin, double hfov_deg,
                                       geo::GeoPosition bs) {
    if (!(lane_distance_m > 0.0)) throw ValidationError("lane distance must be positive");
    if (!(x_margin >= 0.0 && x_margin < 0.5)) throw ValidationError("x_margin must be in [0, 0.5)");
    SceneGeometry s;
    s.bs_position = bs;
    s.bs_heading_deg = 0.0;
    s.array_normal_deg = 0.0;
    s.camera_hfov_deg = hfov_deg;
    // Boresight points north; the lane runs east-west. x = 0.5 + east / (2 d tan(hfov/2)).
    const double half_width = lane_distance_m * std::tan(hfov_deg / 2.0 * kDegToRad);
    const double half_road = (1.0 - 2.0 * x_margin) * half_width;
    s.road_start = geo::apply_offset(bs, {-half_road, lane_distance_m});
    s.road_end = geo::apply_offset(bs, {half_road, lane_distance_m});
    return s;
}

void TrajectoryConfig::validate() const {
    if (num_samples < 1) throw ValidationError("num_samples must be >= 1");
    if (num_distractors < 0) throw ValidationError("num_distractors must be >= 0");
    if (!(jitter_fraction >= 0.0 && jitter_fraction < 0.5)) {
        throw ValidationError("jitter_fraction must lie in [0, 0.5)");
    }
    if (!(min_distractor_separation >= 0.0 && min_distractor_separation < 0.5)) {
        throw ValidationError("min_distractor_separation must lie in [0, 0.5)");
    }
}

double project_to_image(const SceneGeometry& scene, const geo::GeoPosition& target) {
    const double rel = wrap_deg(geo::bearing_deg(scene.bs_position, target) - scene.bs_heading_deg);
    const double half_fov = scene.camera_hfov_deg / 2.0;
    if (std::abs(rel) > half_fov * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "target at relative bearing " << rel << " deg is outside the +/-" << half_fov
           << " deg camera frustum";
        throw ValidationError(os.str());
    }
    const double x =
        0.5 + std::tan(rel * kDegToRad) / (2.0 * std::tan(half_fov * kDegToRad));
    return std::clamp(x, 0.0, 1.0);
}

DatasetBundle generate_scenario(const SceneGeometry& scene, const BeamCodebook& codebook,
                                const TrajectoryConfig& traj, const geo::NoiseSpec& noise) {
    scene.validate();
    traj.validate();
    if (codebook.num_beams < 1) throw ValidationError("empty codebook");

    // Traverse from the endpoint that appears further left (L2R) or right (R2L).
    geo::GeoPosition from = scene.road_start;
    geo::GeoPosition to = scene.road_end;
    const bool start_is_left = project_to_image(scene, from) <= project_to_image(scene, to);
    if (start_is_left != (traj.direction == Direction::LeftToRight)) std::swap(from, to);
    const geo::LocalOffset span = geo::offset_between(from, to);

    Rng track_rng(Rng::derive(traj.seed, 1));
    Rng detect_rng(Rng::derive(traj.seed, 2));

    DatasetBundle bundle;
    bundle.metadata.codebook_size = codebook.num_beams;
    bundle.metadata.seed = traj.seed;
    bundle.metadata.direction = traj.direction;
    bundle.metadata.source = "synthetic";

    const double n = traj.num_samples;
    for (int i = 0; i < traj.num_samples; ++i) {
        const double jitter = traj.jitter_fraction * track_rng.uniform(-1.0, 1.0);
        const double t = (i + 0.5 + jitter) / n;
        const geo::GeoPosition pos =
            geo::apply_offset(from, {t * span.east_m, t * span.north_m});

        Sample s;
        s.id = i;
        s.direction = traj.direction;
        s.gt_position = pos;
        const double azimuth =
            wrap_deg(geo::bearing_deg(scene.bs_position, pos) - scene.array_normal_deg);
        s.beam_index = select_best_beam(codebook, azimuth);

        Detection tx;
        tx.class_label = DetectionClass::Transmitter;
        tx.x_center = project_to_image(scene, pos);
        tx.y_center = 0.5 + detect_rng.uniform(-0.02, 0.02);

        std::vector<Detection> distractors;
        for (int k = 0; k < traj.num_distractors; ++k) {
            Detection d;
            d.class_label = DetectionClass::Distractor;
            do {
                d.x_center = detect_rng.uniform(0.02, 0.98);
                d.y_center = detect_rng.uniform(0.3, 0.7);
            } while (std::hypot(d.x_center - tx.x_center, d.y_center - tx.y_center) <
                     traj.min_distractor_separation);
            distractors.push_back(d);
        }
        // The transmitter's slot in the detection list is random, as a detector's would be.
        const std::size_t slot = detect_rng.below(distractors.size() + 1);
        distractors.insert(distractors.begin() + static_cast<long>(slot), tx);
        s.detections = std::move(distractors);
        bundle.samples.push_back(std::move(s));
    }

    return inject_noise(bundle, noise);
}

}  // namespace beamfix::sim
