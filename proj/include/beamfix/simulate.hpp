// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "beamfix/dataset.hpp"
#include "beamfix/geo.hpp"

namespace beamfix::sim {

/// Oversampled DFT codebook for a half-wavelength uniform linear array.
/// Beam q steers toward theta_q = -pi/2 + pi * q / Q and has elements
/// exp(-j pi m sin(theta_q)) / sqrt(M).
struct BeamCodebook {
    int num_antennas = 0;
    int num_beams = 0;
    std::vector<std::vector<std::complex<double>>> beams;
    std::vector<double> steering_angles_deg;  ///< increasing
};

BeamCodebook build_dft_codebook(int num_antennas, int num_beams);

/// ULA response toward `azimuth_deg` (relative to broadside).
std::vector<std::complex<double>> steering_vector(int num_antennas, double azimuth_deg);

/// |f_q^H a(theta)| for one beam.
double beam_gain(const BeamCodebook& codebook, int beam, double azimuth_deg);

/// argmax_q |f_q^H a(theta)| under a noiseless single-path LOS channel; ties go to the
/// lower index. Throws ValidationError for |azimuth| >= 90 deg.
int select_best_beam(const BeamCodebook& codebook, double azimuth_deg);

/// Basestation with a co-located camera and antenna array, plus one straight lane.
struct SceneGeometry {
    geo::GeoPosition bs_position{33.42, -111.929};
    double bs_heading_deg = 0.0;     ///< camera boresight azimuth, clockwise from north
    double camera_hfov_deg = 90.0;
    geo::GeoPosition road_start;
    geo::GeoPosition road_end;
    double array_normal_deg = 0.0;   ///< ULA broadside azimuth

    /// Throws ValidationError when an invariant fails (fov range, distinct endpoints,
    /// road inside the frustum).
    void validate() const;

    /// Lane perpendicular to the boresight at `lane_distance_m`, trimmed so the lane
    /// spans normalized x in [x_margin, 1 - x_margin].
    static SceneGeometry with_lane(double lane_distance_m, double x_margin = 0.01,
                                   double hfov_deg = 90.0,
                                   geo::GeoPosition bs = {33.42, -111.929});
};

struct TrajectoryConfig {
    int num_samples = 1000;
    Direction direction = Direction::LeftToRight;
    int num_distractors = 2;
    std::uint64_t seed = 1;
    /// Along-track jitter as a fraction of the nominal sample spacing (kept below 0.5 so
    /// the traversal stays strictly ordered).
    double jitter_fraction = 0.4;
    /// Minimum normalized (x, y) distance between a distractor and the transmitter.
    double min_distractor_separation = 0.05;

    void validate() const;
};

/// Pinhole projection: x = 0.5 + tan(bearing - boresight) / (2 tan(hfov / 2)).
/// Throws ValidationError when the target is outside the horizontal frustum.
double project_to_image(const SceneGeometry& scene, const geo::GeoPosition& target);

/// Synthetic bundle with known ground truth. Sample ids run 0..n-1 in traversal order.
DatasetBundle generate_scenario(const SceneGeometry& scene, const BeamCodebook& codebook,
                                const TrajectoryConfig& traj, const geo::NoiseSpec& noise);

}  // namespace beamfix::sim
