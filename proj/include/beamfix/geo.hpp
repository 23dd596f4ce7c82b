// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "beamfix/rng.hpp"

namespace beamfix::geo {

/// Mean Earth radius used by every distance computation (spherical model).
inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Largest |offset| accepted by the local tangent-plane helpers. Generous enough for a
/// one-degree meridian step; noise and scene offsets stay far below it.
inline constexpr double kMaxLocalOffsetM = 200'000.0;

/// WGS-84 latitude/longitude in decimal degrees.
struct GeoPosition {
    double lat_deg = 0.0;
    double lon_deg = 0.0;

    friend bool operator==(const GeoPosition&, const GeoPosition&) = default;
};

/// Planar displacement in a local east/north frame, meters.
struct LocalOffset {
    double east_m = 0.0;
    double north_m = 0.0;

    double norm() const;
};

/// Isotropic horizontal GPS noise: target RMS radial displacement plus seed.
struct NoiseSpec {
    double target_rms_m = 0.0;
    std::uint64_t seed = 0;
};

/// Throws ValidationError unless -90 <= lat <= 90 and -180 <= lon <= 180 (and finite).
void validate(const GeoPosition& p);
bool is_valid(const GeoPosition& p);

/// Great-circle distance on a sphere of radius kEarthRadiusM, meters.
double haversine_distance(const GeoPosition& a, const GeoPosition& b);

/// Meters per degree of latitude (constant on the sphere).
double meters_per_deg_lat();
/// Meters per degree of longitude at the given latitude.
double meters_per_deg_lon(double lat_deg);

/// Small-angle equirectangular update of `origin` by `offset`. Rejects |lat| > 89 deg
/// and offsets beyond kMaxLocalOffsetM. Longitude is wrapped into [-180, 180].
GeoPosition apply_offset(const GeoPosition& origin, const LocalOffset& offset);

/// Inverse of apply_offset: east/north meters from `origin` to `target`, scaled at the
/// origin latitude.
LocalOffset offset_between(const GeoPosition& origin, const GeoPosition& target);

/// Planar bearing from `origin` to `target`, degrees clockwise from north in (-180, 180].
double bearing_deg(const GeoPosition& origin, const GeoPosition& target);

/// Per-axis Gaussian sigma giving E[radial^2] = target_rms^2 for isotropic 2-D noise.
double calibrate_axis_sigma(const NoiseSpec& spec);

/// Draws independent east/north N(0, sigma_axis^2) offsets from `rng` and applies them.
/// Always consumes two normal variates, so streams stay aligned across noise levels.
GeoPosition add_gps_noise(const GeoPosition& pos, const NoiseSpec& spec, Rng& rng);

}  // namespace beamfix::geo
