// SPDX-License-Identifier: Apache-2.0
#include "beamfix/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "beamfix/error.hpp"

namespace beamfix::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double wrap_lon(double lon) {
    if (lon > 180.0) lon -= 360.0;
    if (lon < -180.0) lon += 360.0;
    return lon;
}

void check_offset(const LocalOffset& offset) {
    if (!std::isfinite(offset.east_m) || !std::isfinite(offset.north_m) ||
        offset.norm() >= kMaxLocalOffsetM) {
        std::ostringstream os;
        os << "local offset (" << offset.east_m << ", " << offset.north_m
           << ") m is non-finite or exceeds the " << kMaxLocalOffsetM << " m tangent-plane bound";
        throw ValidationError(os.str());
    }
}

void check_tangent_latitude(const GeoPosition& p) {
    validate(p);
    if (std::abs(p.lat_deg) > 89.0) {
        std::ostringstream os;
        os << "latitude " << p.lat_deg << " deg is too close to a pole for the local tangent plane";
        throw ValidationError(os.str());
    }
}

}  // namespace

double LocalOffset::norm() const { return std::hypot(east_m, north_m); }

bool is_valid(const GeoPosition& p) {
    return std::isfinite(p.lat_deg) && std::isfinite(p.lon_deg) && p.lat_deg >= -90.0 &&
           p.lat_deg <= 90.0 && p.lon_deg >= -180.0 && p.lon_deg <= 180.0;
}

void validate(const GeoPosition& p) {
    if (!is_valid(p)) {
        std::ostringstream os;
        os.precision(17);
        os << "invalid position (" << p.lat_deg << ", " << p.lon_deg << ")";
        throw ValidationError(os.str());
    }
}

double haversine_distance(const GeoPosition& a, const GeoPosition& b) {
    const double phi1 = a.lat_deg * kDegToRad;
    const double phi2 = b.lat_deg * kDegToRad;
    const double s_phi = std::sin((phi2 - phi1) / 2.0);
    const double s_lambda = std::sin((b.lon_deg - a.lon_deg) * kDegToRad / 2.0);
    const double h = s_phi * s_phi + std::cos(phi1) * std::cos(phi2) * s_lambda * s_lambda;
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

double meters_per_deg_lat() { return kEarthRadiusM * kDegToRad; }

double meters_per_deg_lon(double lat_deg) {
    return kEarthRadiusM * std::cos(lat_deg * kDegToRad) * kDegToRad;
}

GeoPosition apply_offset(const GeoPosition& origin, const LocalOffset& offset) {
    check_tangent_latitude(origin);
    check_offset(offset);
    GeoPosition out;
    out.lat_deg = origin.lat_deg + offset.north_m / meters_per_deg_lat();
    out.lon_deg = wrap_lon(origin.lon_deg + offset.east_m / meters_per_deg_lon(origin.lat_deg));
    return out;
}

LocalOffset offset_between(const GeoPosition& origin, const GeoPosition& target) {
    check_tangent_latitude(origin);
    validate(target);
    double dlon = target.lon_deg - origin.lon_deg;
    if (dlon > 180.0) dlon -= 360.0;
    if (dlon < -180.0) dlon += 360.0;
    return {dlon * meters_per_deg_lon(origin.lat_deg),
            (target.lat_deg - origin.lat_deg) * meters_per_deg_lat()};
}

double bearing_deg(const GeoPosition& origin, const GeoPosition& target) {
    const LocalOffset d = offset_between(origin, target);
    return std::atan2(d.east_m, d.north_m) / kDegToRad;
}

double calibrate_axis_sigma(const NoiseSpec& spec) {
    if (!(spec.target_rms_m >= 0.0) || !std::isfinite(spec.target_rms_m)) {
        throw ValidationError("noise target_rms_m must be finite and >= 0");
    }
    return spec.target_rms_m / std::numbers::sqrt2;
}

GeoPosition add_gps_noise(const GeoPosition& pos, const NoiseSpec& spec, Rng& rng) {
    const double sigma = calibrate_axis_sigma(spec);
    const double east = rng.normal();
    const double north = rng.normal();
    if (sigma == 0.0) return pos;
    return apply_offset(pos, {sigma * east, sigma * north});
}

}  // namespace beamfix::geo
