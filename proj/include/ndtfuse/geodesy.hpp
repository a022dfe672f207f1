#pragma once

#include "ndtfuse/types.hpp"

namespace ndtfuse {

// WGS84 ellipsoid.
constexpr double kWgs84A = 6378137.0;
constexpr double kWgs84F = 1.0 / 298.257223563;

/// Meridian radius of curvature at latitude (deg).
double meridian_radius(double latitude_deg);

/// Prime-vertical radius of curvature at latitude (deg).
double prime_vertical_radius(double latitude_deg);

/// Local East-North-Up projection of s around ref (equirectangular, scaled at
/// the reference latitude). Exact at ref; intended for sub-2 km operating
/// areas. Throws InvalidCoordinate for out-of-range lat/lon.
Vec3 wgs84_to_enu(const GnssSample& s, const GnssSample& ref);

/// Exact inverse of wgs84_to_enu around the same ref. heading is not set.
GnssSample enu_to_wgs84(const Vec3& enu, const GnssSample& ref, double stamp = 0.0);

/// ENU yaw (rad, CCW from east) of a GNSS heading (deg, clockwise from north).
double heading_to_yaw(double heading_deg);
double yaw_to_heading(double yaw_rad);

}  // namespace ndtfuse
