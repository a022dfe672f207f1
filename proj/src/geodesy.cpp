#include "ndtfuse/geodesy.hpp"

#include <cmath>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse {

namespace {

constexpr double kE2 = kWgs84F * (2.0 - kWgs84F);  // first eccentricity squared

void check_coordinate(const GnssSample& s) {
  if (!(std::abs(s.latitude) <= 90.0) || !(std::abs(s.longitude) <= 180.0)) {
    throw InvalidCoordinate("lat/lon out of range: " + std::to_string(s.latitude) + ", " +
                            std::to_string(s.longitude));
  }
}

}  // namespace

double meridian_radius(double latitude_deg) {
  const double s = std::sin(deg2rad(latitude_deg));
  const double w = 1.0 - kE2 * s * s;
  return kWgs84A * (1.0 - kE2) / (w * std::sqrt(w));
}

double prime_vertical_radius(double latitude_deg) {
  const double s = std::sin(deg2rad(latitude_deg));
  return kWgs84A / std::sqrt(1.0 - kE2 * s * s);
}

Vec3 wgs84_to_enu(const GnssSample& s, const GnssSample& ref) {
  check_coordinate(s);
  check_coordinate(ref);
  const double m = meridian_radius(ref.latitude);
  const double n = prime_vertical_radius(ref.latitude);
  const double east = deg2rad(s.longitude - ref.longitude) * n * std::cos(deg2rad(ref.latitude));
  const double north = deg2rad(s.latitude - ref.latitude) * m;
  const double up = s.altitude - ref.altitude;
  return Vec3(east, north, up);
}

GnssSample enu_to_wgs84(const Vec3& enu, const GnssSample& ref, double stamp) {
  check_coordinate(ref);
  const double m = meridian_radius(ref.latitude);
  const double n = prime_vertical_radius(ref.latitude);
  GnssSample out;
  out.stamp = stamp;
  out.latitude = ref.latitude + rad2deg(enu.y() / m);
  out.longitude = ref.longitude + rad2deg(enu.x() / (n * std::cos(deg2rad(ref.latitude))));
  out.altitude = ref.altitude + enu.z();
  out.horizontal_accuracy = ref.horizontal_accuracy;
  return out;
}

double heading_to_yaw(double heading_deg) {
  return wrap_angle(deg2rad(90.0 - heading_deg));
}

double yaw_to_heading(double yaw_rad) {
  return wrap_angle_deg(90.0 - rad2deg(yaw_rad));
}

}  // namespace ndtfuse
