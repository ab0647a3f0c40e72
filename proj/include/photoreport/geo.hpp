#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "photoreport/domain.hpp"

namespace photoreport {

/// IUGG mean Earth radius.
inline constexpr double kEarthRadiusKm = 6371.0088;

inline constexpr double deg_to_rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }

/// Great-circle distance by the haversine formula.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b,
                           double radius_km = kEarthRadiusKm) noexcept {
  const double phi1 = deg_to_rad(a.lat());
  const double phi2 = deg_to_rad(b.lat());
  const double half_dphi = 0.5 * (phi2 - phi1);
  const double half_dlambda = 0.5 * deg_to_rad(b.lon() - a.lon());
  const double s1 = std::sin(half_dphi);
  const double s2 = std::sin(half_dlambda);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);  // rounding can push antipodal h past 1
  return 2.0 * radius_km * std::asin(std::sqrt(h));
}

// Threshold predicates are inclusive: a distance equal to the threshold
// counts as similar.

inline bool similar_time(Timestamp t1, Timestamp t2, double tau_seconds) noexcept {
  const auto diff = t1 > t2 ? t1 - t2 : t2 - t1;
  return static_cast<double>(diff) <= tau_seconds;
}

inline bool similar_position(const GeoPoint& a, const GeoPoint& b, double delta_km,
                             double radius_km = kEarthRadiusKm) noexcept {
  return haversine_km(a, b, radius_km) <= delta_km;
}

}  // namespace photoreport
