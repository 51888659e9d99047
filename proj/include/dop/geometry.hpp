#pragma once

// Build procedures of the geometry corpus (POINT, SEGMENT, TRIANGLE,
// TRIANGULAR_PYRAMID). Points travel as 3-vectors of reals; a segment is the
// composite {origin, extremity, length}.

#include <array>
#include <string>
#include <vector>

#include "dop/manager.hpp"
#include "dop/value.hpp"

namespace dop::geometry {

struct Point {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Segment {
  Point origin;
  Point extremity;
  double length = 0;
};

struct SurfaceResult {
  double surface = 0;
  bool degenerate = false;  // Heron radicand <= 0, surface forced to 0
};

double distance(const Point& a, const Point& b);

// Segments (v1,v2), (v2,v3), (v3,v1). Throws NonFiniteInput.
std::array<Segment, 3> sides_of(const std::array<Point, 3>& vertices);
double perimeter_of(const std::array<Segment, 3>& sides);
// Heron's formula with s = perimeter / 2.
SurfaceResult surface_of(double perimeter, const std::array<Segment, 3>& sides);
Point centroid_of(const std::array<Point, 3>& vertices);

AttributeValue point_value(const Point& p);
Point point_from(const AttributeValue& v);  // throws TypeMismatch / NonFiniteInput
AttributeValue segment_value(const Segment& s);
Segment segment_from(const AttributeValue& v);

// Registers POINT.position_build, SEGMENT.length_build,
// TRIANGLE.{sides,perimeter,surface,centroid}_build and
// TRIANGULAR_PYRAMID.base_surface_build.
void register_procedures(ProcedureTable& table);

}  // namespace dop::geometry
