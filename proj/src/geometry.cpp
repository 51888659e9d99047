#include "dop/geometry.hpp"

#include <cmath>

#include "dop/error.hpp"

namespace dop::geometry {

namespace {

void require_finite(const Point& p, const char* what) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
    throw Error(ErrorCode::NonFiniteInput, std::string(what) + " has a non-finite coordinate");
}

std::array<Point, 3> three_points(const AttributeValue& v) {
  const ValueList& items = v.as_list();
  if (items.size() != 3)
    throw Error(ErrorCode::TypeMismatch,
                "expected 3 vertices, got " + std::to_string(items.size()));
  return {point_from(items[0]), point_from(items[1]), point_from(items[2])};
}

std::array<Segment, 3> three_segments(const AttributeValue& v) {
  const ValueList& items = v.as_list();
  if (items.size() != 3)
    throw Error(ErrorCode::TypeMismatch, "expected 3 sides, got " + std::to_string(items.size()));
  return {segment_from(items[0]), segment_from(items[1]), segment_from(items[2])};
}

}  // namespace

double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

std::array<Segment, 3> sides_of(const std::array<Point, 3>& v) {
  for (const auto& p : v) require_finite(p, "vertex");
  std::array<Segment, 3> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % 3];
    out[i] = Segment{a, b, distance(a, b)};
  }
  return out;
}

double perimeter_of(const std::array<Segment, 3>& sides) {
  return sides[0].length + sides[1].length + sides[2].length;
}

SurfaceResult surface_of(double perimeter, const std::array<Segment, 3>& sides) {
  double s = perimeter / 2;
  double radicand = s * (s - sides[0].length) * (s - sides[1].length) * (s - sides[2].length);
  if (radicand <= 0) return SurfaceResult{0.0, true};
  return SurfaceResult{std::sqrt(radicand), false};
}

Point centroid_of(const std::array<Point, 3>& v) {
  return Point{(v[0].x + v[1].x + v[2].x) / 3, (v[0].y + v[1].y + v[2].y) / 3,
               (v[0].z + v[1].z + v[2].z) / 3};
}

AttributeValue point_value(const Point& p) { return AttributeValue(std::vector<double>{p.x, p.y, p.z}); }

Point point_from(const AttributeValue& v) {
  const auto& r = v.as_reals();
  if (r.size() != 3)
    throw Error(ErrorCode::TypeMismatch, "a point has 3 coordinates, got " + std::to_string(r.size()));
  Point p{r[0], r[1], r[2]};
  require_finite(p, "point");
  return p;
}

AttributeValue segment_value(const Segment& s) {
  return AttributeValue(ValueFields{{"origin", point_value(s.origin)},
                                    {"extremity", point_value(s.extremity)},
                                    {"length", AttributeValue(s.length)}});
}

Segment segment_from(const AttributeValue& v) {
  return Segment{point_from(v.field("origin")), point_from(v.field("extremity")),
                 v.field("length").as_real()};
}

void register_procedures(ProcedureTable& table) {
  table.add("POINT", "position_build", [](const BuildInputs& in) {
    Point p{in["x"].as_real(), in["y"].as_real(), in["z"].as_real()};
    require_finite(p, "point");
    return point_value(p);
  });
  table.add("SEGMENT", "length_build", [](const BuildInputs& in) {
    return AttributeValue(distance(point_from(in["origin"]), point_from(in["extremity"])));
  });
  table.add("TRIANGLE", "sides_build", [](const BuildInputs& in) {
    ValueList out;
    for (const auto& s : sides_of(three_points(in["vertices"]))) out.push_back(segment_value(s));
    return AttributeValue(std::move(out));
  });
  table.add("TRIANGLE", "perimeter_build", [](const BuildInputs& in) {
    return AttributeValue(perimeter_of(three_segments(in["sides"])));
  });
  table.add("TRIANGLE", "surface_build", [](const BuildInputs& in) {
    auto r = surface_of(in["perimeter"].as_real(), three_segments(in["sides"]));
    if (r.degenerate) in.warn("degenerate triangle, surface clamped to 0");
    return AttributeValue(r.surface);
  });
  table.add("TRIANGLE", "centroid_build", [](const BuildInputs& in) {
    return point_value(centroid_of(three_points(in["vertices"])));
  });
  table.add("TRIANGULAR_PYRAMID", "base_surface_build",
            [](const BuildInputs& in) { return AttributeValue(in["base"].as_real()); });
}

}  // namespace dop::geometry
