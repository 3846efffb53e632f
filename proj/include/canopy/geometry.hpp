#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace canopy {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Closed ring of vertices. The closing edge last->first is implicit; a
// duplicated closing vertex in the input is dropped on construction.
using Ring = std::vector<Point>;

// Polygon as a list of rings, even-odd filled: ring 0 is the exterior,
// further rings are holes (or islands inside holes).
struct PolygonGeometry {
  std::vector<Ring> rings;

  bool empty() const { return rings.empty() || rings.front().size() < 3; }
};

// Signed area of a ring (shoelace). Positive for counter-clockwise order.
double ring_signed_area(const Ring& ring);

// Total even-odd area of the polygon: |exterior| minus hole areas.
double polygon_area(const PolygonGeometry& poly);

// Area centroid of the exterior ring.
Point polygon_centroid(const PolygonGeometry& poly);

// Even-odd (crossing number) point-in-polygon test across all rings.
// Points inside a hole are outside.
bool point_in_polygon(const PolygonGeometry& poly, Point p);

// True if no two non-adjacent edges of any single ring intersect.
// O(n^2); rings here are crown outlines with tens of vertices.
bool ring_is_simple(const Ring& ring);

// Axis-aligned bounding box over all rings: {min, max}.
std::pair<Point, Point> polygon_bounds(const PolygonGeometry& poly);

// round-half-away-from-zero, the pinned convention for pixel snapping
inline long long round_half_away(double v) {
  return static_cast<long long>(v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

}  // namespace canopy
