#include "canopy/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace canopy {

double ring_signed_area(const Ring& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  // Work relative to the first vertex: projected coordinates sit millions of
  // meters from the origin and the raw shoelace sum cancels catastrophically.
  const Point o = ring.front();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    acc += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
  }
  return 0.5 * acc;
}

double polygon_area(const PolygonGeometry& poly) {
  double area = 0.0;
  for (std::size_t i = 0; i < poly.rings.size(); ++i) {
    double a = std::abs(ring_signed_area(poly.rings[i]));
    area += (i == 0) ? a : -a;
  }
  return std::max(area, 0.0);
}

Point polygon_centroid(const PolygonGeometry& poly) {
  if (poly.empty()) return {};
  const Ring& ring = poly.rings.front();
  const std::size_t n = ring.size();
  // Same local-origin trick as ring_signed_area: keeps the result accurate
  // for projected coordinates far from (0, 0).
  const Point o = ring.front();
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Point p{ring[i].x - o.x, ring[i].y - o.y};
    Point q{ring[(i + 1) % n].x - o.x, ring[(i + 1) % n].y - o.y};
    double cross = p.x * q.y - q.x * p.y;
    a2 += cross;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  if (std::abs(a2) < 1e-300) {
    // Degenerate: fall back to vertex mean.
    Point m{};
    for (const Point& p : ring) {
      m.x += p.x;
      m.y += p.y;
    }
    m.x /= static_cast<double>(n);
    m.y /= static_cast<double>(n);
    return m;
  }
  return {o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2)};
}

namespace {

bool ray_crosses(Point p, Point a, Point b) {
  // Half-open rule on y avoids double counting at vertices.
  if ((a.y > p.y) == (b.y > p.y)) return false;
  double x_at = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
  return x_at > p.x;
}

int orientation(Point a, Point b, Point c) {
  double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}

bool on_segment(Point a, Point b, Point c) {
  return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  int o1 = orientation(p1, p2, q1);
  int o2 = orientation(p1, p2, q2);
  int o3 = orientation(q1, q2, p1);
  int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

bool point_in_polygon(const PolygonGeometry& poly, Point p) {
  int crossings = 0;
  for (const Ring& ring : poly.rings) {
    const std::size_t n = ring.size();
    if (n < 3) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (ray_crosses(p, ring[i], ring[(i + 1) % n])) ++crossings;
    }
  }
  return (crossings & 1) != 0;
}

bool ring_is_simple(const Ring& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    Point a1 = ring[i], a2 = ring[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      // Skip adjacent edges (they share a vertex by construction).
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      Point b1 = ring[j], b2 = ring[(j + 1) % n];
      if (segments_intersect(a1, a2, b1, b2)) return false;
    }
  }
  return true;
}

std::pair<Point, Point> polygon_bounds(const PolygonGeometry& poly) {
  Point lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Ring& ring : poly.rings) {
    for (const Point& p : ring) {
      lo.x = std::min(lo.x, p.x);
      lo.y = std::min(lo.y, p.y);
      hi.x = std::max(hi.x, p.x);
      hi.y = std::max(hi.y, p.y);
    }
  }
  return {lo, hi};
}

}  // namespace canopy
