#include "schoolrun/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace schoolrun {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return distance(p, a);
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, Point{a.x + t * dx, a.y + t * dy});
}

double point_polyline_distance(Point p, std::span<const Point> polyline) {
  if (polyline.size() == 1) return distance(p, polyline[0]);
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < polyline.size(); ++i) {
    best = std::min(best, point_segment_distance(p, polyline[i], polyline[i + 1]));
  }
  return best;
}

double polyline_length(std::span<const Point> polyline) {
  double total = 0.0;
  for (size_t i = 0; i + 1 < polyline.size(); ++i) {
    total += distance(polyline[i], polyline[i + 1]);
  }
  return total;
}

Point point_at_arc_length(std::span<const Point> polyline, double s) {
  if (s <= 0.0) return polyline.front();
  double walked = 0.0;
  for (size_t i = 0; i + 1 < polyline.size(); ++i) {
    const double leg = distance(polyline[i], polyline[i + 1]);
    if (walked + leg >= s && leg > 0.0) {
      const double t = (s - walked) / leg;
      return Point{polyline[i].x + t * (polyline[i + 1].x - polyline[i].x),
                   polyline[i].y + t * (polyline[i + 1].y - polyline[i].y)};
    }
    walked += leg;
  }
  return polyline.back();
}

double BoundingBox::distance_to(Point p) const {
  const double dx = std::max({min_x - p.x, 0.0, p.x - max_x});
  const double dy = std::max({min_y - p.y, 0.0, p.y - max_y});
  return std::hypot(dx, dy);
}

BoundingBox bounding_box(std::span<const Point> polyline) {
  BoundingBox box{polyline.front().x, polyline.front().y, polyline.front().x,
                  polyline.front().y};
  for (const Point& p : polyline) {
    box.min_x = std::min(box.min_x, p.x);
    box.min_y = std::min(box.min_y, p.y);
    box.max_x = std::max(box.max_x, p.x);
    box.max_y = std::max(box.max_y, p.y);
  }
  return box;
}

}  // namespace schoolrun
