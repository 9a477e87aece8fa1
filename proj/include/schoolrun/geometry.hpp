#pragma once

#include <span>
#include <vector>

namespace schoolrun {

// Planar point in a projected CRS, meters.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

// Minimum distance from p to the closed segment [a, b].
double point_segment_distance(Point p, Point a, Point b);

double point_polyline_distance(Point p, std::span<const Point> polyline);

double polyline_length(std::span<const Point> polyline);

// Point at arc length s from the polyline start; s is clamped to [0, length].
Point point_at_arc_length(std::span<const Point> polyline, double s);

struct BoundingBox {
  double min_x, min_y, max_x, max_y;

  // Distance from p to the box (0 when inside); a lower bound on the distance
  // to anything contained in the box.
  double distance_to(Point p) const;
};

BoundingBox bounding_box(std::span<const Point> polyline);

}  // namespace schoolrun
