#pragma once

#include <string>

namespace psyloc {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in pixels, stored as (x_min, y_min, width, height).
///
/// Plain aggregate so predicted boxes can be built freely during training;
/// use Box::checked() wherever the positive-extent invariant must hold.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double width = 0.0;
  double height = 0.0;

  static Box checked(double x_min, double y_min, double width, double height);

  [[nodiscard]] bool valid() const;
  [[nodiscard]] double x_max() const { return x_min + width; }
  [[nodiscard]] double y_max() const { return y_min + height; }
  [[nodiscard]] double area() const;
  [[nodiscard]] Point center() const { return {x_min + width / 2.0, y_min + height / 2.0}; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Circular area selection (the lens disk) in pixels.
struct CircleSelection {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;

  static CircleSelection checked(double cx, double cy, double radius);

  [[nodiscard]] bool valid() const;
  [[nodiscard]] double area() const;

  friend bool operator==(const CircleSelection&, const CircleSelection&) = default;
};

Point box_center(const Box& box);

/// Intersection over union of two boxes; boxes without positive extent give 0.
double box_iou(const Box& a, const Box& b);

/// Exact area of circle ∩ box.
double circle_box_intersection_area(const CircleSelection& circle, const Box& box);

/// |circle ∩ box| / |circle ∪ box|.
double circle_box_iou(const CircleSelection& circle, const Box& box);

std::string to_string(const Box& box);

}  // namespace psyloc
