#include "psyloc/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "psyloc/errors.hpp"

namespace psyloc {

namespace {

bool finite_all(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// Antiderivative of the half-chord sqrt(r^2 - t^2), t clamped to [-r, r].
double half_chord_primitive(double t, double r) {
  t = std::clamp(t, -r, r);
  return 0.5 * (t * std::sqrt(std::max(0.0, r * r - t * t)) + r * r * std::asin(t / r));
}

}  // namespace

Box Box::checked(double x_min, double y_min, double width, double height) {
  Box b{x_min, y_min, width, height};
  if (!b.valid()) {
    throw InvalidArgument("invalid box " + to_string(b) + ": width and height must be positive");
  }
  return b;
}

bool Box::valid() const {
  return finite_all({x_min, y_min, width, height}) && width > 0.0 && height > 0.0;
}

double Box::area() const { return valid() ? width * height : 0.0; }

CircleSelection CircleSelection::checked(double cx, double cy, double radius) {
  CircleSelection c{cx, cy, radius};
  if (!c.valid()) throw InvalidArgument("invalid circle selection: radius must be positive");
  return c;
}

bool CircleSelection::valid() const { return finite_all({cx, cy, radius}) && radius > 0.0; }

double CircleSelection::area() const { return valid() ? std::numbers::pi * radius * radius : 0.0; }

Point box_center(const Box& box) { return box.center(); }

double box_iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// The box is split into vertical strips at every abscissa where the circle's
// half-chord crosses one of the box's horizontal edges. Inside a strip the
// clipped chord length is one of y1-y0, s-y0, y1+s or 2s, so each strip
// integrates in closed form.
double circle_box_intersection_area(const CircleSelection& circle, const Box& box) {
  if (!circle.valid() || !box.valid()) return 0.0;
  const double r = circle.radius;
  const double x0 = std::max(box.x_min - circle.cx, -r);
  const double x1 = std::min(box.x_max() - circle.cx, r);
  if (x0 >= x1) return 0.0;
  const double y0 = box.y_min - circle.cy;
  const double y1 = box.y_max() - circle.cy;
  if (y0 >= r || y1 <= -r) return 0.0;

  std::array<double, 6> cuts{};
  std::size_t n = 0;
  cuts[n++] = x0;
  cuts[n++] = x1;
  for (double y : {y0, y1}) {
    if (std::abs(y) < r) {
      const double w = std::sqrt(r * r - y * y);
      for (double t : {-w, w}) {
        if (t > x0 && t < x1) cuts[n++] = t;
      }
    }
  }
  std::sort(cuts.begin(), cuts.begin() + static_cast<std::ptrdiff_t>(n));

  double area = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (b <= a) continue;
    const double mid = 0.5 * (a + b);
    const double s_mid = std::sqrt(std::max(0.0, r * r - mid * mid));
    if (std::min(y1, s_mid) <= std::max(y0, -s_mid)) continue;
    const double chord = half_chord_primitive(b, r) - half_chord_primitive(a, r);
    const double top = y1 < s_mid ? y1 * (b - a) : chord;
    const double bottom = y0 > -s_mid ? y0 * (b - a) : -chord;
    area += top - bottom;
  }
  return std::clamp(area, 0.0, std::min(circle.area(), box.area()));
}

double circle_box_iou(const CircleSelection& circle, const Box& box) {
  const double inter = circle_box_intersection_area(circle, box);
  if (inter <= 0.0) return 0.0;
  const double uni = circle.area() + box.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::string to_string(const Box& box) {
  std::ostringstream os;
  os << "[" << box.x_min << ", " << box.y_min << ", " << box.width << ", " << box.height << "]";
  return os.str();
}

}  // namespace psyloc
