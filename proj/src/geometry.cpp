#include "helmetcv/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "helmetcv/errors.hpp"

namespace helmetcv {

std::string to_string(const CoordSpace& space) {
  switch (space.kind) {
    case SpaceKind::Frame:
      return "frame";
    case SpaceKind::ModelInput:
      return "model-input";
    case SpaceKind::Crop:
      return fmt::format("crop@({},{})", space.origin.x, space.origin.y);
  }
  return "unknown";
}

Box Box::from_edges(double left, double top, double right, double bottom, CoordSpace space) {
  return {left, top, std::max(0.0, right - left), std::max(0.0, bottom - top), space};
}

Box intersection(const Box& a, const Box& b) {
  const double left = std::max(a.x, b.x);
  const double top = std::max(a.y, b.y);
  const double right = std::min(a.right(), b.right());
  const double bottom = std::min(a.bottom(), b.bottom());
  if (right <= left || bottom <= top) return {a.x, a.y, 0.0, 0.0, a.space};
  return Box::from_edges(left, top, right, bottom, a.space);
}

double iou(const Box& a, const Box& b) {
  if (a.space != b.space) {
    throw UsageError(fmt::format("iou: boxes in different coordinate spaces ({} vs {})",
                                 to_string(a.space), to_string(b.space)));
  }
  const double overlap = intersection(a, b).area();
  const double uni = a.area() + b.area() - overlap;
  if (uni <= 0.0) return 0.0;
  return std::clamp(overlap / uni, 0.0, 1.0);
}

bool contains(const Box& outer, const Box& inner, double tolerance) {
  return inner.x >= outer.x - tolerance && inner.y >= outer.y - tolerance &&
         inner.right() <= outer.right() + tolerance && inner.bottom() <= outer.bottom() + tolerance;
}

Box clamp_to(const Box& b, ImageSize bounds) {
  const double left = std::clamp(b.x, 0.0, double(bounds.width));
  const double top = std::clamp(b.y, 0.0, double(bounds.height));
  const double right = std::clamp(b.right(), left, double(bounds.width));
  const double bottom = std::clamp(b.bottom(), top, double(bounds.height));
  return Box::from_edges(left, top, right, bottom, b.space);
}

Box expand_box(const Box& b, const Margins& margins, ImageSize bounds) {
  // Grow first, clamp once: boxes partly or wholly outside the frame still end up inside it.
  return clamp_to(Box::from_edges(b.x - margins.left, b.y - margins.top, b.right() + margins.right,
                                  b.bottom() + margins.bottom, b.space),
                  bounds);
}

Box rescale_box(const Box& b, ImageSize from, ImageSize to, CoordSpace to_space) {
  if (!from.valid() || !to.valid()) {
    throw UsageError(fmt::format("rescale_box: invalid image size {}x{} -> {}x{}", from.width,
                                 from.height, to.width, to.height));
  }
  const double sx = double(to.width) / double(from.width);
  const double sy = double(to.height) / double(from.height);
  return {b.x * sx, b.y * sy, b.w * sx, b.h * sy, to_space};
}

Box rescale_box(const Box& b, ImageSize from, ImageSize to) {
  return rescale_box(b, from, to, b.space);
}

Box crop_to_frame(const Box& b, Point crop_origin) {
  return {b.x + crop_origin.x, b.y + crop_origin.y, b.w, b.h, CoordSpace::frame()};
}

Box frame_to_crop(const Box& b, Point crop_origin) {
  return {b.x - crop_origin.x, b.y - crop_origin.y, b.w, b.h, CoordSpace::crop(crop_origin)};
}

PixelRect covering_rect(const Box& b, ImageSize bounds) {
  const int left = std::clamp(int(std::floor(b.x)), 0, bounds.width);
  const int top = std::clamp(int(std::floor(b.y)), 0, bounds.height);
  const int right = std::clamp(int(std::ceil(b.right())), left, bounds.width);
  const int bottom = std::clamp(int(std::ceil(b.bottom())), top, bounds.height);
  return {left, top, right - left, bottom - top};
}

}  // namespace helmetcv
