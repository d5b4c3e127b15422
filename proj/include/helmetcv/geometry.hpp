#pragma once

#include <string>

namespace helmetcv {

struct ImageSize {
  int width = 0;
  int height = 0;

  bool valid() const noexcept { return width > 0 && height > 0; }
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

inline constexpr ImageSize kFrameSize{1920, 1080};
inline constexpr ImageSize kModelInputSize{960, 960};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class SpaceKind { Frame, ModelInput, Crop };

/// Coordinate space a box lives in. Crop spaces are anchored at `origin` in frame coordinates.
struct CoordSpace {
  SpaceKind kind = SpaceKind::Frame;
  Point origin{};

  static CoordSpace frame() { return {SpaceKind::Frame, {}}; }
  static CoordSpace model_input() { return {SpaceKind::ModelInput, {}}; }
  static CoordSpace crop(Point origin) { return {SpaceKind::Crop, origin}; }

  friend bool operator==(const CoordSpace&, const CoordSpace&) = default;
};

std::string to_string(const CoordSpace& space);

/// Axis-aligned rectangle stored as (left, top, width, height).
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  CoordSpace space{};

  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }
  double area() const noexcept { return w * h; }
  bool valid() const noexcept { return w >= 0.0 && h >= 0.0; }

  static Box from_edges(double left, double top, double right, double bottom,
                        CoordSpace space = {});

  friend bool operator==(const Box&, const Box&) = default;
};

/// Integer pixel rectangle used to cut crops out of a frame.
struct PixelRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  Box to_box() const { return {double(x), double(y), double(w), double(h), CoordSpace::frame()}; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct Margins {
  double left = 0.0;
  double right = 0.0;
  double top = 0.0;
  double bottom = 0.0;
};

/// Rider search margins around a motorcycle: left, right and top only.
inline constexpr Margins kRiderMargins{50.0, 50.0, 50.0, 0.0};

/// Intersection over union. 0 when the union is empty. Throws UsageError on mismatched spaces.
double iou(const Box& a, const Box& b);

/// Overlap rectangle; zero-sized (at a's origin) when the boxes are disjoint.
Box intersection(const Box& a, const Box& b);

bool contains(const Box& outer, const Box& inner, double tolerance = 0.0);

Box clamp_to(const Box& b, ImageSize bounds);

/// Grows `b` by `margins` and clamps the result to `bounds`.
Box expand_box(const Box& b, const Margins& margins, ImageSize bounds);

/// Scales a box from one image resolution to another. The result is tagged `to_space`.
Box rescale_box(const Box& b, ImageSize from, ImageSize to, CoordSpace to_space);
Box rescale_box(const Box& b, ImageSize from, ImageSize to);

Box crop_to_frame(const Box& b, Point crop_origin);
Box frame_to_crop(const Box& b, Point crop_origin);

/// Smallest integer rectangle covering `b`, clamped to `bounds`.
PixelRect covering_rect(const Box& b, ImageSize bounds);

}  // namespace helmetcv
