#ifndef BISWIFT_GEOMETRY_HPP_
#define BISWIFT_GEOMETRY_HPP_

namespace biswift {

/// Axis-aligned detection box; (cx, cy) is the center in pixels.
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  bool contains(double x, double y) const {
    return x >= cx - 0.5 * w && x <= cx + 0.5 * w && y >= cy - 0.5 * h &&
           y <= cy + 0.5 * h;
  }
  bool operator==(const BoundingBox&) const = default;
};

/// Per-block displacement in pixels per frame.
struct MotionVector {
  double dx = 0.0;
  double dy = 0.0;
  bool operator==(const MotionVector&) const = default;
};

/// Raster grid of square codec blocks covering a frame.
struct BlockGrid {
  int frame_width = 1920;
  int frame_height = 1080;
  int block_size = 16;

  int cols() const { return (frame_width + block_size - 1) / block_size; }
  int rows() const { return (frame_height + block_size - 1) / block_size; }
  int blocks() const { return cols() * rows(); }
  double center_x(int block) const {
    return (block % cols() + 0.5) * block_size;
  }
  double center_y(int block) const {
    return (block / cols() + 0.5) * block_size;
  }
  bool operator==(const BlockGrid&) const = default;
};

}  // namespace biswift

#endif  // BISWIFT_GEOMETRY_HPP_
