#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cpe {

/// Raised when a hyper-parameter lies outside its admissible range.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyIntersection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageDims {
  double width = 0;
  double height = 0;

  ImageDims() = default;
  ImageDims(double w, double h);
};

/// Axis-aligned rectangle in continuous pixel coordinates, left-top origin.
/// Width and height are strictly positive.
class Box {
 public:
  Box(double x, double y, double w, double h);

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double right() const { return x_ + w_; }
  double bottom() const { return y_ + h_; }

  bool operator==(const Box&) const = default;

  /// True when the box lies within [0, W] x [0, H].
  bool inside(const ImageDims& img) const;
  /// True when `other` lies within this box.
  bool contains(const Box& other) const;

 private:
  double x_, y_, w_, h_;
};

/// Extension directions. The name is the direction of travel of the moving
/// border: R2L moves the left border leftwards (B_L), L2R moves the right
/// border rightwards (B_R), T2B moves the bottom border down (B_B), B2T moves
/// the top border up (B_T).
enum class Direction { R2L, L2R, T2B, B2T };

inline constexpr std::array<Direction, 4> kAllDirections = {
    Direction::R2L, Direction::L2R, Direction::T2B, Direction::B2T};

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);
bool is_horizontal(Direction d);

double area(const Box& b);
double iou(const Box& a, const Box& b);
Box clip_box(const Box& b, const ImageDims& img);

/// Extends `b` away from one of its borders by w^2/(h t) (horizontal) or
/// h^2/(w t) (vertical), clamped to the image. With `ratio_scaling` off the
/// extension is w/t (resp. h/t).
Box extend_box(const Box& b, Direction dir, const ImageDims& img, double t,
               bool ratio_scaling = true);

/// The strip added by `extend_box`, i.e. ext minus b. Empty when the
/// extension was clamped away at the image border.
std::optional<Box> extension_strip(const Box& b, const Box& ext, Direction dir);

/// A box with an optional class id and score, as read from / written to the
/// whitespace-separated text format `x y w h [class_id] [score]`.
struct LabeledBox {
  Box box;
  std::optional<int> class_id;
  std::optional<double> score;
};

std::vector<LabeledBox> read_boxes(std::istream& in);
void write_boxes(std::ostream& out, const std::vector<LabeledBox>& boxes);

/// Shortest decimal text that round-trips to the same double.
std::string format_real(double v);

}  // namespace cpe
