#include "cpe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace cpe {

ImageDims::ImageDims(double w, double h) : width(w), height(h) {
  if (!(w > 0) || !(h > 0)) {
    throw InvalidInput("image dimensions must be positive");
  }
}

Box::Box(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    throw InvalidInput("box coordinates must be finite");
  }
  if (!(w > 0) || !(h > 0)) {
    throw InvalidInput("box width and height must be positive");
  }
}

bool Box::inside(const ImageDims& img) const {
  return x_ >= 0 && y_ >= 0 && right() <= img.width && bottom() <= img.height;
}

bool Box::contains(const Box& o) const {
  return x_ <= o.x_ && y_ <= o.y_ && right() >= o.right() &&
         bottom() >= o.bottom();
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::R2L: return "R2L";
    case Direction::L2R: return "L2R";
    case Direction::T2B: return "T2B";
    case Direction::B2T: return "B2T";
  }
  return "?";
}

Direction parse_direction(std::string_view s) {
  for (Direction d : kAllDirections) {
    if (s == to_string(d)) return d;
  }
  // Single-letter aliases name the side that grows: L, R, B (bottom), T.
  if (s == "L") return Direction::R2L;
  if (s == "R") return Direction::L2R;
  if (s == "B") return Direction::T2B;
  if (s == "T") return Direction::B2T;
  throw InvalidInput("unknown direction '" + std::string(s) + "'");
}

bool is_horizontal(Direction d) {
  return d == Direction::R2L || d == Direction::L2R;
}

double area(const Box& b) { return b.w() * b.h(); }

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = area(a) + area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Box clip_box(const Box& b, const ImageDims& img) {
  const double x0 = std::max(b.x(), 0.0);
  const double y0 = std::max(b.y(), 0.0);
  const double x1 = std::min(b.right(), img.width);
  const double y1 = std::min(b.bottom(), img.height);
  if (!(x1 > x0) || !(y1 > y0)) {
    throw EmptyIntersection("box lies entirely outside the image");
  }
  // Sides already inside keep their exact extent.
  double w = (b.x() >= 0 && b.right() <= img.width) ? b.w() : x1 - x0;
  double h = (b.y() >= 0 && b.bottom() <= img.height) ? b.h() : y1 - y0;
  // Keep the far edge inside the image after rounding.
  while (x0 + w > img.width) w = std::nextafter(w, 0.0);
  while (y0 + h > img.height) h = std::nextafter(h, 0.0);
  return Box(x0, y0, w, h);
}

namespace {

// Adjusts `extent` by ulps until origin + extent lies in [lo, hi].
// Requires lo <= hi. A narrow extent far from zero has a much finer ulp
// than the sum, so the guard allows many steps.
double settle_extent(double origin, double extent, double lo, double hi) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr int kGuard = 1 << 16;
  for (int guard = 0; guard < kGuard && origin + extent < lo; ++guard) {
    extent = std::nextafter(extent, kInf);
  }
  for (int guard = 0; guard < kGuard && origin + extent > hi; ++guard) {
    extent = std::nextafter(extent, 0.0);
  }
  return extent;
}

}  // namespace

Box extend_box(const Box& b, Direction dir, const ImageDims& img, double t,
               bool ratio_scaling) {
  if (!(t > 1) || !std::isfinite(t)) {
    throw InvalidParameter("extension factor t must be > 1");
  }
  if (!b.inside(img)) {
    throw InvalidInput("box lies outside the image");
  }
  const double dw = ratio_scaling ? b.w() * b.w() / (b.h() * t) : b.w() / t;
  const double dh = ratio_scaling ? b.h() * b.h() / (b.w() * t) : b.h() / t;

  switch (dir) {
    case Direction::R2L: {
      const double x = std::max(b.x() - dw, 0.0);
      const double w = settle_extent(x, b.right() - x, b.right(), img.width);
      return Box(x, b.y(), w, b.h());
    }
    case Direction::L2R: {
      const double w = settle_extent(
          b.x(), std::min(img.width - b.x(), dw + b.w()), b.right(),
          img.width);
      return Box(b.x(), b.y(), std::max(w, b.w()), b.h());
    }
    case Direction::B2T: {
      const double y = std::max(b.y() - dh, 0.0);
      const double h = settle_extent(y, b.bottom() - y, b.bottom(), img.height);
      return Box(b.x(), y, b.w(), h);
    }
    case Direction::T2B: {
      const double h = settle_extent(
          b.y(), std::min(img.height - b.y(), dh + b.h()), b.bottom(),
          img.height);
      return Box(b.x(), b.y(), b.w(), std::max(h, b.h()));
    }
  }
  throw InvalidInput("bad direction");
}

std::optional<Box> extension_strip(const Box& b, const Box& ext,
                                   Direction dir) {
  double x0 = ext.x(), y0 = ext.y(), x1 = ext.right(), y1 = ext.bottom();
  switch (dir) {
    case Direction::R2L: x1 = b.x(); break;
    case Direction::L2R: x0 = b.right(); break;
    case Direction::B2T: y1 = b.y(); break;
    case Direction::T2B: y0 = b.bottom(); break;
  }
  if (!(x1 > x0) || !(y1 > y0)) return std::nullopt;
  return Box(x0, y0, x1 - x0, y1 - y0);
}

std::vector<LabeledBox> read_boxes(std::istream& in) {
  std::vector<LabeledBox> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    if (tok.empty()) continue;
    if (tok.size() < 4 || tok.size() > 6) {
      throw InvalidInput("line " + std::to_string(lineno) +
                         ": expected 'x y w h [class_id] [score]'");
    }
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      LabeledBox lb{Box(num(tok[0]), num(tok[1]), num(tok[2]), num(tok[3])),
                    std::nullopt, std::nullopt};
      if (tok.size() >= 5) {
        const int id = std::stoi(tok[4], &used);
        if (used != tok[4].size()) throw std::invalid_argument(tok[4]);
        lb.class_id = id;
      }
      if (tok.size() == 6) lb.score = num(tok[5]);
      out.push_back(lb);
    } catch (const InvalidInput& e) {
      throw InvalidInput("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      throw InvalidInput("line " + std::to_string(lineno) +
                         ": malformed number");
    }
  }
  return out;
}

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_boxes(std::ostream& out, const std::vector<LabeledBox>& boxes) {
  for (const auto& lb : boxes) {
    out << format_real(lb.box.x()) << ' ' << format_real(lb.box.y()) << ' '
        << format_real(lb.box.w()) << ' ' << format_real(lb.box.h());
    if (lb.class_id || lb.score) out << ' ' << lb.class_id.value_or(-1);
    if (lb.score) out << ' ' << format_real(*lb.score);
    out << '\n';
  }
}

}  // namespace cpe
