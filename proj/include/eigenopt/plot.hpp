#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "eigenopt/errors.hpp"
#include "eigenopt/evaluation.hpp"
#include "eigenopt/gridworld.hpp"

namespace eigenopt::plot {

struct Series {
  std::string label;
  AggregateCurve curve;
};

namespace detail {

inline const std::vector<cv::Scalar>& palette() {
  // BGR
  static const std::vector<cv::Scalar> colors{{180, 119, 31},  {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                                              {189, 103, 148}, {75, 86, 140},  {194, 119, 227}, {127, 127, 127}};
  return colors;
}

inline void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45,
                 cv::Scalar color = {30, 30, 30}) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

inline int text_width(const std::string& s, double scale = 0.45) {
  int baseline = 0;
  return cv::getTextSize(s, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline).width;
}

// 1-2-5 tick step covering `span` with about `target` intervals.
inline double nice_step(double span, int target) {
  const double raw = span / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

inline std::string tick_label(double v) {
  char buf[32];
  if (std::abs(v - std::round(v)) < 1e-9) std::snprintf(buf, sizeof buf, "%.0f", v);
  else std::snprintf(buf, sizeof buf, "%.2g", v);
  return buf;
}

}  // namespace detail

/// Learning curves with shaded confidence bands, one colour per series.
inline cv::Mat learning_curves(const std::vector<Series>& series, const std::string& title,
                               const std::string& y_label = "steps to goal", cv::Size size = {900, 560}) {
  if (series.empty()) throw ValidationError("nothing to plot");
  const int left = 80, right = 200, top = 40, bottom = 60;
  cv::Mat img(size, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Rect area(left, top, size.width - left - right, size.height - top - bottom);

  std::size_t episodes = 0;
  double y_max = 0.0;
  for (const Series& s : series) {
    episodes = std::max(episodes, s.curve.value.size());
    for (std::size_t i = 0; i < s.curve.value.size(); ++i)
      y_max = std::max({y_max, s.curve.value[i], s.curve.upper[i]});
  }
  if (episodes == 0) throw ValidationError("curves are empty");
  y_max = y_max > 0.0 ? y_max * 1.05 : 1.0;
  const double x_max = std::max<double>(2.0, static_cast<double>(episodes));

  const auto px = [&](double episode) {
    return area.x + static_cast<int>(std::lround((episode - 1.0) / (x_max - 1.0) * area.width));
  };
  const auto py = [&](double v) {
    const double c = std::clamp(v, 0.0, y_max);
    return area.y + area.height - static_cast<int>(std::lround(c / y_max * area.height));
  };

  // Grid and ticks.
  const double ys = detail::nice_step(y_max, 6);
  for (double v = 0.0; v <= y_max; v += ys) {
    cv::line(img, {area.x, py(v)}, {area.x + area.width, py(v)}, {235, 235, 235}, 1);
    const std::string l = detail::tick_label(v);
    detail::text(img, l, {area.x - 8 - detail::text_width(l), py(v) + 5});
  }
  const double xs = detail::nice_step(x_max - 1.0, 8);
  for (double e = 1.0; e <= x_max + 1e-9; e += xs) {
    cv::line(img, {px(e), area.y + area.height}, {px(e), area.y + area.height + 5}, {60, 60, 60}, 1);
    const std::string l = detail::tick_label(e);
    detail::text(img, l, {px(e) - detail::text_width(l) / 2, area.y + area.height + 22});
  }
  cv::rectangle(img, area, {60, 60, 60}, 1);

  // Bands first so every line stays visible.
  for (std::size_t k = 0; k < series.size(); ++k) {
    const AggregateCurve& c = series[k].curve;
    if (c.value.empty()) continue;
    std::vector<cv::Point> poly;
    for (std::size_t i = 0; i < c.upper.size(); ++i) poly.emplace_back(px(i + 1.0), py(c.upper[i]));
    for (std::size_t i = c.lower.size(); i-- > 0;) poly.emplace_back(px(i + 1.0), py(c.lower[i]));
    cv::Mat overlay = img.clone();
    cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{poly}, detail::palette()[k % detail::palette().size()],
                 cv::LINE_AA);
    cv::addWeighted(overlay, 0.2, img, 0.8, 0.0, img);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const AggregateCurve& c = series[k].curve;
    const cv::Scalar color = detail::palette()[k % detail::palette().size()];
    for (std::size_t i = 1; i < c.value.size(); ++i)
      cv::line(img, {px(static_cast<double>(i)), py(c.value[i - 1])}, {px(i + 1.0), py(c.value[i])}, color, 2,
               cv::LINE_AA);
    if (c.value.size() == 1) cv::circle(img, {px(1.0), py(c.value[0])}, 3, color, cv::FILLED, cv::LINE_AA);
    const int ly = top + 20 + static_cast<int>(k) * 22;
    cv::line(img, {size.width - right + 15, ly - 4}, {size.width - right + 40, ly - 4}, color, 3, cv::LINE_AA);
    detail::text(img, series[k].label, {size.width - right + 46, ly});
  }

  detail::text(img, title, {area.x, 26}, 0.6);
  detail::text(img, "episode", {area.x + area.width / 2 - 30, size.height - 14});
  cv::Mat ylab(24, detail::text_width(y_label) + 8, CV_8UC3, cv::Scalar(255, 255, 255));
  detail::text(ylab, y_label, {4, 17});
  cv::rotate(ylab, ylab, cv::ROTATE_90_COUNTERCLOCKWISE);
  const int yl = std::max(0, area.y + area.height / 2 - ylab.rows / 2);
  if (yl + ylab.rows <= img.rows) ylab.copyTo(img(cv::Rect(8, yl, ylab.cols, ylab.rows)));
  return img;
}

/// Visitation heatmap: walls dark grey, visitation light yellow -> dark red
/// (by value in [0, 1]), black dots where `positive` is non-zero, start cell
/// outlined white and goal cell filled black.
inline cv::Mat heatmap(const std::vector<std::vector<double>>& visitation,
                       const std::vector<std::vector<double>>& positive, const std::string& title,
                       std::optional<Cell> start = std::nullopt, std::optional<Cell> goal = std::nullopt,
                       int cell = 28) {
  if (visitation.empty() || visitation.size() != positive.size())
    throw ValidationError("heatmap grids are empty or differ in size");
  const int rows = static_cast<int>(visitation.size());
  const int cols = static_cast<int>(visitation.front().size());
  const int top = 34;
  cv::Mat img(top + rows * cell + 8, std::max(cols * cell + 16, 260), CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar light(160, 255, 255), dark(0, 0, 140);  // BGR yellow -> dark red
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(visitation[r].size()) != cols || static_cast<int>(positive[r].size()) != cols)
      throw ValidationError("ragged heatmap grid");
    for (int c = 0; c < cols; ++c) {
      const cv::Rect box(8 + c * cell, top + r * cell, cell, cell);
      const double v = visitation[r][c];
      if (v < 0.0) {
        cv::rectangle(img, box, {70, 70, 70}, cv::FILLED);
        continue;
      }
      const double t = std::clamp(v, 0.0, 1.0);
      cv::rectangle(img, box, light * (1.0 - t) + dark * t, cv::FILLED);
      cv::rectangle(img, box, {200, 200, 200}, 1);
      if (positive[r][c] > 0.0)
        cv::circle(img, {box.x + cell / 2, box.y + cell / 2}, std::max(2, cell / 7), {0, 0, 0}, cv::FILLED,
                   cv::LINE_AA);
    }
  }
  const auto mark = [&](Cell at, cv::Scalar color, int thickness) {
    cv::rectangle(img, cv::Rect(8 + at.col * cell + 2, top + at.row * cell + 2, cell - 4, cell - 4), color, thickness);
  };
  if (start) mark(*start, {255, 255, 255}, 3);
  if (goal) mark(*goal, {0, 0, 0}, cv::FILLED);
  detail::text(img, title, {8, 22}, 0.5);
  return img;
}

/// Writes a PNG via a temporary file and rename, so readers never see a partial image.
inline void write_png(const std::filesystem::path& path, const cv::Mat& img) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp.png";
  if (!cv::imwrite(tmp.string(), img)) throw std::runtime_error("cannot write " + path.string());
  std::filesystem::rename(tmp, path);
}

}  // namespace eigenopt::plot
