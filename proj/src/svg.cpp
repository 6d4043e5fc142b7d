#include "mfsb/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace mfsb {

namespace {

struct Box {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double w() const { return x1 - x0; }
  double h() const { return y1 - y0; }
};

void grow(Box& b, double x, double y, bool first) {
  if (first) {
    b.x0 = b.x1 = x;
    b.y0 = b.y1 = y;
    return;
  }
  b.x0 = std::min(b.x0, x);
  b.x1 = std::max(b.x1, x);
  b.y0 = std::min(b.y0, y);
  b.y1 = std::max(b.y1, y);
}

// Plot bounds from the problem layout only, so the view is identical across
// runs of the same scenario.
Box spec_bounds(const ProblemSpec& spec) {
  Box b;
  bool first = true;
  for (const DistributionSpec* d : {&spec.source, &spec.target})
    for (const MixtureComponent& c : d->components) {
      const double r = 3.5 * std::sqrt(c.cov_scale);
      grow(b, c.mean.x() - r, c.mean.y() - r, first);
      first = false;
      grow(b, c.mean.x() + r, c.mean.y() + r, false);
    }
  if (spec.obstacles.kind == ObstacleSet::Kind::Circles) {
    for (const Circle& c : spec.obstacles.circles) {
      grow(b, c.center.x() - c.radius, c.center.y() - c.radius, first);
      first = false;
      grow(b, c.center.x() + c.radius, c.center.y() + c.radius, false);
    }
  } else {
    grow(b, -1.0, -3.0, first);
    first = false;
    grow(b, 1.0, 3.0, false);
  }
  const double px = 0.15 * std::max(b.w(), 1.0);
  const double py = 0.15 * std::max(b.h(), 1.0);
  b.x0 -= px;
  b.x1 += px;
  b.y0 -= py;
  b.y1 += py;
  return b;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

std::string svg_open(const Box& b) {
  const double width = 720.0;
  const double height = width * b.h() / b.w();
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  num(width) + "\" height=\"" + num(height) +
                  "\" viewBox=\"" + num(b.x0) + " " + num(-b.y1) + " " +
                  num(b.w()) + " " + num(b.h()) + "\">\n";
  s +=
      "<style>\n"
      ".obstacle { fill: none; stroke: #c0392b; stroke-width: 0.1; }\n"
      ".path { fill: none; stroke: #2980b9; stroke-opacity: 0.35; "
      "stroke-width: 0.04; }\n"
      ".pt { fill: #27ae60; stroke: none; }\n"
      ".src { fill: none; stroke: #7f8c8d; stroke-width: 0.08; "
      "stroke-dasharray: 0.3 0.2; }\n"
      ".tgt { fill: none; stroke: #27ae60; stroke-width: 0.08; "
      "stroke-dasharray: 0.3 0.2; }\n"
      "</style>\n";
  s += "<rect x=\"" + num(b.x0) + "\" y=\"" + num(-b.y1) + "\" width=\"" +
       num(b.w()) + "\" height=\"" + num(b.h()) + "\" fill=\"#ffffff\"/>\n";
  return s;
}

// SVG y axis points down; world coordinates are written as (x, -y).
std::string circle_elem(const Vec2& center, double r, const char* cls) {
  return "<circle class=\"" + std::string(cls) + "\" cx=\"" +
         num(center.x()) + "\" cy=\"" + num(-center.y()) + "\" r=\"" +
         num(r) + "\"/>\n";
}

std::string obstacle_layer(const ProblemSpec& spec, const Box& b) {
  std::string s;
  if (spec.obstacles.kind == ObstacleSet::Kind::Circles) {
    for (const Circle& c : spec.obstacles.circles)
      s += circle_elem(c.center, c.radius, "obstacle");
    return s;
  }
  // V-neck walls: the two branches of x2^2 = alpha x1^2 + c_sq.
  for (double side : {1.0, -1.0}) {
    s += "<polyline class=\"obstacle\" points=\"";
    const int n = 200;
    for (int i = 0; i <= n; ++i) {
      const double x = b.x0 + b.w() * double(i) / n;
      const double y = side * std::sqrt(spec.obstacles.alpha * x * x +
                                        spec.obstacles.c_sq);
      s += num(x) + "," + num(-y);
      if (i < n) s += " ";
    }
    s += "\"/>\n";
  }
  return s;
}

std::string dist_layer(const DistributionSpec& dist, const char* cls) {
  std::string s;
  for (const MixtureComponent& c : dist.components) {
    s += circle_elem(c.mean, 2.0 * std::sqrt(c.cov_scale), cls);
    s += circle_elem(c.mean, 0.08, cls);
  }
  return s;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::out | std::ios::trunc);
  if (!out) throw std::runtime_error("export_plots: cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("export_plots: short write to " + path);
}

}  // namespace

void export_plots(const TrajectoryBatch& batch, const ProblemSpec& spec,
                  const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Box b = spec_bounds(spec);

  std::string setup = svg_open(b);
  setup += dist_layer(spec.source, "src");
  setup += dist_layer(spec.target, "tgt");
  setup += obstacle_layer(spec, b);
  setup += "</svg>\n";
  write_file(out_dir + "/setup.svg", setup);

  std::string traj = svg_open(b);
  traj += obstacle_layer(spec, b);
  if (!batch.x.empty()) {
    for (int i = 0; i < batch.n_samples; ++i) {
      traj += "<polyline class=\"path\" points=\"";
      for (std::size_t k = 0; k < batch.x.size(); ++k) {
        traj += num(batch.x[k](0, i)) + "," + num(-batch.x[k](1, i));
        if (k + 1 < batch.x.size()) traj += " ";
      }
      traj += "\"/>\n";
    }
  }
  traj += "</svg>\n";
  write_file(out_dir + "/trajectories.svg", traj);

  std::string term = svg_open(b);
  term += dist_layer(spec.target, "tgt");
  term += obstacle_layer(spec, b);
  if (!batch.x.empty()) {
    const Mat2X& x_end = batch.x.back();
    for (long i = 0; i < x_end.cols(); ++i)
      term += circle_elem(x_end.col(i), 0.07, "pt");
  }
  term += "</svg>\n";
  write_file(out_dir + "/terminal.svg", term);
}

}  // namespace mfsb
