#include "coxq/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

namespace coxq {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

constexpr double kW = 640, kH = 400;
constexpr double kL = 70, kR = 20, kT = 40, kB = 50;  // margins

struct Range {
  double lo = 0, hi = 1;
};

Range nice_range(double lo, double hi) {
  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

double map_x(double x, const Range& r) { return kL + (x - r.lo) / (r.hi - r.lo) * (kW - kL - kR); }
double map_y(double y, const Range& r) {
  return kH - kB - (y - r.lo) / (r.hi - r.lo) * (kH - kT - kB);
}

}  // namespace

std::string render_line_chart(const std::vector<double>& xs, const std::vector<double>& ys,
                              const std::string& title, const std::string& y_label,
                              double reference) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
    x_lo = std::min(x_lo, xs[i]);
    x_hi = std::max(x_hi, xs[i]);
    y_lo = std::min(y_lo, ys[i]);
    y_hi = std::max(y_hi, ys[i]);
  }
  const bool empty = !std::isfinite(x_lo);
  if (empty) {
    x_lo = 0;
    x_hi = 1;
    y_lo = 0;
    y_hi = 1;
  }
  if (std::isfinite(reference)) {
    y_lo = std::min(y_lo, reference);
    y_hi = std::max(y_hi, reference);
  }
  const Range rx = nice_range(x_lo, x_hi);
  const Range ry = nice_range(y_lo, y_hi);

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  s << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
       "font-family=\"sans-serif\">" << title << "</text>\n";

  // axes
  s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
    << kH - kB << "\" stroke=\"black\"/>\n";

  // ticks (5 per axis)
  for (int t = 0; t <= 4; ++t) {
    const double fx = rx.lo + (rx.hi - rx.lo) * t / 4.0;
    const double fy = ry.lo + (ry.hi - ry.lo) * t / 4.0;
    const double px = map_x(fx, rx), py = map_y(fy, ry);
    s << "<line x1=\"" << fmt(px) << "\" y1=\"" << kH - kB << "\" x2=\"" << fmt(px) << "\" y2=\""
      << kH - kB + 5 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fmt(px) << "\" y=\"" << kH - kB + 20
      << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(fx)
      << "</text>\n";
    s << "<line x1=\"" << kL - 5 << "\" y1=\"" << fmt(py) << "\" x2=\"" << kL << "\" y2=\""
      << fmt(py) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << kL - 8 << "\" y=\"" << fmt(py + 4)
      << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(fy)
      << "</text>\n";
  }
  s << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">step</text>\n";
  s << "<text x=\"16\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
       "font-family=\"sans-serif\" transform=\"rotate(-90 16 " << kH / 2 << ")\">" << y_label
    << "</text>\n";

  if (std::isfinite(reference)) {
    const double py = map_y(reference, ry);
    s << "<line x1=\"" << kL << "\" y1=\"" << fmt(py) << "\" x2=\"" << kW - kR << "\" y2=\""
      << fmt(py) << "\" stroke=\"crimson\" stroke-dasharray=\"6 4\"/>\n";
    s << "<text x=\"" << kW - kR - 4 << "\" y=\"" << fmt(py - 5)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"crimson\" "
         "font-family=\"sans-serif\">limit " << fmt(reference) << "</text>\n";
  }

  // polyline segments, broken at non-finite samples
  bool open = false;
  std::ostringstream pts;
  auto close_segment = [&] {
    if (open) {
      s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
      pts.str("");
      open = false;
    }
  };
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      close_segment();
      continue;
    }
    if (open) pts << ' ';
    pts << fmt(map_x(xs[i], rx)) << ',' << fmt(map_y(ys[i], ry));
    open = true;
  }
  close_segment();

  s << "</svg>\n";
  return s.str();
}

std::vector<std::string> emit_plots(const std::vector<MetricsRecord>& records,
                                    const std::string& out_dir, double cost_limit) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const double none = std::numeric_limits<double>::quiet_NaN();

  std::vector<double> steps;
  for (const auto& r : records) steps.push_back(static_cast<double>(r.step));
  auto col = [&](double MetricsRecord::* field) {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.*field);
    return v;
  };

  struct Chart {
    const char* file;
    const char* title;
    const char* y_label;
    double MetricsRecord::* field;
    double reference;
  };
  const Chart charts[] = {
      {"episode_return.svg", "Training episode return", "return", &MetricsRecord::episode_return,
       none},
      {"episode_cost.svg", "Training episode cost", "cost", &MetricsRecord::episode_cost,
       cost_limit},
      {"eval_return.svg", "Evaluation return", "return", &MetricsRecord::eval_return, none},
      {"eval_cost.svg", "Evaluation episode cost", "cost", &MetricsRecord::eval_cost, cost_limit},
      {"cost_bias.svg", "Cost value estimation bias", "bias", &MetricsRecord::cost_bias, 0.0},
      {"conflict_ratio.svg", "Gradient conflict ratio", "ratio", &MetricsRecord::conflict_ratio,
       none},
      {"lambda.svg", "Lagrange multiplier", "lambda", &MetricsRecord::lambda, none},
      {"delta.svg", "Trust region delta", "delta", &MetricsRecord::delta, none},
  };

  std::vector<std::string> written;
  for (const Chart& c : charts) {
    const std::string path = (fs::path(out_dir) / c.file).string();
    atomic_write(path, render_line_chart(steps, col(c.field), c.title, c.y_label, c.reference));
    written.push_back(path);
  }
  return written;
}

}  // namespace coxq
