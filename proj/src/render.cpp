#include "navlab/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>

namespace navlab {

namespace {

void appendf(std::string& out, const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  out += buf;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                          "#bcbd22", "#17becf"};

}  // namespace

std::string render_trajectory(const OccupancyGrid& grid,
                              const std::vector<RenderPath>& paths,
                              const RenderSpec& spec) {
  const double ppm = spec.px_per_meter;
  const double w = grid.width * grid.cell_size * ppm;
  const double h = grid.height * grid.cell_size * ppm;
  std::string svg;
  appendf(svg,
          "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" "
          "height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
          w, h, w, h);
  // y axis points up in world coordinates; SVG y points down
  auto px = [&](double x) { return x * ppm; };
  auto py = [&](double y) { return h - y * ppm; };

  if (spec.draw_grid) {
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"#d9d9d9\"/>\n";
    const double cpx = grid.cell_size * ppm;
    for (int cy = 0; cy < grid.height; ++cy)
      for (int cx = 0; cx < grid.width; ++cx)
        if (grid.navigable(cx, cy))
          appendf(svg,
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                  "fill=\"#555555\"/>\n",
                  cx * cpx, h - (cy + 1) * cpx, cpx, cpx);
  }

  for (const auto& path : paths) {
    if (path.points.empty()) continue;
    svg += "<polyline fill=\"none\" stroke=\"" + path.color + "\" ";
    appendf(svg, "stroke-width=\"%.1f\" points=\"", path.width);
    for (const auto& p : path.points)
      appendf(svg, "%.2f,%.2f ", px(p[0]), py(p[1]));
    svg += "\"/>\n";
    for (const auto& range : path.highlights) {
      const int a = std::max(0, range[0]);
      const int b = std::min(static_cast<int>(path.points.size()) - 1,
                             range[1]);
      if (a > b) continue;
      svg += "<polyline fill=\"none\" stroke=\"#ffd700\" stroke-opacity=\"0.7\" ";
      appendf(svg, "stroke-width=\"%.1f\" points=\"", path.width * 2.5);
      for (int i = a; i <= b; ++i)
        appendf(svg, "%.2f,%.2f ", px(path.points[i][0]),
                py(path.points[i][1]));
      svg += "\"/>\n";
    }
  }

  if (spec.has_markers) {
    appendf(svg,
            "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#2ca02c\"/>\n",
            px(spec.start_x), py(spec.start_y), spec.marker_radius * ppm);
    appendf(svg,
            "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#d62728\"/>\n",
            px(spec.goal_x), py(spec.goal_y), spec.marker_radius * ppm);
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_map_pair(const std::vector<std::uint8_t>& predicted,
                            const std::vector<std::uint8_t>& truth,
                            const std::vector<std::uint8_t>& mask,
                            int grid_extent, int cell_px) {
  const int G = grid_extent;
  const int gap = cell_px * 2;
  const int w = 2 * G * cell_px + gap;
  const int h = G * cell_px;
  std::string svg;
  appendf(svg,
          "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
          "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
          w, h, w, h);
  auto panel = [&](const std::vector<std::uint8_t>& cells, int x0) {
    for (int j = 0; j < G; ++j)
      for (int i = 0; i < G; ++i) {
        const std::size_t c = static_cast<std::size_t>(j) * G + i;
        const char* fill = cells[c] ? "#555555" : "#d9d9d9";
        const double opacity = mask.empty() || mask[c] ? 1.0 : 0.25;
        appendf(svg,
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                "fill=\"%s\" fill-opacity=\"%.2f\"/>\n",
                x0 + i * cell_px, (G - 1 - j) * cell_px, cell_px, cell_px,
                fill, opacity);
      }
  };
  panel(predicted, 0);
  panel(truth, G * cell_px + gap);
  svg += "</svg>\n";
  return svg;
}

std::string render_scatter(const std::vector<std::array<double, 2>>& points,
                           const std::vector<int>* labels, int size_px) {
  double lo_x = 0.0, hi_x = 1.0, lo_y = 0.0, hi_y = 1.0;
  if (!points.empty()) {
    lo_x = hi_x = points[0][0];
    lo_y = hi_y = points[0][1];
    for (const auto& p : points) {
      lo_x = std::min(lo_x, p[0]);
      hi_x = std::max(hi_x, p[0]);
      lo_y = std::min(lo_y, p[1]);
      hi_y = std::max(hi_y, p[1]);
    }
  }
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const double margin = 0.05 * span;
  const double scale = size_px / (span + 2 * margin);
  std::string svg;
  appendf(svg,
          "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
          "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
          size_px, size_px, size_px, size_px);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const char* color =
        labels ? kPalette[((*labels)[i] % 10 + 10) % 10] : kPalette[0];
    appendf(svg,
            "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" "
            "fill-opacity=\"0.7\"/>\n",
            (points[i][0] - lo_x + margin) * scale,
            size_px - (points[i][1] - lo_y + margin) * scale, color);
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_curve(const std::vector<CurveSeries>& series,
                         const std::string& x_label,
                         const std::string& y_label, int width_px,
                         int height_px) {
  double lo_x = 0.0, hi_x = 1.0, lo_y = 0.0, hi_y = 1.0;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double ylo = i < s.y_lo.size() ? s.y_lo[i] : s.y[i];
      const double yhi = i < s.y_hi.size() ? s.y_hi[i] : s.y[i];
      if (first) {
        lo_x = hi_x = s.x[i];
        lo_y = ylo;
        hi_y = yhi;
        first = false;
      }
      lo_x = std::min(lo_x, s.x[i]);
      hi_x = std::max(hi_x, s.x[i]);
      lo_y = std::min(lo_y, ylo);
      hi_y = std::max(hi_y, yhi);
    }
  const double pad = 48.0;
  const double sx = (width_px - 2 * pad) / std::max(hi_x - lo_x, 1e-9);
  const double sy = (height_px - 2 * pad) / std::max(hi_y - lo_y, 1e-9);
  auto px = [&](double x) { return pad + (x - lo_x) * sx; };
  auto py = [&](double y) { return height_px - pad - (y - lo_y) * sy; };

  std::string svg;
  appendf(svg,
          "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
          "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
          width_px, height_px, width_px, height_px);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  appendf(svg,
          "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
          "stroke=\"#333333\"/>\n",
          pad, height_px - pad, static_cast<double>(width_px) - pad,
          height_px - pad);
  appendf(svg,
          "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
          "stroke=\"#333333\"/>\n",
          pad, height_px - pad, pad, pad);
  appendf(svg,
          "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" "
          "text-anchor=\"middle\">%s</text>\n",
          width_px / 2.0, height_px - 12.0, x_label.c_str());
  appendf(svg,
          "<text x=\"14\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\" "
          "transform=\"rotate(-90 14 %.1f)\">%s</text>\n",
          height_px / 2.0, height_px / 2.0, y_label.c_str());

  for (const auto& s : series) {
    if (s.y_lo.size() == s.x.size() && s.y_hi.size() == s.x.size() &&
        !s.x.empty()) {
      std::string band = "<polygon fill=\"" + s.color +
                         "\" fill-opacity=\"0.15\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        appendf(band, "%.2f,%.2f ", px(s.x[i]), py(s.y_lo[i]));
      for (std::size_t i = s.x.size(); i-- > 0;)
        appendf(band, "%.2f,%.2f ", px(s.x[i]), py(s.y_hi[i]));
      svg += band + "\"/>\n";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + s.color +
           "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      appendf(svg, "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
    svg += "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      appendf(svg, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
              px(s.x[i]), py(s.y[i]), s.color.c_str());
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace navlab
