#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "legend/sde.hpp"

// Minimal deterministic SVG emission: 2D scatter overlays and
// per-coordinate histograms. Self-contained files, no external assets.
namespace legend::plot {

using sde::Batch;

struct Cloud {
  const Batch* batch = nullptr;
  std::string label;
  std::string color;  // css color
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

inline Range axis_range(const std::vector<Cloud>& clouds, int coord) {
  Range r{1e300, -1e300};
  bool any = false;
  for (const Cloud& c : clouds)
    for (std::size_t i = 0; i < c.batch->count; ++i) {
      const double v = c.batch->row(i)[coord];
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
      any = true;
    }
  if (!any) return {0.0, 1.0};
  if (r.hi - r.lo < 1e-12) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  const double pad = 0.05 * (r.hi - r.lo);
  return {r.lo - pad, r.hi + pad};
}

inline void svg_header(std::ostream& os, int w, int h, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"12\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">"
     << title << "</text>\n";
}

inline void legend_box(std::ostream& os, const std::vector<Cloud>& clouds,
                       int x, int y) {
  int row = 0;
  for (const Cloud& c : clouds) {
    os << "<circle cx=\"" << x << "\" cy=\"" << y + 18 * row
       << "\" r=\"4\" fill=\"" << c.color << "\"/>\n"
       << "<text x=\"" << x + 10 << "\" y=\"" << y + 4 + 18 * row
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << c.label
       << "</text>\n";
    ++row;
  }
}

}  // namespace detail

// Overlayed scatter of one or more clouds. 1D batches are plotted against
// the sample index; 2D uses coordinates (0, 1). Higher dimensions must pick
// a coordinate pair explicitly (one panel per pair).
inline void scatter_svg(std::ostream& os, const std::vector<Cloud>& clouds,
                        const std::string& title, int coord_x = -1,
                        int coord_y = -1) {
  const int W = 520, H = 420, M = 50;
  const bool defaulted = coord_x < 0 && coord_y < 0;
  if (defaulted) {
    coord_x = 0;
    coord_y = 1;
  }
  for (const Cloud& c : clouds) {
    if (c.batch->dim > 2 && defaulted)
      throw std::invalid_argument(
          "scatter_svg: dim > 2; pass an explicit coordinate pair per panel");
    if (c.batch->dim > 2 &&
        (coord_x >= c.batch->dim || coord_y >= c.batch->dim))
      throw std::invalid_argument("scatter_svg: coordinate out of range");
  }
  detail::svg_header(os, W, H, title);
  const bool one_d = !clouds.empty() && clouds[0].batch->dim == 1;
  detail::Range rx, ry;
  if (one_d) {
    std::size_t maxn = 0;
    for (const Cloud& c : clouds) maxn = std::max(maxn, c.batch->count);
    rx = {0.0, static_cast<double>(std::max<std::size_t>(maxn, 1))};
    ry = detail::axis_range(clouds, 0);
  } else {
    rx = detail::axis_range(clouds, coord_x);
    ry = detail::axis_range(clouds, coord_y);
  }
  os << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M
     << "\" height=\"" << H - 2 * M
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  auto px = [&](double v) {
    return M + (v - rx.lo) / (rx.hi - rx.lo) * (W - 2 * M);
  };
  auto py = [&](double v) {
    return H - M - (v - ry.lo) / (ry.hi - ry.lo) * (H - 2 * M);
  };
  for (const Cloud& c : clouds) {
    for (std::size_t i = 0; i < c.batch->count; ++i) {
      const double vx = one_d ? static_cast<double>(i) : c.batch->row(i)[coord_x];
      const double vy = one_d ? c.batch->row(i)[0] : c.batch->row(i)[coord_y];
      os << "<circle cx=\"" << detail::fmt(px(vx)) << "\" cy=\""
         << detail::fmt(py(vy)) << "\" r=\"2\" fill=\"" << c.color
         << "\" fill-opacity=\"0.6\"/>\n";
    }
  }
  os << "<text x=\"" << M << "\" y=\"" << H - 8
     << "\" font-size=\"11\" font-family=\"sans-serif\">[" << detail::fmt(rx.lo)
     << ", " << detail::fmt(rx.hi) << "] x [" << detail::fmt(ry.lo) << ", "
     << detail::fmt(ry.hi) << "]</text>\n";
  detail::legend_box(os, clouds, W - 130, M + 14);
  os << "</svg>\n";
}

// Per-coordinate histogram overlay (counts normalized to unit area).
inline void histogram_svg(std::ostream& os, const std::vector<Cloud>& clouds,
                          int coord, const std::string& title, int bins = 40) {
  if (bins <= 0) throw std::invalid_argument("histogram_svg: bins <= 0");
  const int W = 520, H = 300, M = 45;
  detail::svg_header(os, W, H, title);
  detail::Range r =
      clouds.empty() ? detail::Range{0, 1} : detail::axis_range(clouds, coord);
  std::vector<std::vector<double>> hists;
  double peak = 1e-300;
  for (const Cloud& c : clouds) {
    std::vector<double> h(bins, 0.0);
    const double width = (r.hi - r.lo) / bins;
    for (std::size_t i = 0; i < c.batch->count; ++i) {
      int b = static_cast<int>((c.batch->row(i)[coord] - r.lo) / width);
      b = std::clamp(b, 0, bins - 1);
      h[b] += 1.0;
    }
    if (c.batch->count > 0)
      for (double& v : h) v /= (c.batch->count * width);
    for (double v : h) peak = std::max(peak, v);
    hists.push_back(std::move(h));
  }
  os << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M
     << "\" height=\"" << H - 2 * M
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  const double bw = static_cast<double>(W - 2 * M) / bins;
  for (std::size_t ci = 0; ci < hists.size(); ++ci) {
    for (int b = 0; b < bins; ++b) {
      const double hh = hists[ci][b] / peak * (H - 2 * M);
      if (hh <= 0.0) continue;
      os << "<rect x=\"" << detail::fmt(M + b * bw) << "\" y=\""
         << detail::fmt(H - M - hh) << "\" width=\"" << detail::fmt(bw)
         << "\" height=\"" << detail::fmt(hh) << "\" fill=\""
         << clouds[ci].color << "\" fill-opacity=\"0.45\"/>\n";
    }
  }
  os << "<text x=\"" << M << "\" y=\"" << H - 8
     << "\" font-size=\"11\" font-family=\"sans-serif\">coord " << coord
     << " in [" << detail::fmt(r.lo) << ", " << detail::fmt(r.hi)
     << "]</text>\n";
  detail::legend_box(os, clouds, W - 130, M + 14);
  os << "</svg>\n";
}

inline void write_svg(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
}

}  // namespace legend::plot
