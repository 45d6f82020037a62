#include "lbd/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "lbd/common.hpp"
#include "lbd/imageio.hpp"

namespace lbd::plot {

namespace {

using Rgb = std::array<unsigned char, 3>;

constexpr int kW = 640, kH = 420;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;

const Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14},
                        {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};

Rgb color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

// Draws into an SVG document and an RGB raster at the same time.
class Scene {
 public:
  Scene() : px_(static_cast<std::size_t>(kW) * kH * 3, 255) {
    svg_ = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kW) + "\" height=\"" +
           std::to_string(kH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void line(double x0, double y0, double x1, double y1, const Rgb& c, double width = 1.0) {
    svg_ += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y1) +
            "\" stroke=\"" + hex(c) + "\" stroke-width=\"" + num(width) + "\"/>\n";
    raster_line(x0, y0, x1, y1, c, width);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const Rgb& c, bool closed = false) {
    if (pts.empty()) return;
    svg_ += std::string(closed ? "<polygon" : "<polyline") + " fill=\"none\" stroke=\"" + hex(c) +
            "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) svg_ += num(x) + "," + num(y) + " ";
    svg_ += "\"/>\n";
    for (std::size_t i = 1; i < pts.size(); ++i)
      raster_line(pts[i - 1].first, pts[i - 1].second, pts[i].first, pts[i].second, c, 2.0);
    if (closed && pts.size() > 2)
      raster_line(pts.back().first, pts.back().second, pts[0].first, pts[0].second, c, 2.0);
  }

  // `dx`, `dy` are the data values, kept as attributes so the SVG can be
  // checked against the table it plots.
  void marker(double x, double y, const Rgb& c, double dx, double dy) {
    svg_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"3\" fill=\"" + hex(c) + "\" data-x=\"" +
            num(dx) + "\" data-y=\"" + num(dy) + "\"/>\n";
    fill_rect(x - 2.5, y - 2.5, 5, 5, c);
  }

  void rect(double x, double y, double w, double h, const Rgb& c) {
    svg_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
            "\" fill=\"" + hex(c) + "\"/>\n";
    fill_rect(x, y, w, h, c);
  }

  void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
    svg_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\" font-size=\"" +
            std::to_string(size) + "\">" + escape(s) + "</text>\n";
  }

  void save(const std::filesystem::path& stem) {
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    std::ofstream out(stem.string() + ".svg");
    if (!out) throw InputError("cannot write " + stem.string() + ".svg");
    out << svg_ << "</svg>\n";
    write_png_rgb(stem.string() + ".png", kW, kH, px_);
  }

 private:
  void put(int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= kW || y >= kH) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * kW + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  void fill_rect(double x, double y, double w, double h, const Rgb& c) {
    for (int yy = static_cast<int>(std::floor(y)); yy < static_cast<int>(std::ceil(y + h)); ++yy)
      for (int xx = static_cast<int>(std::floor(x)); xx < static_cast<int>(std::ceil(x + w)); ++xx) put(xx, yy, c);
  }
  void raster_line(double x0, double y0, double x1, double y1, const Rgb& c, double width) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int n = std::max(1, static_cast<int>(std::ceil(len * 2)));
    const int r = std::max(0, static_cast<int>(std::round(width / 2 - 0.5)));
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) put(x + dx, y + dy, c);
    }
  }

  std::string svg_;
  std::vector<unsigned char> px_;
};

struct Frame {
  double x0, x1, y0, y1;
  double sx(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double sy(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

const Rgb kBlack{0, 0, 0};
const Rgb kGrid{225, 225, 225};

void axes(Scene& s, const Frame& f, const std::string& title, const std::string& xlabel,
          const std::string& ylabel) {
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4;
    s.line(kLeft, f.sy(y), kW - kRight, f.sy(y), kGrid);
    s.text(kLeft - 6, f.sy(y) + 4, num(y), "end");
    const double x = f.x0 + (f.x1 - f.x0) * i / 4;
    s.text(f.sx(x), kH - kBottom + 16, num(x), "middle");
  }
  s.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, kBlack);
  s.line(kLeft, kTop, kLeft, kH - kBottom, kBlack);
  s.text(kW / 2.0, 22, title, "middle", 14);
  s.text((kLeft + kW - kRight) / 2, kH - 12, xlabel, "middle");
  s.text(16, kH / 2.0, ylabel, "middle");
}

void legend(Scene& s, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 18.0 * i;
    s.rect(kW - kRight + 14, y - 8, 10, 10, color(i));
    s.text(kW - kRight + 30, y + 1, names[i]);
  }
}

std::pair<double, double> span(double lo, double hi) {
  if (!(hi > lo)) return {lo - 0.5, lo + 0.5};
  return {lo, hi};
}

}  // namespace

void line_plot(const std::filesystem::path& stem, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series) {
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      if (std::isnan(s.y[i])) continue;
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  if (xlo > xhi) xlo = 0, xhi = 1;
  if (ylo > yhi) ylo = 0, yhi = 1;
  const auto [a, b] = span(xlo, xhi);
  const auto [c, d] = span(std::min(ylo, 0.0), std::max(yhi, 0.0));
  const Frame f{a, b, c, d};
  Scene s;
  axes(s, f, title, xlabel, ylabel);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    names.push_back(series[k].name);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (std::isnan(series[k].y[i])) continue;
      pts.emplace_back(f.sx(series[k].x[i]), f.sy(series[k].y[i]));
    }
    s.polyline(pts, color(k));
    for (std::size_t i = 0, j = 0; i < series[k].x.size(); ++i) {
      if (std::isnan(series[k].y[i])) continue;
      s.marker(pts[j].first, pts[j].second, color(k), series[k].x[i], series[k].y[i]);
      ++j;
    }
  }
  legend(s, names);
  s.save(stem);
}

void bar_chart(const std::filesystem::path& stem, const std::string& title,
               const std::vector<std::string>& labels, const std::vector<double>& values) {
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(values.size(), 1)), 0.0, hi > 0 ? hi * 1.1 : 1.0};
  Scene s;
  axes(s, f, title, "", "");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = f.sx(i + 0.15), w = f.sx(i + 0.85) - x;
    s.rect(x, f.sy(values[i]), w, f.sy(0) - f.sy(values[i]), color(i));
    s.text(x + w / 2, f.sy(values[i]) - 4, num(values[i]), "middle");
  }
  legend(s, labels);
  s.save(stem);
}

void histogram_plot(const std::filesystem::path& stem, const std::string& title, double lo, double hi,
                    const std::vector<std::string>& names, const std::vector<std::vector<double>>& masses) {
  double top = 0.0;
  for (const auto& m : masses)
    for (double v : m) top = std::max(top, v);
  const Frame f{lo, hi, 0.0, top > 0 ? top * 1.1 : 1.0};
  Scene s;
  axes(s, f, title, "value", "fraction");
  for (std::size_t k = 0; k < masses.size(); ++k) {
    const auto& m = masses[k];
    const double w = (hi - lo) / static_cast<double>(std::max<std::size_t>(m.size(), 1));
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < m.size(); ++i) {
      pts.emplace_back(f.sx(lo + i * w), f.sy(m[i]));
      pts.emplace_back(f.sx(lo + (i + 1) * w), f.sy(m[i]));
    }
    s.polyline(pts, color(k));
  }
  legend(s, names);
  s.save(stem);
}

void radar_chart(const std::filesystem::path& stem, const std::string& title,
                 const std::vector<std::string>& axes_names, const std::vector<Series>& series) {
  Scene s;
  s.text(kW / 2.0, 22, title, "middle", 14);
  const double cx = (kW - kRight) / 2.0 + 20, cy = kH / 2.0 + 10, R = 150;
  const std::size_t n = std::max<std::size_t>(axes_names.size(), 1);
  auto at = [&](std::size_t i, double r) {
    const double a = -std::numbers::pi / 2 + 2 * std::numbers::pi * i / n;
    return std::pair{cx + r * std::cos(a), cy + r * std::sin(a)};
  };
  for (int ring = 1; ring <= 4; ++ring) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(at(i, R * ring / 4));
    s.polyline(pts, kGrid, true);
  }
  for (std::size_t i = 0; i < axes_names.size(); ++i) {
    const auto [x, y] = at(i, R);
    s.line(cx, cy, x, y, kGrid);
    const auto [lx, ly] = at(i, R + 16);
    s.text(lx, ly + 4, axes_names[i], "middle");
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    names.push_back(series[k].name);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < series[k].y.size() && i < n; ++i) {
      const double v = std::isnan(series[k].y[i]) ? 0.0 : std::clamp(series[k].y[i], 0.0, 100.0);
      pts.push_back(at(i, R * v / 100.0));
    }
    s.polyline(pts, color(k), true);
  }
  legend(s, names);
  s.save(stem);
}

}  // namespace lbd::plot
