#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lbd::plot {

struct Series {
  std::string name;
  std::vector<double> x, y;  // NaN y values are skipped
};

// Each call writes <stem>.svg and <stem>.png. The PNG carries the geometry
// only; labels live in the SVG.
void line_plot(const std::filesystem::path& stem, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series);

void bar_chart(const std::filesystem::path& stem, const std::string& title,
               const std::vector<std::string>& labels, const std::vector<double>& values);

// Overlaid step histograms over shared bins [lo, hi).
void histogram_plot(const std::filesystem::path& stem, const std::string& title, double lo, double hi,
                    const std::vector<std::string>& names, const std::vector<std::vector<double>>& masses);

// One polygon per series over shared axes, radius 0 to 100.
void radar_chart(const std::filesystem::path& stem, const std::string& title,
                 const std::vector<std::string>& axes, const std::vector<Series>& series);

}  // namespace lbd::plot
