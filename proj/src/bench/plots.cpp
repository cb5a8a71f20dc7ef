#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mixerbench/bench.hpp"

namespace mixerbench {

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (tokens, value)
};

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

// Log-log line plot with decade grid lines.
std::string loglog_svg(const std::string& title, const std::string& ylabel, const std::vector<Series>& series) {
  constexpr double W = 640, H = 420, L = 80, R = 150, T = 40, B = 60;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, std::log10(x));
      xmax = std::max(xmax, std::log10(x));
      ymin = std::min(ymin, std::log10(y));
      ymax = std::max(ymax, std::log10(y));
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  xmin = std::floor(xmin), xmax = std::max(std::ceil(xmax), xmin + 1);
  ymin = std::floor(ymin), ymax = std::max(std::ceil(ymax), ymin + 1);
  const auto px = [&](double x) { return L + (std::log10(x) - xmin) / (xmax - xmin) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (std::log10(y) - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  for (double d = xmin; d <= xmax; d += 1) {
    const double x = px(std::pow(10, d));
    o << "<line x1=\"" << x << "\" y1=\"" << T << "\" x2=\"" << x << "\" y2=\"" << H - B
      << "\" stroke=\"#ddd\"/>\n<text x=\"" << x << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">1e"
      << d << "</text>\n";
  }
  for (double d = ymin; d <= ymax; d += 1) {
    const double y = py(std::pow(10, d));
    o << "<line x1=\"" << L << "\" y1=\"" << y << "\" x2=\"" << W - R << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n<text x=\"" << L - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << d
      << "</text>\n";
  }
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">tokens</text>\n";
  o << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
    << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    std::string pts;
    for (auto [x, y] : series[k].points) pts += std::to_string(px(x)) + "," + std::to_string(py(y)) + " ";
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    for (auto [x, y] : series[k].points)
      o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(k);
    o << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n<text x=\"" << W - R + 38 << "\" y=\"" << ly << "\">"
      << series[k].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::vector<std::string> write_plots(const std::string& out_dir, std::span<const BenchRecord> records) {
  // family = backbone + spatial rank
  std::map<std::string, std::map<std::string, std::vector<const BenchRecord*>>> families;
  for (const auto& r : records) {
    const std::string family =
        std::string(backbone_name(r.config.backbone)) + "_" + std::to_string(r.extents.size()) + "d";
    auto& by_mixer = families[family];
    by_mixer[mixer_name(r.config.mixer)];
    if (r.status == "ok") by_mixer[mixer_name(r.config.mixer)].push_back(&r);
  }
  std::vector<std::string> written;
  std::filesystem::create_directories(out_dir);
  for (const auto& [family, by_mixer] : families) {
    std::vector<Series> time, mem;
    for (const auto& [mixer, recs] : by_mixer) {
      Series t{mixer, {}}, m{mixer, {}};
      for (const auto* r : recs) {
        t.points.emplace_back(static_cast<double>(r->context_length), r->mean_time_s);
        m.points.emplace_back(static_cast<double>(r->context_length), static_cast<double>(r->peak_bytes));
      }
      std::sort(t.points.begin(), t.points.end());
      std::sort(m.points.begin(), m.points.end());
      time.push_back(std::move(t));
      mem.push_back(std::move(m));
    }
    for (auto [suffix, ylabel, series] :
         {std::tuple{"_time.svg", "forward+backward time (s)", &time},
          std::tuple{"_mem.svg", "peak tensor bytes", &mem}}) {
      const auto path = (std::filesystem::path(out_dir) / (family + suffix)).string();
      std::ofstream out(path);
      if (!out) throw Error("cannot write " + path);
      out << loglog_svg(family, ylabel, *series);
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace mixerbench
