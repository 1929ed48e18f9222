#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "perla/errors.hpp"
#include "perla/experiment.hpp"

namespace perla {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double map(double v, double pixel_lo, double pixel_hi) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return pixel_lo + t * (pixel_hi - pixel_lo);
  }
};

Axis fit_axis(const std::vector<double>& values, bool log) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    const double t = log ? std::log10(v) : v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad, log};
}

std::string render(const std::string& title, const std::string& x_label, const std::string& y_label,
                   const std::vector<ChartSeries>& series, bool log, bool annotate_slope) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& s : series) {
    if (s.x.size() != s.mean.size()) throw InputError("series '" + s.label + "' is ragged");
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double hw = i < s.half_width.size() ? s.half_width[i] : 0.0;
      ys.push_back(s.mean[i] + hw);
      ys.push_back(log ? s.mean[i] : s.mean[i] - hw);
    }
  }
  const Axis ax = fit_axis(xs, log);
  const Axis ay = fit_axis(ys, log);
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  auto px = [&](double v) { return ax.map(v, x0, x1); };
  auto py = [&](double v) { return ay.map(v, y0, y1); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";

  for (int t = 0; t <= 4; ++t) {
    const double fx = ax.lo + (ax.hi - ax.lo) * t / 4.0;
    const double fy = ay.lo + (ay.hi - ay.lo) * t / 4.0;
    const double vx = log ? std::pow(10.0, fx) : fx;
    const double vy = log ? std::pow(10.0, fy) : fy;
    svg << "<text x=\"" << px(vx) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
        << num(vx) << "</text>\n";
    svg << "<text x=\"" << x0 - 6 << "\" y=\"" << py(vy) + 4 << "\" text-anchor=\"end\">"
        << num(vy) << "</text>\n";
  }
  svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << (y0 + y1) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const ChartSeries& s = series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!log || (s.x[i] > 0.0 && s.mean[i] > 0.0)) idx.push_back(i);
    }
    if (idx.empty()) continue;

    bool band = false;
    for (std::size_t i : idx) band |= i < s.half_width.size() && s.half_width[i] > 0.0;
    if (band) {
      svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i : idx) svg << px(s.x[i]) << ',' << py(s.mean[i] + s.half_width[i]) << ' ';
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        const double lo = s.mean[*it] - s.half_width[*it];
        svg << px(s.x[*it]) << ',' << py(log ? std::max(lo, s.mean[*it] * 1e-3) : lo) << ' ';
      }
      svg << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i : idx) svg << px(s.x[i]) << ',' << py(s.mean[i]) << ' ';
    svg << "\"/>\n";

    std::string legend = s.label;
    if (annotate_slope && idx.size() >= 2) {
      legend += " (slope " + num(loglog_slope(s.x, s.mean)) + ")";
    }
    const double ly = kTop + 18.0 * static_cast<double>(si);
    svg << "<rect x=\"" << x1 + 10 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"4\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << x1 + 26 << "\" y=\"" << ly - 3 << "\" font-size=\"10\">"
        << escape(legend) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("slope fit needs equal-length inputs");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  const double denom = n * sxx - sx * sx;
  if (n < 2 || std::abs(denom) < 1e-300) {
    throw InputError("slope fit needs two distinct positive points");
  }
  return (n * sxy - sx * sy) / denom;
}

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series) {
  return render(title, x_label, y_label, series, false, false);
}

std::string loglog_chart_svg(const std::string& title, const std::string& x_label,
                             const std::string& y_label, const std::vector<ChartSeries>& series) {
  return render(title, x_label, y_label, series, true, true);
}

std::vector<std::filesystem::path> write_charts(const std::vector<SummaryRow>& summary,
                                                const std::filesystem::path& out_dir) {
  using Panel = std::tuple<std::string, std::string, int, int>;
  std::map<Panel, std::map<std::string, ChartSeries>> curves;
  std::map<std::string, std::map<std::string, ChartSeries>> variance;

  for (const auto& s : summary) {
    if (s.metric == "greedy_return") {
      const Panel panel{s.experiment, s.env, s.n_agents, s.n_actions};
      const std::string label =
          s.algo == "mappo" ? s.algo : s.algo + " K=" + std::to_string(s.k);
      ChartSeries& c = curves[panel][label];
      c.label = label;
      c.x.push_back(static_cast<double>(s.step));
      c.mean.push_back(s.mean);
      c.half_width.push_back(s.half_width);
    } else if (s.metric == "gradient_variance") {
      ChartSeries& c = variance[s.experiment][s.algo];
      c.label = s.algo;
      c.x.push_back(static_cast<double>(s.k));
      c.mean.push_back(s.mean);
      c.half_width.push_back(s.half_width);
    }
  }

  std::vector<std::filesystem::path> written;
  for (const auto& [panel, by_algo] : curves) {
    const auto& [experiment, env, n, a] = panel;
    std::vector<ChartSeries> series;
    for (const auto& [algo, c] : by_algo) series.push_back(c);
    const std::string stem = experiment + "_" + env + "_N" + std::to_string(n) + "_A" +
                             std::to_string(a);
    const auto path = out_dir / (stem + ".svg");
    write_text_atomic(path, line_chart_svg(experiment + ": " + env + " N=" + std::to_string(n) +
                                               " A=" + std::to_string(a),
                                           "environment steps", "greedy return", series));
    written.push_back(path);
  }
  for (const auto& [experiment, by_algo] : variance) {
    // Only the k-dependent estimator carries a slope.
    const auto perla = by_algo.find("perla");
    if (perla == by_algo.end() || perla->second.x.size() < 2) continue;
    std::vector<ChartSeries> series{perla->second};
    // The k-dependent part Var(g^P(k)) - Var(g^D) follows the 1/k law.
    const auto dt = by_algo.find("dt");
    if (dt != by_algo.end() && !dt->second.mean.empty()) {
      ChartSeries excess;
      excess.label = "perla - dt";
      for (std::size_t i = 0; i < perla->second.x.size(); ++i) {
        const double e = perla->second.mean[i] - dt->second.mean.front();
        if (e <= 0.0) continue;
        excess.x.push_back(perla->second.x[i]);
        excess.mean.push_back(e);
      }
      if (excess.x.size() >= 2) series.push_back(std::move(excess));
    }
    const auto path = out_dir / (experiment + "_variance_vs_k.svg");
    write_text_atomic(path, loglog_chart_svg(experiment + ": gradient variance vs k", "k",
                                             "Var(g)", series));
    written.push_back(path);
  }
  return written;
}

}  // namespace perla
