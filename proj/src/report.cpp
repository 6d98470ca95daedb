#include "ssr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssr/trainer.hpp"

namespace ssr::report {
namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

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

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("report: cannot write " + p.string());
  out << text;
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (opt.y_min) y0 = *opt.y_min;
  if (opt.y_max) y1 = *opt.y_max;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;

  const double left = 60, right = 20, top = 36, bottom = 48;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << opt.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(opt.title)
      << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
    svg << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << num(xv)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">"
      << escape(opt.x_label) << "</text>\n";
  svg << "<text transform=\"translate(14," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(opt.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      svg << num(px(s.x[i])) << ',' << num(py(std::clamp(s.y[i], y0, y1))) << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 + 14 * k << "\" fill=\"" << color << "\">"
        << escape(s.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

nlohmann::json write_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  const auto rows = train::read_log(run_dir / "train_log.csv");
  std::filesystem::create_directories(out_dir);

  Series ratio{"label ratio", {}, {}}, acc{"pseudo-label accuracy", {}, {}}, val{"validation IoU", {}, {}};
  for (const auto& r : rows) {
    for (auto* s : {&ratio, &acc, &val}) s->x.push_back(r.epoch);
    ratio.y.push_back(r.label_ratio);
    acc.y.push_back(r.pseudo_acc);
    val.y.push_back(r.val_iou);
  }
  write_file(out_dir / "label_ratio.svg", line_chart({ratio}, {"Pseudo-labeled share of the unlabeled pool", "epoch", "ratio", 0.0, 1.0}));
  write_file(out_dir / "pseudo_accuracy.svg", line_chart({acc}, {"Pseudo-label viewpoint accuracy", "epoch", "accuracy", 0.0, 1.0}));
  write_file(out_dir / "val_iou.svg", line_chart({val}, {"Validation 3D IoU", "epoch", "IoU", 0.0, 1.0}));

  nlohmann::json summary = {{"epochs", rows.size()}};
  if (!rows.empty()) {
    const auto best = std::max_element(rows.begin(), rows.end(),
                                       [](const auto& a, const auto& b) { return a.val_iou < b.val_iou; });
    summary["best_epoch"] = best->epoch;
    summary["best_val_iou"] = best->val_iou;
    summary["final_label_ratio"] = rows.back().label_ratio;
    summary["final_pseudo_acc"] = rows.back().pseudo_acc;
    summary["iterations"] = rows.back().iter;
  }

  std::ifstream cycles(run_dir / "pseudo_log.jsonl");
  std::size_t n_cycles = 0, gated = 0;
  nlohmann::json last_cycle;
  for (std::string line; std::getline(cycles, line);) {
    if (line.empty()) continue;
    last_cycle = nlohmann::json::parse(line);
    ++n_cycles;
    gated += last_cycle.value("gate_passed", true) ? 0 : 1;
  }
  summary["cycles"] = n_cycles;
  summary["cycles_gated"] = gated;
  if (n_cycles) summary["final_cycle"] = last_cycle;

  std::ifstream eval(run_dir / "eval.csv");
  std::string line;
  if (std::getline(eval, line)) {
    std::map<std::string, std::pair<double, int>> per_class;
    double total = 0;
    int n = 0;
    while (std::getline(eval, line)) {
      const auto a = line.find(','), b = line.rfind(',');
      if (a == std::string::npos || a == b) continue;
      const double v = std::stod(line.substr(b + 1));
      auto& pc = per_class[line.substr(0, a)];
      pc.first += v;
      pc.second += 1;
      total += v;
      ++n;
    }
    if (n) {
      summary["test_iou_mean"] = total / n;
      for (const auto& [cls, s] : per_class) summary["test_iou"][cls] = s.first / s.second;
    }
  }
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace ssr::report
