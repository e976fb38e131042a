#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vbfs/armax.hpp"
#include "vbfs/core_data.hpp"
#include "vbfs/io.hpp"
#include "vbfs/metrics.hpp"
#include "vbfs/pipeline.hpp"

namespace vbfs {

namespace detail {

inline std::string opt_str(const std::optional<double>& v) { return v ? fmt_double(*v) : "nan"; }

}  // namespace detail

// ---- metrics tables ------------------------------------------------------------

inline void append_metric_rows(std::ostringstream& out, const MetricReport& r, const std::string& task) {
  for (std::size_t j = 0; j < kForceDim; ++j)
    out << kComponentNames[j] << ',' << fmt_double(r.rmse[j]) << ',' << fmt_double(r.rmse_physical[j]) << ','
        << detail::opt_str(r.pcc[j]) << ',' << task << '\n';
}

/// component,rmse_norm,rmse_phys,pcc,task with one block per task.
inline std::string metrics_csv(const TaskMetrics& m) {
  std::ostringstream out;
  out << "component,rmse_norm,rmse_phys,pcc,task\n";
  if (m.pushing) append_metric_rows(out, *m.pushing, "pushing");
  if (m.pulling) append_metric_rows(out, *m.pulling, "pulling");
  append_metric_rows(out, m.all, "all");
  return out.str();
}

/// Max/min/mean of PCC and normalized RMSE per task, one row per statistic set.
inline std::string summary_csv(const std::string& label, const TaskMetrics& m) {
  std::ostringstream out;
  out << "case,metric,task,max,min,mean\n";
  auto row = [&](const char* metric, const char* task, const SummaryRow& s) {
    out << label << ',' << metric << ',' << task << ',' << fmt_double(s.max) << ',' << fmt_double(s.min) << ','
        << fmt_double(s.mean) << '\n';
  };
  for (const char* metric : {"pcc", "rmse"})
    for (auto [task, r] : {std::pair{"pushing", &m.pushing}, std::pair{"pulling", &m.pulling}})
      if (*r) row(metric, task, metric[0] == 'p' ? (*r)->pcc_summary() : (*r)->rmse_summary());
  return out.str();
}

inline std::string training_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out << "iteration,loss,loss_rmse,loss_gdl,mre_train,mre_test\n";
  for (const auto& r : log)
    out << r.iteration << ',' << fmt_double(r.loss) << ',' << fmt_double(r.loss_rmse) << ',' << fmt_double(r.loss_gdl)
        << ',' << fmt_double(r.mre_train) << ',' << fmt_double(r.mre_test) << '\n';
  return out.str();
}

// ---- noise sweep -------------------------------------------------------------------

struct SweepPoint {
  double sigma = 0.0;
  TaskMetrics metrics;
};

inline std::string robustness_csv(std::vector<SweepPoint> pts) {
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.sigma < b.sigma; });
  std::ostringstream out;
  out << "sigma,component,rmse_norm,rmse_phys,pcc,task\n";
  for (const auto& p : pts) {
    std::ostringstream block;
    if (p.metrics.pushing) append_metric_rows(block, *p.metrics.pushing, "pushing");
    if (p.metrics.pulling) append_metric_rows(block, *p.metrics.pulling, "pulling");
    append_metric_rows(block, p.metrics.all, "all");
    std::istringstream lines(block.str());
    for (std::string line; std::getline(lines, line);) out << fmt_double(p.sigma) << ',' << line << '\n';
  }
  return out.str();
}

// ---- offline vs real-time ------------------------------------------------------

/// Per task, metric and component: offline value, real-time value, the ratio
/// (RT/O)x100 and a signed percentage where positive means real-time is worse.
inline std::string rt_compare_csv(const TaskMetrics& offline, const TaskMetrics& realtime) {
  std::ostringstream out;
  out << "task,metric,component,offline,realtime,(RT/O)x100,deterioration_pct\n";
  auto emit = [&](const char* task, const MetricReport& o, const MetricReport& rt) {
    for (std::size_t j = 0; j < kForceDim; ++j) {
      const double po = o.pcc[j].value_or(std::nan("")), pr = rt.pcc[j].value_or(std::nan(""));
      out << task << ",pcc," << kComponentNames[j] << ',' << fmt_double(po) << ',' << fmt_double(pr) << ','
          << fmt_double(pr / po * 100.0) << ',' << fmt_double((po - pr) / std::abs(po) * 100.0) << '\n';
    }
    for (std::size_t j = 0; j < kForceDim; ++j) {
      const double eo = o.rmse[j], er = rt.rmse[j];
      out << task << ",rmse," << kComponentNames[j] << ',' << fmt_double(eo) << ',' << fmt_double(er) << ','
          << fmt_double(er / eo * 100.0) << ',' << fmt_double((er - eo) / eo * 100.0) << '\n';
    }
  };
  if (offline.pushing && realtime.pushing) emit("pushing", *offline.pushing, *realtime.pushing);
  if (offline.pulling && realtime.pulling) emit("pulling", *offline.pulling, *realtime.pulling);
  return out.str();
}

// ---- ARMAX coefficients ------------------------------------------------------------

inline std::string armax_csv(const ArmaxMiso& m) {
  std::ostringstream out;
  out << "output,name,value\n";
  for (std::size_t j = 0; j < kForceDim; ++j) {
    const auto& md = m[j];
    const std::string o = kComponentNames[j];
    out << o << ",na," << md.orders.na << '\n'
        << o << ",nb," << md.orders.nb << '\n'
        << o << ",nc," << md.orders.nc << '\n'
        << o << ",nk," << md.orders.nk << '\n'
        << o << ",inputs," << md.inputs << '\n';
    for (std::size_t k = 0; k < md.a.size(); ++k) out << o << ",a" << k + 1 << ',' << fmt_double(md.a[k]) << '\n';
    for (std::size_t i = 0; i < md.b.size(); ++i)
      for (std::size_t k = 0; k < md.b[i].size(); ++k)
        out << o << ",b" << i + 1 << '_' << k << ',' << fmt_double(md.b[i][k]) << '\n';
    for (std::size_t k = 0; k < md.c.size(); ++k) out << o << ",c" << k + 1 << ',' << fmt_double(md.c[k]) << '\n';
    out << o << ",noise_variance," << fmt_double(md.noise_variance) << '\n';
  }
  return out.str();
}

inline ArmaxMiso parse_armax_csv(const std::string& text) {
  ArmaxMiso m;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "output,name,value") throw data_error("armax model: bad header");
  auto index_of = [](const std::string& name) {
    for (std::size_t j = 0; j < kForceDim; ++j)
      if (name == kComponentNames[j]) return j;
    throw data_error("armax model: unknown output '" + name + "'");
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw data_error("armax model: expected 3 fields");
    auto& md = m[index_of(std::string(f[0]))];
    const std::string n(f[1]);
    const double v = parse_double(f[2], "armax coefficient");
    auto ival = [&] { return static_cast<int>(v); };
    if (n == "na") md.orders.na = ival();
    else if (n == "nb") md.orders.nb = ival();
    else if (n == "nc") md.orders.nc = ival();
    else if (n == "nk") md.orders.nk = ival();
    else if (n == "inputs") md.inputs = ival();
    else if (n == "noise_variance") md.noise_variance = v;
    else if (n[0] == 'a') md.a.push_back(v);
    else if (n[0] == 'c') md.c.push_back(v);
    else if (n[0] == 'b') {
      const auto us = n.find('_');
      const std::size_t i = std::stoul(n.substr(1, us - 1)) - 1;
      if (md.b.size() <= i) md.b.resize(i + 1);
      md.b[i].push_back(v);
    } else throw data_error("armax model: unknown coefficient '" + n + "'");
  }
  for (auto& md : m) {
    md.orders.validate(md.inputs);
    if (int(md.a.size()) != md.orders.na || int(md.c.size()) != md.orders.nc || int(md.b.size()) != md.inputs)
      throw data_error("armax model: coefficient count does not match the orders");
    for (const auto& b : md.b)
      if (int(b.size()) != md.orders.nb) throw data_error("armax model: coefficient count does not match the orders");
  }
  return m;
}

// ---- SVG line charts -----------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> y;
};

/// Minimal standalone line chart. Non-finite points break the line.
inline std::string svg_line_chart(const std::string& title, const std::vector<std::string>& x_labels,
                                  const std::vector<Series>& series, const std::string& y_label) {
  const double W = 640, H = 400, left = 60, right = 150, top = 40, bottom = 50;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const std::size_t n = x_labels.size();
  auto X = [&](std::size_t i) { return left + (n > 1 ? (W - left - right) * double(i) / double(n - 1) : (W - left - right) / 2); };
  auto Y = [&](double v) { return top + (H - top - bottom) * (hi - v) / (hi - lo); };
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream o;
  char buf[160];
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, H - bottom, W - right, H - bottom);
  o << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, top, left, H - bottom);
  o << buf;
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>\n", left - 6, Y(v) + 4, v);
    o << buf;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">", X(i), H - bottom + 18);
    o << buf << x_labels[i] << "</text>\n";
  }
  std::snprintf(buf, sizeof buf, "<text x=\"16\" y=\"%g\" transform=\"rotate(-90 16 %g)\" text-anchor=\"middle\">", H / 2, H / 2);
  o << buf << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* col = colors[s % 8];
    std::string d;
    bool pen = false;
    for (std::size_t i = 0; i < std::min(n, series[s].y.size()); ++i) {
      const double v = series[s].y[i];
      if (!std::isfinite(v)) {
        pen = false;
        continue;
      }
      std::snprintf(buf, sizeof buf, "%c%.2f %.2f ", pen ? 'L' : 'M', X(i), Y(v));
      d += buf;
      pen = true;
    }
    o << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">", W - right + 10, top + 16.0 * (s + 1), col);
    o << buf << series[s].name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::vector<std::string> component_labels() { return {std::begin(kComponentNames), std::end(kComponentNames)}; }

inline std::vector<double> pcc_values(const MetricReport& r) {
  std::vector<double> out;
  for (const auto& p : r.pcc) out.push_back(p.value_or(std::nan("")));
  return out;
}

}  // namespace vbfs
