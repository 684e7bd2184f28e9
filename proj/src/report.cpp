#include "stmc/report.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace stmc {

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string tick_label(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

}  // namespace

FitReport diagnose(const DrawSet& draws, bool rank_normalized) {
  FitReport r;
  const Eigen::Index dim = draws.chains.empty() ? 0 : draws.chains.front().cols();
  r.max_parameter_rhat = 1.0;
  r.min_parameter_ess = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < dim; ++j) {
    const Eigen::MatrixXd d = draws.parameter(j);
    ParameterDiagnostic p;
    p.name = j < static_cast<Eigen::Index>(draws.parameter_names.size()) ? draws.parameter_names[j]
                                                                          : "q[" + std::to_string(j + 1) + "]";
    p.mean = d.mean();
    p.sd = std::sqrt((d.array() - p.mean).square().sum() / std::max<double>(1.0, static_cast<double>(d.size()) - 1));
    p.rhat = rhat(d, rank_normalized);
    p.ess = ess_bulk(d);
    r.max_parameter_rhat = std::max(r.max_parameter_rhat, p.rhat.value);
    r.min_parameter_ess = std::min(r.min_parameter_ess, p.ess.value);
    r.parameters.push_back(std::move(p));
  }
  if (dim == 0) r.min_parameter_ess = 0.0;

  if (!draws.masked_cells.empty() && !draws.predictive.empty()) {
    std::vector<std::vector<Eigen::Index>> keep(draws.predictive.size());
    Eigen::Index common = std::numeric_limits<Eigen::Index>::max();
    for (std::size_t c = 0; c < draws.predictive.size(); ++c) {
      for (Eigen::Index m = 0; m < draws.predictive[c].rows(); ++m)
        if (!draws.guarded[c][m]) keep[c].push_back(m);
      common = std::min<Eigen::Index>(common, static_cast<Eigen::Index>(keep[c].size()));
    }
    if (common >= 4) {
      double sum = 0.0;
      for (std::size_t w = 0; w < draws.masked_cells.size(); ++w) {
        Eigen::MatrixXd d(common, static_cast<Eigen::Index>(draws.predictive.size()));
        for (std::size_t c = 0; c < draws.predictive.size(); ++c)
          for (Eigen::Index m = 0; m < common; ++m)
            d(m, static_cast<Eigen::Index>(c)) = draws.predictive[c](keep[c][m], static_cast<Eigen::Index>(w));
        r.predictive_rhat.push_back(rhat(d, rank_normalized));
        sum += r.predictive_rhat.back().value;
      }
      r.mean_predictive_rhat = sum / static_cast<double>(r.predictive_rhat.size());
    } else {
      r.mean_predictive_rhat = std::numeric_limits<double>::quiet_NaN();
    }
  }
  for (const auto& s : draws.stats) {
    r.divergences += s.divergences;
    r.warmup_divergences += s.warmup_divergences;
    r.step_sizes.push_back(s.step_size);
  }
  r.guarded_fraction = draws.guarded_fraction();
  return r;
}

void write_fit_report(const std::filesystem::path& path, const FitReport& r, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  std::ostringstream summary;
  summary << "mean_predictive_rhat = " << csv::fmt(r.mean_predictive_rhat) << '\n'
          << "max_parameter_rhat = " << csv::fmt(r.max_parameter_rhat) << '\n'
          << "min_parameter_ess = " << csv::fmt(r.min_parameter_ess) << '\n'
          << "divergences = " << r.divergences << '\n'
          << "warmup_divergences = " << r.warmup_divergences << '\n'
          << "guarded_fraction = " << csv::fmt(r.guarded_fraction) << '\n';
  summary << "step_sizes =";
  for (double s : r.step_sizes) summary << ' ' << csv::fmt(s);
  csv::comment(out, summary.str());
  out << "parameter,mean,sd,rhat,ess_bulk,flagged\n";
  for (const auto& p : r.parameters)
    out << '"' << p.name << "\"," << csv::fmt(p.mean) << ',' << csv::fmt(p.sd) << ',' << csv::fmt(p.rhat.value) << ','
        << csv::fmt(p.ess.value) << ',' << (p.rhat.flagged || p.ess.flagged ? 1 : 0) << '\n';
}

std::string att_svg(const std::vector<AttSeries>& series, long treatment_start, const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << escape(title) << "</text>\n";
  if (series.empty()) {
    s << "</svg>\n";
    return s.str();
  }
  double tmin = static_cast<double>(series.front().time), tmax = tmin;
  double ymin = 0.0, ymax = 0.0;
  for (const auto& p : series) {
    tmin = std::min(tmin, static_cast<double>(p.time));
    tmax = std::max(tmax, static_cast<double>(p.time));
    ymin = std::min({ymin, p.summary.lo, p.summary.mean});
    ymax = std::max({ymax, p.summary.hi, p.summary.mean});
  }
  if (tmax == tmin) tmax = tmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto X = [&](double t) { return kLeft + (t - tmin) / (tmax - tmin) * pw; };
  auto Y = [&](double v) { return kTop + (ymax - v) / (ymax - ymin) * ph; };

  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
    << num(kTop + ph) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
    << num(kTop + ph) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    s << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(Y(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
      << "</text>\n";
  }
  for (const auto& p : series)
    s << "<text x=\"" << num(X(static_cast<double>(p.time))) << "\" y=\"" << num(kTop + ph + 16)
      << "\" text-anchor=\"middle\">" << p.time << "</text>\n";
  s << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
    << "\" text-anchor=\"middle\">time</text>\n";
  s << "<text x=\"16\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(kTop + ph / 2) << ")\">ATT (rate)</text>\n";
  s << "</g>\n";

  // Interval band.
  s << "<polygon class=\"band\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (const auto& p : series) s << num(X(static_cast<double>(p.time))) << ',' << num(Y(p.summary.hi)) << ' ';
  for (auto it = series.rbegin(); it != series.rend(); ++it)
    s << num(X(static_cast<double>(it->time))) << ',' << num(Y(it->summary.lo)) << ' ';
  s << "\"/>\n";
  s << "<line class=\"zero\" x1=\"" << num(kLeft) << "\" y1=\"" << num(Y(0.0)) << "\" x2=\"" << num(kLeft + pw)
    << "\" y2=\"" << num(Y(0.0)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s << "<polyline class=\"mean\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& p : series) s << num(X(static_cast<double>(p.time))) << ',' << num(Y(p.summary.mean)) << ' ';
  s << "\"/>\n";
  const double xs = X(static_cast<double>(treatment_start));
  s << "<line class=\"treatment-start\" x1=\"" << num(xs) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(xs)
    << "\" y2=\"" << num(kTop + ph) << "\" stroke=\"firebrick\" stroke-width=\"1.5\"/>\n";
  s << "</svg>\n";
  return s.str();
}

std::string scree_svg(const Eigen::VectorXd& fractions, const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << escape(title) << "</text>\n";
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const Eigen::Index n = fractions.size();
  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
    << num(kTop + ph) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    s << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(kTop + ph * (1 - v) + 4) << "\" text-anchor=\"end\">"
      << tick_label(v) << "</text>\n";
  }
  const double slot = n > 0 ? pw / static_cast<double>(n) : pw;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = ph * std::clamp(fractions(k), 0.0, 1.0);
    s << "<rect class=\"bar\" x=\"" << num(kLeft + slot * k + slot * 0.1) << "\" y=\"" << num(kTop + ph - h)
      << "\" width=\"" << num(slot * 0.8) << "\" height=\"" << num(h) << "\" fill=\"steelblue\" data-fraction=\""
      << csv::fmt(fractions(k)) << "\"/>\n";
    s << "<text x=\"" << num(kLeft + slot * (k + 0.5)) << "\" y=\"" << num(kTop + ph + 16)
      << "\" text-anchor=\"middle\">" << k + 1 << "</text>\n";
  }
  s << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
    << "\" text-anchor=\"middle\">component</text>\n";
  s << "</g>\n</svg>\n";
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace stmc
