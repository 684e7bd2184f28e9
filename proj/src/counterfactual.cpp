#include "stmc/counterfactual.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace stmc {

namespace {

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Usable {
  std::vector<std::pair<std::size_t, Eigen::Index>> rows;  // (chain, draw)
  double dropped_fraction = 0.0;
};

Usable usable_draws(const DrawSet& d) {
  Usable u;
  std::size_t total = 0;
  for (std::size_t c = 0; c < d.predictive.size(); ++c)
    for (Eigen::Index m = 0; m < d.predictive[c].rows(); ++m) {
      ++total;
      const bool sentinel = c < d.guarded.size() && static_cast<std::size_t>(m) < d.guarded[c].size() && d.guarded[c][m];
      if (!sentinel) u.rows.emplace_back(c, m);
    }
  if (total == 0) throw AttError("no predictive draws");
  u.dropped_fraction = static_cast<double>(total - u.rows.size()) / static_cast<double>(total);
  if (u.rows.empty()) throw AttError("every predictive draw is a guard sentinel; no ATT can be computed");
  return u;
}

/// Column of each held-out cell in the predictive matrices.
std::map<std::pair<Eigen::Index, Eigen::Index>, Eigen::Index> cell_columns(const PanelData& panel,
                                                                            const DrawSet& d) {
  std::map<std::pair<Eigen::Index, Eigen::Index>, Eigen::Index> col;
  for (std::size_t w = 0; w < d.masked_cells.size(); ++w)
    col[{d.masked_cells[w].unit, d.masked_cells[w].time}] = static_cast<Eigen::Index>(w);
  for (Eigen::Index i = 0; i < panel.units(); ++i)
    for (Eigen::Index t = 0; t < panel.times(); ++t)
      if (panel.treated(i, t) && !col.count({i, t}))
        throw AttError("predictive draws do not cover treated cell (" + panel.unit_ids[i] + ", " +
                       std::to_string(panel.time_labels[t]) + ")");
  return col;
}

/// ATT draws at time t over the treated units selected by `keep`.
template <class Keep>
std::vector<double> att_draws_at(const PanelData& panel, const DrawSet& d, const Usable& u,
                                 const std::map<std::pair<Eigen::Index, Eigen::Index>, Eigen::Index>& col,
                                 Eigen::Index t, const AttOptions& opt, Keep keep) {
  const Grid& y1 = opt.substitute_y1 ? *opt.substitute_y1 : panel.counts;
  std::vector<Eigen::Index> units;
  for (Eigen::Index i = 0; i < panel.units(); ++i)
    if (panel.treated(i, t) && keep(i)) units.push_back(i);
  std::vector<double> out;
  if (units.empty()) return out;
  out.reserve(u.rows.size());
  const double scale = opt.rate_denominator / static_cast<double>(units.size());
  for (const auto& [c, m] : u.rows) {
    double s = 0.0;
    for (auto i : units) s += (y1(i, t) - d.predictive[c](m, col.at({i, t}))) / panel.populations(i, t);
    out.push_back(s * scale);
  }
  return out;
}

AttSeries make_series(std::string label, long time, std::vector<double> draws) {
  AttSeries s{std::move(label), time, std::move(draws), {}};
  s.summary = summarize(s.draws);
  return s;
}

std::vector<double> average_over(const std::vector<std::vector<double>>& series) {
  std::vector<double> out(series.front().size(), 0.0);
  for (const auto& s : series)
    for (std::size_t m = 0; m < out.size(); ++m) out[m] += s[m];
  for (double& v : out) v /= static_cast<double>(series.size());
  return out;
}

void check_options(const PanelData& panel, const AttOptions& opt) {
  if (!(opt.rate_denominator > 0.0)) throw std::invalid_argument("rate denominator must be positive");
  if (opt.substitute_y1 && (opt.substitute_y1->rows() != panel.units() || opt.substitute_y1->cols() != panel.times()))
    throw std::invalid_argument("substitute Y(1) grid does not match the panel shape");
}

}  // namespace

Summary summarize(const std::vector<double>& draws) {
  if (draws.empty()) throw std::invalid_argument("cannot summarize an empty draw vector");
  Summary s;
  double sum = 0.0;
  for (double v : draws) sum += v;
  s.mean = sum / static_cast<double>(draws.size());
  s.lo = quantile(draws, 0.025);
  s.hi = quantile(draws, 0.975);
  return s;
}

AttResult att_per_time(const PanelData& panel, const DrawSet& predictive, const AttOptions& options) {
  check_options(panel, options);
  const Usable u = usable_draws(predictive);
  const auto col = cell_columns(panel, predictive);
  AttResult r;
  r.rate_denominator = options.rate_denominator;
  r.dropped_fraction = u.dropped_fraction;
  for (Eigen::Index t = 0; t < panel.times(); ++t) {
    auto draws = att_draws_at(panel, predictive, u, col, t, options, [](Eigen::Index) { return true; });
    if (draws.empty()) continue;
    const long label = panel.time_labels[t];
    r.per_time.push_back(make_series(std::to_string(label), label, std::move(draws)));
  }
  if (r.per_time.empty()) throw AttError("the panel has no treated cells");
  r.overall = att_overall(r);
  return r;
}

AttSeries att_overall(const AttResult& result) {
  if (result.per_time.empty()) throw AttError("no per-time ATT draws to average");
  std::vector<std::vector<double>> series;
  for (const auto& s : result.per_time) series.push_back(s.draws);
  return make_series("overall", 0, average_over(series));
}

void att_by_group(AttResult& result, const PanelData& panel, const DrawSet& predictive, const AttOptions& options) {
  check_options(panel, options);
  const Usable u = usable_draws(predictive);
  const auto col = cell_columns(panel, predictive);
  std::vector<std::string> groups;
  for (const auto& g : panel.group_of_unit)
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  std::sort(groups.begin(), groups.end());
  result.per_group.clear();
  for (const auto& g : groups) {
    std::vector<std::vector<double>> series;
    for (Eigen::Index t = 0; t < panel.times(); ++t) {
      auto draws = att_draws_at(panel, predictive, u, col, t, options,
                                [&](Eigen::Index i) { return panel.group_of_unit[i] == g; });
      if (!draws.empty()) series.push_back(std::move(draws));
    }
    if (series.empty()) {
      result.notices.push_back("group " + g + " has no treated units; skipped");
      continue;
    }
    result.per_group.push_back(make_series(g, 0, average_over(series)));
  }
}

AttResult compute_att(const PanelData& panel, const DrawSet& predictive, const AttOptions& options) {
  AttResult r = att_per_time(panel, predictive, options);
  att_by_group(r, panel, predictive, options);
  return r;
}

std::vector<AttSeries> pretreatment_att(const Model& model, const DrawSet& draws) {
  const auto& data = model.panel().data;
  std::vector<Eigen::Index> adopters;
  for (Eigen::Index i = 0; i < data.units(); ++i)
    if (data.adoption_time(i) < data.times()) adopters.push_back(i);
  std::vector<AttSeries> out;
  if (adopters.empty()) return out;
  Eigen::Index last_pre = 0;
  for (auto i : adopters) last_pre = std::max(last_pre, data.adoption_time(i));
  for (Eigen::Index t = 0; t < last_pre; ++t) {
    AttSeries s;
    s.time = data.time_labels[t];
    s.label = std::to_string(s.time);
    out.push_back(std::move(s));
  }
  for (int c = 0; c < draws.num_chains(); ++c) {
    for (Eigen::Index m = 0; m < draws.chains[c].rows(); ++m) {
      const Grid eta = model.linear_predictor(draws.chains[c].row(m).transpose());
      for (Eigen::Index t = 0; t < last_pre; ++t) {
        double sum = 0.0;
        int n = 0;
        for (auto i : adopters) {
          if (data.adoption_time(i) <= t) continue;
          sum += (data.counts(i, t) - std::exp(eta(i, t))) / data.populations(i, t);
          ++n;
        }
        out[t].draws.push_back(n > 0 ? sum / n : 0.0);
      }
    }
  }
  for (auto& s : out) s.summary = summarize(s.draws);
  return out;
}

std::vector<AttSeries> att_time_series(const std::vector<AttSeries>& pre_per_capita, const AttResult& post) {
  std::vector<AttSeries> out;
  std::set<long> post_times;
  for (const auto& s : post.per_time) post_times.insert(s.time);
  for (const auto& s : pre_per_capita) {
    if (post_times.count(s.time)) continue;
    std::vector<double> scaled(s.draws);
    for (double& v : scaled) v *= post.rate_denominator;
    out.push_back(make_series(s.label, s.time, std::move(scaled)));
  }
  for (const auto& s : post.per_time) out.push_back(s);
  std::stable_sort(out.begin(), out.end(), [](const AttSeries& a, const AttSeries& b) { return a.time < b.time; });
  return out;
}

void write_att_csv(const std::filesystem::path& path, const AttResult& r, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  for (const auto& n : r.notices) csv::comment(out, n);
  out << "scope,label,att_mean,ci_lo,ci_hi,dropped_fraction\n";
  auto row = [&](const char* scope, const AttSeries& s) {
    out << scope << ',' << s.label << ',' << csv::fmt(s.summary.mean) << ',' << csv::fmt(s.summary.lo) << ','
        << csv::fmt(s.summary.hi) << ',' << csv::fmt(r.dropped_fraction) << '\n';
  };
  for (const auto& s : r.per_time) row("time", s);
  for (const auto& s : r.per_group) row("group", s);
  row("overall", r.overall);
}

void write_pretreatment_csv(const std::filesystem::path& path, const std::vector<AttSeries>& pre,
                            const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  out << "time,draw,att_per_capita\n";
  for (const auto& s : pre)
    for (std::size_t m = 0; m < s.draws.size(); ++m) out << s.time << ',' << m + 1 << ',' << csv::fmt(s.draws[m]) << '\n';
}

std::vector<AttSeries> read_pretreatment_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  long line_no = 0;
  if (!csv::next_record(in, line, line_no) ||
      csv::split(line) != std::vector<std::string>{"time", "draw", "att_per_capita"})
    throw std::runtime_error(path.string() + ": unexpected header");
  std::map<long, std::vector<double>> by_time;
  while (csv::next_record(in, line, line_no)) {
    const auto f = csv::split(line);
    const auto t = f.size() == 3 ? csv::to_long(f[0]) : std::nullopt;
    const auto v = f.size() == 3 ? csv::to_double(f[2]) : std::nullopt;
    if (!t || !v) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    by_time[*t].push_back(*v);
  }
  std::vector<AttSeries> out;
  for (auto& [t, d] : by_time) out.push_back(make_series(std::to_string(t), t, std::move(d)));
  return out;
}

}  // namespace stmc
