#include "stmc/panel.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace stmc {

namespace {

std::string cell_ref(const std::string& unit, long time) {
  return "(" + unit + ", " + std::to_string(time) + ")";
}

bool parse_flag(std::string_view s, bool& out) {
  s = csv::trim(s);
  if (s == "1" || s == "true" || s == "TRUE" || s == "True") {
    out = true;
    return true;
  }
  if (s == "0" || s == "false" || s == "FALSE" || s == "False") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

void PanelData::validate() const {
  const auto n = units();
  const auto t = times();
  if (n == 0 || t == 0) throw PanelError("panel is empty");
  if (populations.rows() != n || populations.cols() != t || treated.rows() != n || treated.cols() != t)
    throw PanelError("panel grids have inconsistent shapes");
  if (static_cast<Eigen::Index>(unit_ids.size()) != n || static_cast<Eigen::Index>(group_of_unit.size()) != n)
    throw PanelError("unit labels do not match the number of rows");
  if (static_cast<Eigen::Index>(time_labels.size()) != t)
    throw PanelError("time labels do not match the number of columns");
  if (covariate_names.size() != covariates.size())
    throw PanelError("covariate names do not match covariate grids");
  for (const auto& x : covariates)
    if (x.rows() != n || x.cols() != t) throw PanelError("covariate grid has wrong shape");

  for (Eigen::Index i = 0; i < n; ++i) {
    bool seen_treated = false;
    for (Eigen::Index s = 0; s < t; ++s) {
      const double pop = populations(i, s);
      if (!(pop > 0.0) || !std::isfinite(pop))
        throw PanelError("non-positive population at " + cell_ref(unit_ids[i], time_labels[s]), unit_ids[i],
                         time_labels[s]);
      const double y = counts(i, s);
      if (!(y >= 0.0) || !std::isfinite(y))
        throw PanelError("negative or non-finite count at " + cell_ref(unit_ids[i], time_labels[s]), unit_ids[i],
                         time_labels[s]);
      if (!smoothed && y != std::floor(y))
        throw PanelError("non-integer count at " + cell_ref(unit_ids[i], time_labels[s]), unit_ids[i],
                         time_labels[s]);
      for (const auto& x : covariates)
        if (!std::isfinite(x(i, s)))
          throw PanelError("missing covariate at " + cell_ref(unit_ids[i], time_labels[s]), unit_ids[i],
                           time_labels[s]);
      if (treated(i, s)) {
        seen_treated = true;
      } else if (seen_treated) {
        throw PanelError("treatment is not absorbing: unit untreated after adoption at " +
                             cell_ref(unit_ids[i], time_labels[s]),
                         unit_ids[i], time_labels[s]);
      }
    }
  }
}

Eigen::Index PanelData::adoption_time(Eigen::Index i) const {
  for (Eigen::Index s = 0; s < times(); ++s)
    if (treated(i, s)) return s;
  return times();
}

PanelData load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw PanelError("cannot open panel file " + path.string());
  return parse_panel(in, schema);
}

PanelData parse_panel(std::istream& in, const PanelSchema& schema) {
  std::string line;
  long line_no = 0;
  if (!csv::next_record(in, line, line_no)) throw PanelError("panel file has no header row");
  const auto header = csv::split(line);

  auto column = [&](const std::string& name, bool required) -> long {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw PanelError("panel file is missing column '" + name + "'");
      return -1;
    }
    return static_cast<long>(it - header.begin());
  };
  const long c_unit = column(schema.unit, true);
  const long c_group = column(schema.group, false);
  const long c_time = column(schema.time, true);
  const long c_count = column(schema.count, true);
  const long c_pop = column(schema.population, true);
  const long c_treated = column(schema.treated, true);
  const long c_smoothed = column(schema.smoothed, false);
  std::vector<long> c_cov;
  std::vector<std::string> cov_names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].rfind(schema.covariate_prefix, 0) == 0) {
      c_cov.push_back(static_cast<long>(j));
      cov_names.push_back(header[j]);
    }
  }

  struct Row {
    double count;
    double population;
    bool treated;
    std::vector<double> cov;
  };
  std::vector<std::string> unit_order;
  std::unordered_map<std::string, std::string> group_of;
  std::map<long, int> times_seen;
  std::map<std::pair<std::string, long>, Row> cells;
  bool any_smoothed = false;

  while (csv::next_record(in, line, line_no)) {
    const auto f = csv::split(line);
    if (f.size() != header.size())
      throw PanelError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(f.size()));
    const std::string& unit = f[c_unit];
    const auto time = csv::to_long(f[c_time]);
    if (!time) throw PanelError("line " + std::to_string(line_no) + ": time is not an integer", unit);
    const auto count = csv::to_double(f[c_count]);
    const auto pop = csv::to_double(f[c_pop]);
    bool treated = false;
    bool smoothed_row = false;
    if (!count) throw PanelError("count is not numeric at " + cell_ref(unit, *time), unit, *time);
    if (!pop) throw PanelError("population is not numeric at " + cell_ref(unit, *time), unit, *time);
    if (!parse_flag(f[c_treated], treated))
      throw PanelError("treated flag is not 0/1 at " + cell_ref(unit, *time), unit, *time);
    if (c_smoothed >= 0 && !parse_flag(f[c_smoothed], smoothed_row))
      throw PanelError("smoothed flag is not 0/1 at " + cell_ref(unit, *time), unit, *time);
    any_smoothed = any_smoothed || smoothed_row;

    Row row{*count, *pop, treated, {}};
    for (long c : c_cov) {
      auto v = csv::to_double(f[c]);
      if (!v) throw PanelError("missing covariate '" + header[c] + "' at " + cell_ref(unit, *time), unit, *time);
      row.cov.push_back(*v);
    }
    if (!group_of.count(unit)) {
      unit_order.push_back(unit);
      group_of[unit] = c_group >= 0 ? f[c_group] : std::string{};
    }
    times_seen[*time] = 0;
    if (!cells.emplace(std::make_pair(unit, *time), std::move(row)).second)
      throw PanelError("duplicate cell " + cell_ref(unit, *time), unit, *time);
  }
  if (unit_order.empty()) throw PanelError("panel file has no data rows");

  PanelData p;
  const auto n = static_cast<Eigen::Index>(unit_order.size());
  const auto t = static_cast<Eigen::Index>(times_seen.size());
  p.unit_ids = unit_order;
  for (const auto& u : unit_order) p.group_of_unit.push_back(group_of[u]);
  for (auto& [time, idx] : times_seen) {
    idx = static_cast<int>(p.time_labels.size());
    p.time_labels.push_back(time);
  }
  p.covariate_names = cov_names;
  p.smoothed = any_smoothed;
  p.counts.resize(n, t);
  p.populations.resize(n, t);
  p.treated.resize(n, t);
  p.covariates.assign(cov_names.size(), Grid(n, t));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index s = 0; s < t; ++s) {
      auto it = cells.find({unit_order[i], p.time_labels[s]});
      if (it == cells.end())
        throw PanelError("incomplete panel: missing cell " + cell_ref(unit_order[i], p.time_labels[s]),
                         unit_order[i], p.time_labels[s]);
      p.counts(i, s) = it->second.count;
      p.populations(i, s) = it->second.population;
      p.treated(i, s) = it->second.treated;
      for (std::size_t c = 0; c < cov_names.size(); ++c) p.covariates[c](i, s) = it->second.cov[c];
    }
  }
  p.validate();
  return p;
}

void write_panel(std::ostream& out, const PanelData& panel, const std::vector<std::string>& header_comments,
                 const PanelSchema& schema) {
  for (const auto& c : header_comments) out << "# " << c << '\n';
  out << schema.unit << ',' << schema.group << ',' << schema.time << ',' << schema.count << ','
      << schema.population << ',' << schema.treated;
  for (const auto& name : panel.covariate_names) out << ',' << name;
  if (panel.smoothed) out << ',' << schema.smoothed;
  out << '\n';
  for (Eigen::Index i = 0; i < panel.units(); ++i) {
    for (Eigen::Index s = 0; s < panel.times(); ++s) {
      out << panel.unit_ids[i] << ',' << panel.group_of_unit[i] << ',' << panel.time_labels[s] << ','
          << csv::fmt(panel.counts(i, s)) << ',' << csv::fmt(panel.populations(i, s)) << ','
          << (panel.treated(i, s) ? 1 : 0);
      for (const auto& x : panel.covariates) out << ',' << csv::fmt(x(i, s));
      if (panel.smoothed) out << ",1";
      out << '\n';
    }
  }
}

MaskedPanel mask_treated(const PanelData& panel) {
  MaskedPanel m{panel, !panel.treated};
  return m;
}

PanelData select_units(const PanelData& panel, const std::vector<Eigen::Index>& rows) {
  PanelData out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto t = panel.times();
  out.counts.resize(n, t);
  out.populations.resize(n, t);
  out.treated.resize(n, t);
  out.covariates.assign(panel.covariates.size(), Grid(n, t));
  out.time_labels = panel.time_labels;
  out.covariate_names = panel.covariate_names;
  out.smoothed = panel.smoothed;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[r];
    out.counts.row(r) = panel.counts.row(i);
    out.populations.row(r) = panel.populations.row(i);
    out.treated.row(r) = panel.treated.row(i);
    for (std::size_t c = 0; c < panel.covariates.size(); ++c) out.covariates[c].row(r) = panel.covariates[c].row(i);
    out.unit_ids.push_back(panel.unit_ids[i]);
    out.group_of_unit.push_back(panel.group_of_unit[i]);
  }
  return out;
}

PanelData min_pretreatment_filter(const PanelData& panel, double min_cases) {
  if (min_cases < 0.0) throw std::invalid_argument("min_cases must be non-negative");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < panel.units(); ++i) {
    const auto start = panel.adoption_time(i);
    const double total = panel.counts.row(i).head(start).sum();
    if (total > min_cases) keep.push_back(i);
  }
  if (keep.empty())
    throw PanelError("min_pretreatment_filter dropped every unit (threshold " + csv::fmt(min_cases) + ")");
  return select_units(panel, keep);
}

}  // namespace stmc
