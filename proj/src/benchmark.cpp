#include "stmc/benchmark.hpp"

#include "csv.hpp"
#include "stmc/baselines.hpp"
#include "stmc/preprocess.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>
#include <thread>
#include <tuple>

namespace stmc {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, int replicate, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), purpose};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string cell_name(const GridCell& c) {
  return "alpha=" + csv::fmt(c.alpha) + ";tau2=" + csv::fmt(c.tau2) + ";smoothed=" + (c.smoothed ? "1" : "0");
}

/// Rate-scale imputation at the held-out cells converted back to counts.
Eigen::VectorXd to_counts(const Eigen::MatrixXd& rates, const PanelData& panel, const Mask& observed,
                          double denominator) {
  const auto cells = masked_cells(observed);
  Eigen::VectorXd out(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t w = 0; w < cells.size(); ++w) {
    const auto [i, t] = cells[w];
    out(static_cast<Eigen::Index>(w)) = rates(i, t) * panel.populations(i, t) / denominator;
  }
  return out;
}

std::vector<double> lambda_grid(double top) {
  std::vector<double> grid;
  for (int k = 0; k < 10; ++k) grid.push_back(top * std::pow(0.5, k + 1));
  return grid;
}

}  // namespace

std::string BenchmarkMethod::method_name() const {
  switch (kind) {
    case MethodKind::Bayes: return "bayes";
    case MethodKind::Als: return "als";
    case MethodKind::SoftImpute: return "soft_impute";
    case MethodKind::NuclearFe: return "nuclear_fe";
    case MethodKind::Svt: return "svt";
    case MethodKind::Oracle: return "oracle";
    case MethodKind::Zero: return "zero";
  }
  return "unknown";
}

std::string BenchmarkMethod::family_name() const {
  return kind == MethodKind::Bayes ? std::string(stmc::family_name(family)) : std::string();
}

std::string BenchmarkMethod::label() const {
  std::string s = kind == MethodKind::Bayes ? family_name() : method_name();
  if (K > 0) s += ":" + std::to_string(K);
  return s;
}

BenchmarkMethod BenchmarkMethod::parse(const std::string& text) {
  BenchmarkMethod m;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  int k = 0;
  if (colon != std::string::npos) {
    const auto v = csv::to_long(text.substr(colon + 1));
    if (!v || *v < 1) throw std::invalid_argument("method '" + text + "': rank must be a positive integer");
    k = static_cast<int>(*v);
  }
  if (head == "oracle") m.kind = MethodKind::Oracle;
  else if (head == "zero") m.kind = MethodKind::Zero;
  else if (head == "soft_impute") m.kind = MethodKind::SoftImpute;
  else if (head == "nuclear_fe") m.kind = MethodKind::NuclearFe;
  else if (head == "svt") m.kind = MethodKind::Svt;
  else if (head == "als") m.kind = MethodKind::Als;
  else {
    m.kind = MethodKind::Bayes;
    try {
      m.family = parse_family(head);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("unknown method '" + text + "'");
    }
  }
  const bool ranked = m.kind == MethodKind::Bayes || m.kind == MethodKind::Als;
  if (ranked && k == 0) throw std::invalid_argument("method '" + text + "' needs a rank, e.g. " + head + ":3");
  if (!ranked && k != 0) throw std::invalid_argument("method '" + head + "' takes no rank");
  m.K = k;
  return m;
}

bool ReplicateRecord::same_job(const ReplicateRecord& o) const {
  return method == o.method && family == o.family && K == o.K && alpha == o.alpha && tau2 == o.tau2 &&
         smoothed == o.smoothed && replicate == o.replicate;
}

bool record_less(const ReplicateRecord& a, const ReplicateRecord& b) {
  // alpha descending puts the non-rare regime first.
  return std::make_tuple(-a.alpha, a.tau2, a.smoothed, a.method, a.family, a.K, a.replicate) <
         std::make_tuple(-b.alpha, b.tau2, b.smoothed, b.method, b.family, b.K, b.replicate);
}

std::vector<GridCell> grid_cells(const BenchmarkGrid& grid) {
  std::vector<GridCell> out;
  for (bool s : grid.smoothed)
    for (double a : grid.alphas)
      for (double t : grid.tau2s) out.push_back({a, t, s});
  return out;
}

Eigen::VectorXd estimate_counterfactual(const BenchmarkMethod& method, const Simulation& sim,
                                        const PanelData& fit_panel, const BenchmarkConfig& cfg,
                                        std::uint64_t job_seed) {
  const MaskedPanel masked = mask_treated(fit_panel);
  const auto cells = masked_cells(masked.observed);
  const auto W = static_cast<Eigen::Index>(cells.size());
  const RateMatrix rates = rates_from_panel(masked, cfg.rate_denominator);
  std::mt19937_64 rng(job_seed);

  switch (method.kind) {
    case MethodKind::Oracle: {
      Eigen::VectorXd out(W);
      for (Eigen::Index w = 0; w < W; ++w) out(w) = sim.truth.lambda(cells[w].first, cells[w].second);
      return out;
    }
    case MethodKind::Zero: return Eigen::VectorXd::Zero(W);
    case MethodKind::Als: {
      const auto c = als_complete(rates, method.K, cfg.als_ridge);
      return to_counts(c.fitted, fit_panel, masked.observed, cfg.rate_denominator);
    }
    case MethodKind::SoftImpute: {
      const auto grid = lambda_grid(top_singular_value(rates));
      const double lambda = cv_tune([](const RateMatrix& m, double l) { return soft_impute(m, l).fitted; }, rates,
                                    grid, cfg.cv_folds, rng);
      return to_counts(soft_impute(rates, lambda).fitted, fit_panel, masked.observed, cfg.rate_denominator);
    }
    case MethodKind::NuclearFe: {
      const auto grid = lambda_grid(top_singular_value(rates));
      const double lambda = cv_tune([](const RateMatrix& m, double l) { return nuclear_fe(m, l).fitted; }, rates,
                                    grid, cfg.cv_folds, rng);
      return to_counts(nuclear_fe(rates, lambda).fitted, fit_panel, masked.observed, cfg.rate_denominator);
    }
    case MethodKind::Svt: {
      const double nt = static_cast<double>(rates.rows() * rates.cols());
      const double threshold = 5.0 * std::sqrt(nt) * std::max(1.0, rates.values.cwiseAbs().maxCoeff() / 10.0);
      const double step = 1.2 * nt / static_cast<double>(masked.observed_count());
      return to_counts(svt(rates, threshold, std::min(step, 1.9), 5000, 1e-4).fitted, fit_panel, masked.observed,
                       cfg.rate_denominator);
    }
    case MethodKind::Bayes: {
      ModelSpec spec = cfg.model;
      spec.family = method.family;
      spec.K = method.K;
      if (method.family != Family::Vanilla && !spec.spatial_adjacency)
        spec.spatial_adjacency = cfg.base.adjacency ? *cfg.base.adjacency : fixture_adjacency();
      SamplerConfig sc = cfg.sampler;
      sc.seed = job_seed;
      sc.threads = 1;
      const DrawSet draws = run_chains(spec, masked, sc);
      const Eigen::VectorXd mean = draws.predictive_mean();
      if (W > 0 && !mean.allFinite()) throw std::runtime_error("every predictive draw hit the guard");
      return mean;
    }
  }
  throw std::logic_error("unhandled method");
}

std::vector<ReplicateRecord> run_benchmark(const BenchmarkConfig& cfg, std::vector<ReplicateRecord> done,
                                           const ProgressFn& on_record) {
  if (cfg.replicates < 0) throw std::invalid_argument("replicates must be non-negative");
  if (cfg.methods.empty()) throw std::invalid_argument("no benchmark methods given");
  struct Job {
    GridCell cell;
    int replicate;
    BenchmarkMethod method;
  };
  std::vector<Job> jobs;
  for (const auto& cell : grid_cells(cfg.grid))
    for (int r = cfg.first_replicate; r < cfg.first_replicate + cfg.replicates; ++r)
      for (const auto& m : cfg.methods) {
        ReplicateRecord key{m.method_name(), m.family_name(), m.K, cell.alpha, cell.tau2, cell.smoothed, r, 0.0, {}};
        const bool finished =
            std::any_of(done.begin(), done.end(), [&](const ReplicateRecord& d) { return d.same_job(key); });
        if (!finished) jobs.push_back({cell, r, m});
      }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      ReplicateRecord rec{job.method.method_name(), job.method.family_name(), job.method.K, job.cell.alpha,
                          job.cell.tau2, job.cell.smoothed, job.replicate, std::numeric_limits<double>::quiet_NaN(),
                          {}};
      try {
        SimConfig sc = cfg.base;
        sc.alpha = job.cell.alpha;
        sc.tau2 = job.cell.tau2;
        sc.replicate_seed = derive_seed(cfg.seed, job.replicate, 0);
        const Simulation sim = generate(sc);
        const PanelData fit_panel = job.cell.smoothed ? smooth_panel(sim.panel, cfg.smooth_df) : sim.panel;
        const Eigen::VectorXd est =
            estimate_counterfactual(job.method, sim, fit_panel, cfg, derive_seed(cfg.seed, job.replicate, 1));
        rec.bias_pct = percent_bias(est, sim.truth, mask_treated(sim.panel).observed);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      done.push_back(rec);
      if (on_record) on_record(rec);
    }
  };
  const int workers = std::max(1, std::min<int>(cfg.workers > 0 ? cfg.workers : default_workers(),
                                                static_cast<int>(std::max<std::size_t>(jobs.size(), 1))));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::sort(done.begin(), done.end(), record_less);
  return done;
}

std::vector<ReplicateRecord> run_benchmark_checkpointed(const BenchmarkConfig& cfg,
                                                        const std::filesystem::path& out_dir,
                                                        const std::string& header) {
  std::filesystem::create_directories(out_dir);
  const auto partial = out_dir / "replicates.partial.csv";
  std::vector<ReplicateRecord> done;
  if (std::filesystem::exists(partial)) {
    // Drop a trailing record left incomplete by an interrupted write.
    std::string content;
    {
      std::ifstream in(partial, std::ios::binary);
      content.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (!content.empty() && content.back() != '\n') {
      content.erase(content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1);
      std::ofstream(partial, std::ios::binary | std::ios::trunc) << content;
    }
    done = read_records_csv(partial);
  } else {
    write_records_csv(partial, {}, header);
  }
  std::ofstream append(partial, std::ios::app);
  std::ofstream failures(out_dir / "failures.log", std::ios::app);
  auto records = run_benchmark(cfg, std::move(done), [&](const ReplicateRecord& r) {
    append << r.method << ',' << r.family << ',' << r.K << ',' << csv::fmt(r.alpha) << ',' << csv::fmt(r.tau2) << ','
           << (r.smoothed ? 1 : 0) << ',' << r.replicate << ',' << csv::fmt(r.bias_pct) << '\n';
    append.flush();
    if (!r.error.empty()) {
      failures << r.method << ' ' << r.family << ' ' << r.K << " alpha=" << csv::fmt(r.alpha)
               << " tau2=" << csv::fmt(r.tau2) << " smoothed=" << r.smoothed << " replicate=" << r.replicate << ": "
               << r.error << '\n';
      failures.flush();
    }
  });
  write_records_csv(out_dir / "replicates.csv", records, header);
  write_aggregate_csv(out_dir / "aggregate.csv", aggregate(records, cfg.grid), cfg.grid, header);
  return records;
}

std::vector<AggregateRow> aggregate(const std::vector<ReplicateRecord>& records, const BenchmarkGrid& grid) {
  const auto cells = grid_cells(grid);
  std::vector<AggregateRow> rows;
  for (const auto& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& a) {
      return a.method == r.method && a.family == r.family && a.K == r.K;
    });
    if (it == rows.end()) {
      rows.push_back({r.method, r.family, r.K, std::vector<AggregateCell>(cells.size())});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const AggregateRow& a, const AggregateRow& b) {
    return std::tie(a.method, a.family, a.K) < std::tie(b.method, b.family, b.K);
  });
  for (auto& row : rows) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::vector<double> v;
      for (const auto& r : records)
        if (r.method == row.method && r.family == row.family && r.K == row.K && r.alpha == cells[c].alpha &&
            r.tau2 == cells[c].tau2 && r.smoothed == cells[c].smoothed && std::isfinite(r.bias_pct))
          v.push_back(r.bias_pct);
      AggregateCell& a = row.cells[c];
      a.n = static_cast<int>(v.size());
      if (v.empty()) {
        a.mean = a.q25 = a.q75 = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double s = 0.0;
      for (double x : v) s += x;
      a.mean = s / static_cast<double>(v.size());
      a.q25 = quantile(v, 0.25);
      a.q75 = quantile(v, 0.75);
    }
  }
  return rows;
}

void write_records_csv(const std::filesystem::path& path, const std::vector<ReplicateRecord>& records,
                       const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  out << "method,family,K,alpha,tau2,smoothed,replicate,bias_pct\n";
  for (const auto& r : records)
    out << r.method << ',' << r.family << ',' << r.K << ',' << csv::fmt(r.alpha) << ',' << csv::fmt(r.tau2) << ','
        << (r.smoothed ? 1 : 0) << ',' << r.replicate << ',' << csv::fmt(r.bias_pct) << '\n';
}

std::vector<ReplicateRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  long line_no = 0;
  std::vector<ReplicateRecord> out;
  if (!csv::next_record(in, line, line_no)) return out;
  if (csv::split(line) !=
      std::vector<std::string>{"method", "family", "K", "alpha", "tau2", "smoothed", "replicate", "bias_pct"})
    throw std::runtime_error(path.string() + ": unexpected header");
  while (csv::next_record(in, line, line_no)) {
    const auto f = csv::split(line);
    if (f.size() != 8) {
      // A record cut short by an interrupted write; it is recomputed.
      continue;
    }
    const auto k = csv::to_long(f[2]);
    const auto a = csv::to_double(f[3]);
    const auto t = csv::to_double(f[4]);
    const auto s = csv::to_long(f[5]);
    const auto r = csv::to_long(f[6]);
    const auto b = csv::to_double(f[7]);
    if (!k || !a || !t || !s || !r || !b) continue;
    out.push_back({f[0], f[1], static_cast<int>(*k), *a, *t, *s != 0, static_cast<int>(*r), *b, {}});
  }
  return out;
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows,
                         const BenchmarkGrid& grid, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  const auto cells = grid_cells(grid);
  out << "method,family,K";
  for (const auto& c : cells) {
    const auto name = cell_name(c);
    out << ',' << name << ":n," << name << ":mean," << name << ":q25," << name << ":q75";
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.family << ',' << r.K;
    for (const auto& c : r.cells)
      out << ',' << c.n << ',' << csv::fmt(c.mean) << ',' << csv::fmt(c.q25) << ',' << csv::fmt(c.q75);
    out << '\n';
  }
}

}  // namespace stmc
