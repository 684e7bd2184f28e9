#include "stmc/sampler.hpp"

#include "csv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace stmc {

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("chains must be at least 1");
  if (warmup < 0) throw std::invalid_argument("warmup must be non-negative");
  if (warmup >= iterations) throw std::invalid_argument("warmup must be smaller than iterations");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw std::invalid_argument("target_accept must lie in (0, 1)");
  if (max_tree_depth < 1) throw std::invalid_argument("max_tree_depth must be at least 1");
  if (kept() < 4) throw std::invalid_argument("at least 4 post-warmup iterations are required");
}

NutsSettings SamplerConfig::nuts() const {
  NutsSettings s;
  s.warmup = warmup;
  s.iterations = iterations;
  s.max_tree_depth = max_tree_depth;
  s.target_accept = target_accept;
  return s;
}

Eigen::MatrixXd DrawSet::parameter(Eigen::Index j) const {
  Eigen::MatrixXd out(kept(), num_chains());
  for (int c = 0; c < num_chains(); ++c) out.col(c) = chains[c].col(j);
  return out;
}

Eigen::MatrixXd DrawSet::predictive_cell(std::size_t cell) const {
  Eigen::MatrixXd out(kept(), num_chains());
  for (int c = 0; c < num_chains(); ++c) out.col(c) = predictive[c].col(static_cast<Eigen::Index>(cell));
  return out;
}

int DrawSet::divergences() const {
  int n = 0;
  for (const auto& s : stats) n += s.divergences;
  return n;
}

double DrawSet::guarded_fraction() const {
  std::size_t total = 0, hit = 0;
  for (const auto& g : guarded) {
    total += g.size();
    hit += static_cast<std::size_t>(std::count(g.begin(), g.end(), true));
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

Eigen::VectorXd DrawSet::predictive_mean() const {
  const auto W = static_cast<Eigen::Index>(masked_cells.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(W);
  double n = 0.0;
  for (std::size_t c = 0; c < predictive.size(); ++c) {
    for (Eigen::Index m = 0; m < predictive[c].rows(); ++m) {
      if (guarded[c][m]) continue;
      sum += predictive[c].row(m).transpose();
      n += 1.0;
    }
  }
  if (n == 0.0) return Eigen::VectorXd::Constant(W, std::numeric_limits<double>::quiet_NaN());
  return sum / n;
}

int default_workers() {
  if (const char* env = std::getenv("STMC_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::mt19937_64 chain_rng(std::uint64_t seed, int chain, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), purpose};
  return std::mt19937_64(seq);
}

namespace {

template <class Job>
void parallel_for(int n, int workers, Job job) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

DrawSet run_chains(const LogDensityModel& target, const std::function<Eigen::VectorXd(int, std::mt19937_64&)>& init,
                   const SamplerConfig& cfg, std::vector<std::string> names) {
  cfg.validate();
  const NutsSettings settings = cfg.nuts();
  DrawSet out;
  out.parameter_names = std::move(names);
  out.chains.resize(cfg.chains);
  out.stats.resize(cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);

  parallel_for(cfg.chains, cfg.threads > 0 ? cfg.threads : default_workers(), [&](int c) {
    try {
      auto rng = chain_rng(cfg.seed, c);
      const Eigen::VectorXd q0 = init(c, rng);
      ChainResult r = run_nuts_chain(target, q0, settings, rng, c);
      out.chains[c] = std::move(r.draws);
      out.stats[c] = std::move(r.stats);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

DrawSet sample_model(const Model& model, const SamplerConfig& cfg) {
  const CenteredTarget target(model);
  const auto& layout = model.layout();
  DrawSet out = run_chains(
      target,
      [&](int, std::mt19937_64& rng) {
        return target.from_model(init_state(model.spec(), model.panel(), rng).pack(layout));
      },
      cfg, layout.names());
  for (auto& chain : out.chains)
    for (Eigen::Index r = 0; r < chain.rows(); ++r) chain.row(r) = target.to_model(chain.row(r).transpose()).transpose();
  posterior_predictive(out, model, cfg);
  return out;
}

DrawSet run_chains(const ModelSpec& spec, const MaskedPanel& panel, const SamplerConfig& cfg) {
  spec.validate(panel.units(), panel.times());
  const Model model(spec, panel);
  return sample_model(model, cfg);
}

void posterior_predictive(DrawSet& draws, const Model& model, const SamplerConfig& cfg) {
  const auto& panel = model.panel();
  draws.masked_cells.clear();
  for (Eigen::Index i = 0; i < panel.units(); ++i)
    for (Eigen::Index t = 0; t < panel.times(); ++t)
      if (!panel.observed(i, t)) draws.masked_cells.push_back({i, t});
  const auto W = static_cast<Eigen::Index>(draws.masked_cells.size());
  const auto log_phi_index = model.layout().log_phi_nb;

  draws.predictive.assign(draws.num_chains(), Eigen::MatrixXd());
  draws.guarded.assign(draws.num_chains(), std::vector<bool>());
  for (int c = 0; c < draws.num_chains(); ++c) {
    auto rng = chain_rng(cfg.seed, c, 1);
    const auto& chain = draws.chains[c];
    Eigen::MatrixXd pred(chain.rows(), W);
    std::vector<bool> guard(chain.rows(), false);
    for (Eigen::Index m = 0; m < chain.rows(); ++m) {
      if (W == 0) continue;
      const Eigen::VectorXd q = chain.row(m).transpose();
      const Grid eta = model.linear_predictor(q);
      bool fired = false;
      for (const auto& cell : draws.masked_cells) {
        const double e = eta(cell.unit, cell.time);
        if (!(e <= cfg.guard_threshold)) fired = true;
      }
      if (fired) {
        pred.row(m).setConstant(-1.0);
        guard[m] = true;
        continue;
      }
      const double phi = std::exp(q(log_phi_index));
      for (Eigen::Index w = 0; w < W; ++w) {
        const auto& cell = draws.masked_cells[w];
        const double mu = std::exp(eta(cell.unit, cell.time));
        double rate = mu;
        if (phi < 1e8) rate = std::gamma_distribution<double>(phi, mu / phi)(rng);
        pred(m, w) = rate > 0.0 ? static_cast<double>(std::poisson_distribution<long long>(rate)(rng)) : 0.0;
      }
    }
    draws.predictive[c] = std::move(pred);
    draws.guarded[c] = std::move(guard);
  }
}

void write_draws_csv(const std::filesystem::path& path, const DrawSet& draws, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  out << "chain,iter,parameter,value\n";
  for (int c = 0; c < draws.num_chains(); ++c) {
    const auto& d = draws.chains[c];
    for (Eigen::Index m = 0; m < d.rows(); ++m)
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        const std::string name = j < static_cast<Eigen::Index>(draws.parameter_names.size())
                                     ? draws.parameter_names[j]
                                     : "q[" + std::to_string(j + 1) + "]";
        out << c + 1 << ',' << m + 1 << ",\"" << name << "\"," << csv::fmt(d(m, j)) << '\n';
      }
  }
}

void write_predictive_csv(const std::filesystem::path& path, const DrawSet& draws, const PanelData& panel,
                          const std::string& header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::comment(out, header);
  out << "chain,iter,unit,time,y0_draw\n";
  for (std::size_t c = 0; c < draws.predictive.size(); ++c) {
    const auto& p = draws.predictive[c];
    for (Eigen::Index m = 0; m < p.rows(); ++m)
      for (std::size_t w = 0; w < draws.masked_cells.size(); ++w) {
        const auto& cell = draws.masked_cells[w];
        out << c + 1 << ',' << m + 1 << ',' << panel.unit_ids[cell.unit] << ',' << panel.time_labels[cell.time]
            << ',' << csv::fmt(p(m, static_cast<Eigen::Index>(w))) << '\n';
      }
  }
}

DrawSet read_predictive_csv(const std::filesystem::path& path, const PanelData& panel) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictive draws " + path.string());
  DrawSet out;
  std::map<std::pair<std::string, long>, std::size_t> column;
  for (Eigen::Index i = 0; i < panel.units(); ++i)
    for (Eigen::Index t = 0; t < panel.times(); ++t)
      if (panel.treated(i, t)) {
        column[{panel.unit_ids[i], panel.time_labels[t]}] = out.masked_cells.size();
        out.masked_cells.push_back({i, t});
      }
  const auto W = out.masked_cells.size();

  std::string line;
  long line_no = 0;
  if (!csv::next_record(in, line, line_no)) throw std::runtime_error(path.string() + ": empty predictive file");
  if (csv::split(line) != std::vector<std::string>{"chain", "iter", "unit", "time", "y0_draw"})
    throw std::runtime_error(path.string() + ": unexpected predictive header");
  std::map<std::pair<long, long>, std::vector<double>> rows;
  while (csv::next_record(in, line, line_no)) {
    const auto f = csv::split(line);
    const auto chain = f.size() == 5 ? csv::to_long(f[0]) : std::nullopt;
    const auto iter = f.size() == 5 ? csv::to_long(f[1]) : std::nullopt;
    const auto time = f.size() == 5 ? csv::to_long(f[3]) : std::nullopt;
    const auto value = f.size() == 5 ? csv::to_double(f[4]) : std::nullopt;
    if (!chain || !iter || !time || !value || *chain < 1 || *iter < 1)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed predictive row");
    auto it = column.find({f[2], *time});
    if (it == column.end())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": cell (" + f[2] + ", " +
                               std::to_string(*time) + ") is not a treated cell of the panel");
    auto& row = rows[{*chain, *iter}];
    if (row.empty()) row.assign(W, std::numeric_limits<double>::quiet_NaN());
    row[it->second] = *value;
  }
  if (rows.empty() && W > 0) throw std::runtime_error(path.string() + ": no predictive draws");

  std::map<long, std::vector<std::vector<double>>> by_chain;
  for (auto& [key, row] : rows) {
    for (double v : row)
      if (std::isnan(v))
        throw std::runtime_error(path.string() + ": chain " + std::to_string(key.first) + " iteration " +
                                 std::to_string(key.second) + " does not cover every treated cell");
    by_chain[key.first].push_back(std::move(row));
  }
  for (auto& [chain, list] : by_chain) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(list.size()), static_cast<Eigen::Index>(W));
    std::vector<bool> guard(list.size(), false);
    for (std::size_t m = 0; m < list.size(); ++m) {
      bool sentinel = true;
      for (std::size_t w = 0; w < W; ++w) {
        p(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(w)) = list[m][w];
        sentinel = sentinel && list[m][w] == -1.0;
      }
      guard[m] = sentinel && W > 0;
    }
    out.predictive.push_back(std::move(p));
    out.guarded.push_back(std::move(guard));
  }
  return out;
}

}  // namespace stmc
