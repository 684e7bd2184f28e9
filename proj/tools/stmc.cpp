#include "CLI11.hpp"

#include "stmc/baselines.hpp"
#include "stmc/benchmark.hpp"
#include "stmc/config.hpp"
#include "stmc/counterfactual.hpp"
#include "stmc/kernels.hpp"
#include "stmc/model.hpp"
#include "stmc/panel.hpp"
#include "stmc/preprocess.hpp"
#include "stmc/report.hpp"
#include "stmc/sampler.hpp"
#include "stmc/simulate.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace stmc;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string g_invocation;

std::string header(std::uint64_t seed) { return "invocation: " + g_invocation + "\nseed: " + std::to_string(seed); }
std::string header() { return "invocation: " + g_invocation; }

std::string csv_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Applies repeated `key=value` overrides on top of a config.
void apply_overrides(Config& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

const std::vector<std::string> kSimKeys{"units", "times", "k_true", "n_treated", "t_start", "rho_s",
                                        "rho_t", "tau2", "alpha", "fe_variance", "seed"};

SimConfig sim_config(const Config& c) {
  c.require(kSimKeys);
  SimConfig s;
  s.N = c.get_int("units");
  s.T = c.get_int("times");
  s.K_true = c.get_int("k_true");
  s.n_treated = c.get_int("n_treated");
  s.t_start = c.get_int("t_start");
  s.rho_S = c.get_double("rho_s");
  s.rho_T = c.get_double("rho_t");
  s.tau2 = c.get_double("tau2");
  s.alpha = c.get_double("alpha");
  s.fe_variance = c.get_double("fe_variance");
  s.replicate_seed = static_cast<std::uint64_t>(c.get_int("seed"));
  s.effect_rate = c.get_double("effect_rate", 0.0);
  s.effect_denominator = c.get_double("effect_denominator", 1e5);
  return s;
}

SamplerConfig sampler_config(const Config& c) {
  SamplerConfig s;
  s.iterations = static_cast<int>(c.get_int("iterations", s.iterations));
  s.warmup = static_cast<int>(c.get_int("warmup", s.warmup));
  s.chains = static_cast<int>(c.get_int("chains", s.chains));
  s.target_accept = c.get_double("target_accept", s.target_accept);
  s.max_tree_depth = static_cast<int>(c.get_int("max_tree_depth", s.max_tree_depth));
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", 1));
  s.guard_threshold = c.get_double("guard_threshold", s.guard_threshold);
  s.threads = static_cast<int>(c.get_int("threads", 0));
  s.validate();
  return s;
}

ModelSpec model_spec(const Config& c, const PanelData& panel, const fs::path& config_dir) {
  ModelSpec m;
  try {
    m.family = parse_family(c.get_string("family"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  m.K = static_cast<int>(c.get_int("k"));
  m.nu = c.get_double("nu", m.nu);
  m.a1 = c.get_double("a1", m.a1);
  m.a2 = c.get_double("a2", m.a2);
  m.soft_sd = c.get_double("soft_sd", m.soft_sd);
  m.gamma_shape = c.get_double("gamma_shape", m.gamma_shape);
  m.gamma_rate = c.get_double("gamma_rate", m.gamma_rate);
  m.fe_sd = c.get_double("fe_sd", m.fe_sd);
  m.beta_sd = c.get_double("beta_sd", m.beta_sd);
  if (c.has("adjacency")) {
    fs::path p = c.get_string("adjacency");
    if (p.is_relative() && !fs::exists(p)) p = config_dir / p;
    m.spatial_adjacency = load_adjacency(p, panel.unit_ids);
  } else if (m.family != Family::Vanilla) {
    throw ConfigError("family " + std::string(family_name(m.family)) +
                      " needs a spatial adjacency: set 'adjacency = <edge list csv>'");
  }
  m.validate(panel.units(), panel.times());
  return m;
}

const std::vector<std::string> kModelKeys{"family",     "k",          "nu",         "a1",          "a2",
                                          "soft_sd",    "gamma_shape", "gamma_rate", "fe_sd",      "beta_sd",
                                          "adjacency",  "iterations", "warmup",     "chains",      "target_accept",
                                          "max_tree_depth", "seed",   "guard_threshold", "threads", "rhat"};

int cmd_simulate(const fs::path& config_path, const fs::path& out, const std::vector<std::string>& sets) {
  Config c = Config::load(config_path);
  apply_overrides(c, sets);
  std::vector<std::string> known = kSimKeys;
  known.insert(known.end(), {"effect_rate", "effect_denominator"});
  c.reject_unknown(known);
  const SimConfig sc = sim_config(c);
  const Simulation sim = generate(sc);
  fs::create_directories(out);
  const auto h = lines(header(sc.replicate_seed));
  {
    std::ofstream f(out / "panel.csv");
    write_panel(f, sim.panel, h);
  }
  {
    std::ofstream f(out / "truth.csv");
    for (const auto& l : h) f << "# " << l << '\n';
    f << "unit,time,y0,lambda\n";
    for (Eigen::Index i = 0; i < sim.panel.units(); ++i)
      for (Eigen::Index t = 0; t < sim.panel.times(); ++t) {
        std::ostringstream row;
        row.precision(17);
        row << sim.panel.unit_ids[i] << ',' << sim.panel.time_labels[t] << ',' << sim.truth.y0(i, t) << ','
            << sim.truth.lambda(i, t);
        f << row.str() << '\n';
      }
  }
  {
    std::ofstream f(out / "adjacency.csv");
    write_adjacency(f, fixture_adjacency(), sim.panel.unit_ids, h);
  }
  write_text(out / "sim_config.txt", "# " + lines(header(sc.replicate_seed))[0] + "\n# seed: " +
                                         std::to_string(sc.replicate_seed) + "\n" + c.echo());
  std::cout << "wrote " << sim.panel.units() * sim.panel.times() << " panel rows to " << (out / "panel.csv") << '\n';
  return 0;
}

int cmd_fit(const fs::path& panel_path, const fs::path& config_path, const fs::path& out,
            const std::vector<std::string>& sets) {
  Config c = Config::load(config_path);
  apply_overrides(c, sets);
  c.reject_unknown(kModelKeys);
  c.require({"family", "k"});
  const PanelData panel = load_panel(panel_path);
  const ModelSpec spec = model_spec(c, panel, config_path.parent_path());
  const SamplerConfig sc = sampler_config(c);
  const bool rank_normalized = c.get_string("rhat", "rank") != "plain";
  const MaskedPanel masked = mask_treated(panel);
  const Model model(spec, masked);
  const DrawSet draws = sample_model(model, sc);

  fs::create_directories(out);
  const std::string h = header(sc.seed);
  write_draws_csv(out / "draws.csv", draws, h);
  write_predictive_csv(out / "predictive.csv", draws, panel, h);
  write_pretreatment_csv(out / "pretreatment_att.csv", pretreatment_att(model, draws), h);
  const FitReport report = diagnose(draws, rank_normalized);
  write_fit_report(out / "diagnostics.csv", report, h);
  write_text(out / "model_config.txt", "# invocation: " + g_invocation + "\n" + c.echo());

  std::cout << "family " << family_name(spec.family) << ", K = " << spec.K << ", " << sc.chains << " chains x "
            << sc.kept() << " kept draws (kernels: " << kernels::backend_name(kernels::active_backend()) << ")\n"
            << "mean predictive R-hat " << report.mean_predictive_rhat << ", max parameter R-hat "
            << report.max_parameter_rhat << ", min bulk ESS " << report.min_parameter_ess << '\n'
            << "divergences " << report.divergences << " (warmup " << report.warmup_divergences
            << "), guarded draws " << report.guarded_fraction * 100.0 << "%\n";
  if (report.guarded_fraction > 0.1)
    std::cout << "warning: more than 10% of predictive draws hit the guard; the fit is unstable\n";
  return 0;
}

int cmd_att(const fs::path& fit_dir, const fs::path& panel_path, double denominator, bool groups) {
  const PanelData panel = load_panel(panel_path);
  const fs::path pred = fit_dir / "predictive.csv";
  if (!fs::exists(pred)) throw std::runtime_error("missing predictive draws: " + pred.string());
  const DrawSet draws = read_predictive_csv(pred, panel);
  AttOptions opt;
  opt.rate_denominator = denominator;
  AttResult r = att_per_time(panel, draws, opt);
  if (groups) att_by_group(r, panel, draws, opt);
  write_att_csv(fit_dir / "att.csv", r, header());

  std::vector<AttSeries> pre;
  if (fs::exists(fit_dir / "pretreatment_att.csv")) pre = read_pretreatment_csv(fit_dir / "pretreatment_att.csv");
  long start = r.per_time.front().time;
  write_text(fit_dir / "att.svg", att_svg(att_time_series(pre, r), start, "ATT per " + csv_number(denominator)));
  std::cout << "overall ATT " << r.overall.summary.mean << " [" << r.overall.summary.lo << ", "
            << r.overall.summary.hi << "] per " << denominator << "; dropped_fraction " << r.dropped_fraction
            << '\n';
  for (const auto& n : r.notices) std::cout << "note: " << n << '\n';
  if (r.unstable()) std::cout << "warning: more than 10% of draws were guard sentinels; results may be unreliable\n";
  return 0;
}

int cmd_benchmark(const fs::path& config_path, const fs::path& out, int workers, const std::vector<std::string>& sets) {
  Config c = Config::load(config_path);
  apply_overrides(c, sets);
  c.require({"methods", "replicates", "seed"});
  BenchmarkConfig b;
  for (const auto& m : c.get_list("methods")) b.methods.push_back(BenchmarkMethod::parse(m));
  b.replicates = static_cast<int>(c.get_int("replicates"));
  b.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  if (c.has("alphas")) {
    b.grid.alphas.clear();
    for (const auto& v : c.get_list("alphas")) b.grid.alphas.push_back(std::stod(v));
  }
  if (c.has("tau2s")) {
    b.grid.tau2s.clear();
    for (const auto& v : c.get_list("tau2s")) b.grid.tau2s.push_back(std::stod(v));
  }
  if (c.has("smoothed")) {
    b.grid.smoothed.clear();
    for (const auto& v : c.get_list("smoothed")) b.grid.smoothed.push_back(v == "1" || v == "true");
  }
  b.sampler.iterations = static_cast<int>(c.get_int("iterations", 1000));
  b.sampler.warmup = static_cast<int>(c.get_int("warmup", 500));
  b.sampler.chains = static_cast<int>(c.get_int("chains", 2));
  b.sampler.max_tree_depth = static_cast<int>(c.get_int("max_tree_depth", 10));
  b.als_ridge = c.get_double("als_ridge", b.als_ridge);
  b.cv_folds = static_cast<int>(c.get_int("cv_folds", b.cv_folds));
  b.smooth_df = static_cast<int>(c.get_int("smooth_df", b.smooth_df));
  b.workers = workers;
  const auto records = run_benchmark_checkpointed(b, out, header(b.seed));
  const auto rows = aggregate(records, b.grid);
  std::cout << "method,family,K";
  for (const auto& g : grid_cells(b.grid)) std::cout << ",alpha=" << g.alpha << "/tau2=" << g.tau2 << "/smoothed=" << g.smoothed;
  std::cout << '\n';
  for (const auto& r : rows) {
    std::cout << r.method << ',' << r.family << ',' << r.K;
    for (const auto& cell : r.cells) std::cout << ',' << cell.mean << " [" << cell.q25 << ", " << cell.q75 << "]";
    std::cout << '\n';
  }
  return 0;
}

int cmd_scree(const fs::path& panel_path, const fs::path& out) {
  const PanelData panel = load_panel(panel_path);
  const Eigen::VectorXd f = scree(scree_matrix(panel));
  fs::create_directories(out);
  std::ofstream csvf(out / "scree.csv");
  csvf << "# " << header() << "\n";
  csvf << "# treated cells replaced by the period mean of untreated units\n";
  csvf << "component,variance_fraction\n";
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    std::ostringstream v;
    v.precision(17);
    v << f(k);
    csvf << k + 1 << ',' << v.str() << '\n';
  }
  write_text(out / "scree.svg", scree_svg(f, "Variance explained per component"));
  std::cout << "first components:";
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(5, f.size()); ++k) std::cout << ' ' << f(k);
  std::cout << '\n';
  return 0;
}

int cmd_smooth(const fs::path& panel_path, const fs::path& out, int df) {
  const PanelData panel = load_panel(panel_path);
  std::vector<std::string> notices;
  const PanelData s = smooth_panel(panel, df, &notices);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  auto h = lines(header());
  h.push_back("spline df: " + std::to_string(df));
  for (const auto& n : notices) h.push_back(n);
  write_panel(f, s, h);
  for (const auto& n : notices) std::cout << "note: " << n << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_invocation += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Bayesian spatio-temporal matrix completion for rare-outcome panels"};
  app.require_subcommand(1);

  std::vector<std::string> sets;
  fs::path config, out, panel, fit_dir;
  int workers = 0, df = 5;
  double denominator = 1e5;
  bool no_groups = false;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic panel with known counterfactuals");
  sim->add_option("-c,--config", config, "Simulation config")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out", out, "Output directory")->required();
  sim->add_option("--set", sets, "Override a config key (key=value)");

  auto* fit = app.add_subcommand("fit", "Sample a model and the counterfactual predictive draws");
  fit->add_option("-p,--panel", panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("-c,--config", config, "Model and sampler config")->required()->check(CLI::ExistingFile);
  fit->add_option("-o,--out", out, "Output directory")->required();
  fit->add_option("--set", sets, "Override a config key (key=value)");

  auto* att = app.add_subcommand("att", "Summarise ATT from a fit directory");
  att->add_option("-f,--fit", fit_dir, "Fit directory")->required()->check(CLI::ExistingDirectory);
  att->add_option("-p,--panel", panel, "Panel CSV used for the fit")->required()->check(CLI::ExistingFile);
  att->add_option("--rate-denominator", denominator, "Person-years per reported rate")->check(CLI::PositiveNumber);
  att->add_flag("--no-groups", no_groups, "Skip per-group summaries");

  auto* bench = app.add_subcommand("benchmark", "Simulation sweep scoring percent bias (resumable)");
  bench->add_option("-c,--config", config, "Benchmark config")->required()->check(CLI::ExistingFile);
  bench->add_option("-o,--out", out, "Output directory")->required();
  bench->add_option("-w,--workers", workers, "Worker threads (default: STMC_WORKERS or all cores)");
  bench->add_option("--set", sets, "Override a config key (key=value)");

  auto* scr = app.add_subcommand("scree", "Variance explained by principal components of the rate matrix");
  scr->add_option("-p,--panel", panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  scr->add_option("-o,--out", out, "Output directory")->required();

  auto* smo = app.add_subcommand("smooth", "Poisson natural-spline smoothing of each unit's untreated series");
  smo->add_option("-p,--panel", panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  smo->add_option("-o,--out", out, "Output panel CSV")->required();
  smo->add_option("--df", df, "Spline degrees of freedom")->check(CLI::Range(2, 50));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) return cmd_simulate(config, out, sets);
    if (*fit) return cmd_fit(panel, config, out, sets);
    if (*att) return cmd_att(fit_dir, panel, denominator, !no_groups);
    if (*bench) return cmd_benchmark(config, out, workers, sets);
    if (*scr) return cmd_scree(panel, out);
    if (*smo) return cmd_smooth(panel, out, df);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const SamplerError& e) {
    std::cerr << "sampler error (chain " << e.chain() + 1 << "): " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
