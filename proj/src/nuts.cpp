#include "stmc/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stmc {

namespace {

struct PhasePoint {
  Eigen::VectorXd q, p, grad;
  double log_density = 0.0;
};

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double delta) : delta_(delta) {}
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0.0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  double learn(double accept_stat) {
    counter_ += 1.0;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
    const double x_eta = std::pow(counter_, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kKappa = 0.75;
  static constexpr double kT0 = 10.0;
  double delta_;
  double mu_ = 0.0;
  double counter_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
};

/// Welford variance over doubling windows between an initial and a terminal
/// buffer, with the usual shrinkage toward 1e-3.
class MetricAdapter {
 public:
  MetricAdapter(int warmup, Eigen::Index dim) : warmup_(warmup), mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {
    init_buffer_ = 75;
    term_buffer_ = 50;
    base_window_ = 25;
    if (warmup < 20) {
      enabled_ = false;
    } else if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_end_ = init_buffer_ + window_size_ - 1;
  }

  bool update(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric) {
    if (!enabled_) return false;
    const bool in_window = counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
    const bool end_window = counter_ == next_window_end_ && counter_ != warmup_;
    if (in_window) {
      n_ += 1.0;
      const Eigen::VectorXd d = q - mean_;
      mean_ += d / n_;
      m2_ += d.cwiseProduct(q - mean_);
    }
    bool updated = false;
    if (end_window) {
      next_window();
      const Eigen::VectorXd var = m2_ / std::max(n_ - 1.0, 1.0);
      inv_metric = (n_ / (n_ + 5.0)) * var.array() + 1e-3 * (5.0 / (n_ + 5.0));
      n_ = 0.0;
      mean_.setZero();
      m2_.setZero();
      updated = true;
    }
    ++counter_;
    return updated;
  }

 private:
  void next_window() {
    if (next_window_end_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_end_ = counter_ + window_size_;
    if (next_window_end_ != warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_end_ + 2 * window_size_;
      if (boundary >= warmup_ - term_buffer_) next_window_end_ = warmup_ - term_buffer_ - 1;
    }
  }

  int warmup_;
  bool enabled_ = true;
  int init_buffer_, term_buffer_, base_window_, window_size_, next_window_end_;
  int counter_ = 0;
  double n_ = 0.0;
  Eigen::VectorXd mean_, m2_;
};

class Nuts {
 public:
  Nuts(const LogDensityModel& target, const NutsSettings& settings, std::mt19937_64& rng, int chain)
      : target_(target), settings_(settings), rng_(rng), chain_(chain),
        inv_metric_(Eigen::VectorXd::Ones(target.dimension())) {}

  void set_step_size(double e) { step_ = e; }
  double step_size() const { return step_; }
  Eigen::VectorXd& inv_metric() { return inv_metric_; }

  void evaluate(PhasePoint& z) const {
    z.log_density = target_.log_density_gradient(z.q, z.grad);
    if (std::isnan(z.log_density)) z.log_density = -std::numeric_limits<double>::infinity();
  }

  double kinetic(const PhasePoint& z) const { return 0.5 * z.p.cwiseProduct(z.p).dot(inv_metric_); }
  double hamiltonian(const PhasePoint& z) const { return -z.log_density + kinetic(z); }
  Eigen::VectorXd velocity(const PhasePoint& z) const { return inv_metric_.cwiseProduct(z.p); }

  void sample_momentum(PhasePoint& z) {
    for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p(i) = normal_(rng_) / std::sqrt(inv_metric_(i));
  }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * velocity(z);
    evaluate(z);
    z.p += 0.5 * eps * z.grad;
  }

  /// Doubles or halves the step size until one leapfrog step crosses an
  /// acceptance probability of 0.8.
  void init_step_size(const PhasePoint& start) {
    if (step_ == 0.0 || step_ > 1e7 || std::isnan(step_)) return;
    PhasePoint z = start;
    sample_momentum(z);
    double h0 = hamiltonian(z);
    leapfrog(z, step_);
    double h = hamiltonian(z);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    const int direction = (h0 - h) > std::log(0.8) ? 1 : -1;
    while (true) {
      z = start;
      sample_momentum(z);
      h0 = hamiltonian(z);
      leapfrog(z, step_);
      h = hamiltonian(z);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      const double delta_h = h0 - h;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw SamplerError("step size diverged to infinity in chain " + std::to_string(chain_), chain_);
      if (step_ < 1e-300)
        throw SamplerError("step size underflow while initialising chain " + std::to_string(chain_), chain_);
    }
  }

  struct Transition {
    double accept_stat;
    int depth;
    int n_leapfrog;
    bool divergent;
  };

  Transition transition(PhasePoint& current) {
    PhasePoint z = current;
    sample_momentum(z);
    const double h0 = hamiltonian(z);

    PhasePoint z_fwd = z, z_bck = z, z_sample = z, z_propose = z;
    Eigen::VectorXd p_sharp = velocity(z);
    Eigen::VectorXd p_fwd_fwd = z.p, p_sharp_fwd_fwd = p_sharp;
    Eigen::VectorXd p_fwd_bck = z.p, p_sharp_fwd_bck = p_sharp;
    Eigen::VectorXd p_bck_fwd = z.p, p_sharp_bck_fwd = p_sharp;
    Eigen::VectorXd p_bck_bck = z.p, p_sharp_bck_bck = p_sharp;
    Eigen::VectorXd rho = z.p;
    double log_sum_weight = 0.0;
    int depth = 0;
    n_leapfrog_ = 0;
    sum_metro_prob_ = 0.0;
    divergent_ = false;
    const Eigen::Index dim = z.q.size();

    while (depth < settings_.max_tree_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(dim);
      bool valid_subtree = false;
      double log_sum_weight_subtree = -std::numeric_limits<double>::infinity();

      if (uniform_(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        PhasePoint zz = z_fwd;
        valid_subtree = build_tree(depth, zz, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                                   p_fwd_fwd, h0, 1.0, log_sum_weight_subtree);
        z_fwd = std::move(zz);
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        PhasePoint zz = z_bck;
        valid_subtree = build_tree(depth, zz, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                                   p_bck_bck, h0, -1.0, log_sum_weight_subtree);
        z_bck = std::move(zz);
      }
      if (!valid_subtree) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform_(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Eigen::VectorXd rho_ext = rho_bck + p_fwd_bck;
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
      rho_ext = rho_fwd + p_bck_fwd;
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
      if (!persist) break;
    }
    current.q = z_sample.q;
    current.grad = z_sample.grad;
    current.log_density = z_sample.log_density;
    const double accept = n_leapfrog_ > 0 ? sum_metro_prob_ / n_leapfrog_ : 0.0;
    return {accept, depth, n_leapfrog_, divergent_};
  }

 private:
  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double h0, double sign, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(z, sign * step_);
      ++n_leapfrog_;
      double h = hamiltonian(z);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if ((h - h0) > settings_.max_energy_error) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob_ += (h0 - h > 0.0) ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      p_sharp_beg = velocity(z);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !divergent_;
    }
    const Eigen::Index dim = z.q.size();

    double log_sum_weight_init = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_init_end(dim), p_sharp_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    const bool valid_init = build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                                       p_init_end, h0, sign, log_sum_weight_init);
    if (!valid_init) return false;

    PhasePoint z_propose_final = z;
    double log_sum_weight_final = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_final_beg(dim), p_sharp_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    const bool valid_final = build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                                        p_final_beg, p_end, h0, sign, log_sum_weight_final);
    if (!valid_final) return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    Eigen::VectorXd rho_ext = rho_init + p_final_beg;
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_ext);
    rho_ext = rho_final + p_init_end;
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }

  const LogDensityModel& target_;
  const NutsSettings& settings_;
  std::mt19937_64& rng_;
  int chain_;
  Eigen::VectorXd inv_metric_;
  double step_ = 1.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  int n_leapfrog_ = 0;
  double sum_metro_prob_ = 0.0;
  bool divergent_ = false;
};

}  // namespace

ChainResult run_nuts_chain(const LogDensityModel& target, const Eigen::VectorXd& init, const NutsSettings& settings,
                           std::mt19937_64& rng, int chain_index) {
  if (settings.warmup < 0 || settings.iterations <= settings.warmup)
    throw std::invalid_argument("iterations must exceed warmup");
  const Eigen::Index dim = target.dimension();
  if (init.size() != dim) throw std::invalid_argument("initial state has the wrong dimension");

  Nuts nuts(target, settings, rng, chain_index);
  PhasePoint z;
  z.q = init;
  z.p = Eigen::VectorXd::Zero(dim);
  nuts.evaluate(z);
  if (!std::isfinite(z.log_density) || !z.grad.allFinite())
    throw SamplerError("non-finite initial log posterior in chain " + std::to_string(chain_index), chain_index);

  nuts.set_step_size(settings.initial_step_size);
  nuts.init_step_size(z);
  StepSizeAdapter step_adapt(settings.target_accept);
  step_adapt.set_mu(std::log(10.0 * nuts.step_size()));
  step_adapt.restart();
  MetricAdapter metric_adapt(settings.warmup, dim);

  ChainResult out;
  const int kept = settings.iterations - settings.warmup;
  out.draws.resize(kept, dim);
  out.stats.accept_stat.reserve(kept);

  int warmup_divergent_run = 0;
  for (int it = 0; it < settings.iterations; ++it) {
    const auto tr = nuts.transition(z);
    if (it < settings.warmup) {
      if (tr.divergent) ++out.stats.warmup_divergences;
      warmup_divergent_run = tr.divergent ? warmup_divergent_run + 1 : 0;
      nuts.set_step_size(step_adapt.learn(tr.accept_stat));
      if (metric_adapt.update(z.q, nuts.inv_metric())) {
        nuts.init_step_size(z);
        step_adapt.set_mu(std::log(10.0 * nuts.step_size()));
        step_adapt.restart();
      }
      if (nuts.step_size() < 1e-12 || (settings.warmup >= 100 && warmup_divergent_run >= settings.warmup / 2))
        throw SamplerError("step size underflow during warmup of chain " + std::to_string(chain_index) +
                               " (every transition diverged)",
                           chain_index);
      if (it == settings.warmup - 1) nuts.set_step_size(step_adapt.final_step());
    } else {
      const int k = it - settings.warmup;
      out.draws.row(k) = z.q.transpose();
      out.stats.accept_stat.push_back(tr.accept_stat);
      out.stats.tree_depth.push_back(tr.depth);
      out.stats.n_leapfrog.push_back(tr.n_leapfrog);
      out.stats.divergent.push_back(tr.divergent);
      if (tr.divergent) ++out.stats.divergences;
    }
  }
  out.stats.step_size = nuts.step_size();
  out.stats.inv_metric = nuts.inv_metric();
  return out;
}

}  // namespace stmc
