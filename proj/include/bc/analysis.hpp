#pragma once

// Closed-form laws for translated Gaussian measures and reflection coupling,
// plus the goodness-of-fit machinery that compares simulations against them.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "bc/wiener_space.hpp"

namespace bc {

// P[N(0,1) > u].
double std_normal_tail(double u);

// Total mass of the join of mu and its translate by w, from ||w||_H.
double join_mass(double hnorm);
// 1 - join_mass(hnorm).
double tv_distance(double hnorm);

// Probability that a maximal coupling from displacement of H-norm hnorm has
// met by time t: 2 Phibar(hnorm / (2 sqrt t)).
double max_coupling_prob(double hnorm, double t);

// CDF at t of the first time a rate-1 Brownian motion from a > 0 hits 0.
double first_passage_cdf(double a, double t);
// Inverse of first_passage_cdf in t, p in (0, 1).
double first_passage_quantile(double a, double p);

// log dT_x#mu/dmu evaluated at theta: sum a_k g_k - 1/2 sum a_k^2.
double cameron_martin_log_density(const HVector& x, const HVector& theta);

struct FirstPassageLaw {
  double level;
};
struct JoinMassLaw {
  double hnorm;
};
struct TvAtTimeLaw {
  double hnorm;
  double time;
};

class LawSpec {
 public:
  using Variant = std::variant<FirstPassageLaw, JoinMassLaw, TvAtTimeLaw>;

  static LawSpec first_passage(double level);
  static LawSpec join(double hnorm);
  static LawSpec tv_at_time(double hnorm, double t);

  const Variant& params() const noexcept { return params_; }
  std::string name() const;

  // Distribution-valued laws only (FirstPassage).
  double cdf(double t) const;
  bool has_cdf() const noexcept;
  // Scalar-valued laws (JoinMass -> join mass, TVAtTime -> TV distance).
  double value() const;

 private:
  explicit LawSpec(Variant v) : params_(v) {}
  Variant params_;
};

// Draws sorted ascending; censored draws carry the horizon value.
class EmpiricalSample {
 public:
  EmpiricalSample() = default;
  // Uncensored draws only.
  explicit EmpiricalSample(std::vector<double> draws);
  // Draws marked censored are right-censored at their recorded value.
  EmpiricalSample(std::vector<double> draws, std::vector<bool> censored);

  std::size_t size() const noexcept { return draws_.size(); }
  std::size_t censored_count() const noexcept;
  const std::vector<double>& draws() const noexcept { return draws_; }
  const std::vector<bool>& censored() const noexcept { return censored_; }

 private:
  std::vector<double> draws_;
  std::vector<bool> censored_;
};

struct KsResult {
  std::string law;
  std::size_t n = 0;          // all draws, censored included
  std::size_t censored = 0;
  double statistic = 0.0;
  double critical_value = 0.0;  // 99% asymptotic band
  bool pass = false;
};

// Two-sided KS distance between the empirical CDF (denominator: all draws)
// and the law's CDF, evaluated on both sides of every uncensored jump.
// Censored draws contribute no jump, so the supremum runs over [0, horizon].
KsResult ks_statistic(const EmpiricalSample& sample, const LawSpec& law);

// sqrt(-ln(alpha/2) / 2) / sqrt(n); 1.628/sqrt(n) at alpha = 0.01.
double ks_critical_value(std::size_t n, double alpha = 0.01);

struct BinomialCheck {
  std::size_t n = 0;
  std::size_t hits = 0;
  double empirical = 0.0;
  double target = 0.0;
  double sigma = 0.0;  // sqrt(target (1 - target) / n)
  double z = 0.0;
  bool pass = false;
};

// |hits/n - target| <= width * sigma.
BinomialCheck binomial_check(std::size_t hits, std::size_t n, double target,
                             double width = 3.0);

struct RuinReport {
  double lambda = 0.0;
  BinomialCheck check;
};

// Compares the empirical P[sup >= lambda] with 1/lambda, the hitting
// probability of lambda before 0 for a Brownian motion started at 1.
RuinReport ruin_check(double lambda, const std::vector<double>& sup_draws);

struct MeanCheck {
  std::size_t n = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  double target = 0.0;
  bool pass = false;
};

// |mean - target| <= width * sample_sd / sqrt(n).
MeanCheck mean_check(const std::vector<double>& values, double target,
                     double width = 3.0);

struct VarianceCheck {
  std::size_t n = 0;
  double sample_variance = 0.0;
  double target = 0.0;
  double band = 0.0;  // width * sqrt(2/(n-1)) relative half-width
  bool pass = false;
};

// Unbiased sample variance against target within the chi-square band.
VarianceCheck variance_check(const std::vector<double>& values, double target,
                             double width = 3.0);

}  // namespace bc
