#include "bc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "bc/errors.hpp"

namespace bc {

double std_normal_tail(double u) {
  if (std::isnan(u)) throw DomainError("std_normal_tail of NaN");
  return 0.5 * std::erfc(u / std::numbers::sqrt2);
}

double join_mass(double hnorm) {
  if (!(hnorm >= 0.0)) throw DomainError("join_mass needs hnorm >= 0");
  return 2.0 * std_normal_tail(0.5 * hnorm);
}

double tv_distance(double hnorm) { return 1.0 - join_mass(hnorm); }

double max_coupling_prob(double hnorm, double t) {
  if (!(hnorm >= 0.0)) throw DomainError("max_coupling_prob needs hnorm >= 0");
  if (!(t > 0.0)) throw DomainError("max_coupling_prob needs t > 0");
  return 2.0 * std_normal_tail(hnorm / (2.0 * std::sqrt(t)));
}

double first_passage_cdf(double a, double t) {
  if (!(a > 0.0)) throw DomainError("first_passage_cdf needs a > 0");
  if (!(t >= 0.0)) throw DomainError("first_passage_cdf needs t >= 0");
  if (t == 0.0) return 0.0;
  return 2.0 * std_normal_tail(a / std::sqrt(t));
}

double first_passage_quantile(double a, double p) {
  if (!(a > 0.0)) throw DomainError("first_passage_quantile needs a > 0");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  const double z = std::numbers::sqrt2 * boost::math::erfc_inv(p);
  return (a * a) / (z * z);
}

double cameron_martin_log_density(const HVector& x, const HVector& theta) {
  return h_inner(x, theta) - 0.5 * h_inner(x, x);
}

LawSpec LawSpec::first_passage(double level) {
  if (!(level > 0.0)) throw DomainError("FirstPassage level must be positive");
  return LawSpec(FirstPassageLaw{level});
}

LawSpec LawSpec::join(double hnorm) {
  if (!(hnorm >= 0.0)) throw DomainError("JoinMass hnorm must be >= 0");
  return LawSpec(JoinMassLaw{hnorm});
}

LawSpec LawSpec::tv_at_time(double hnorm, double t) {
  if (!(hnorm >= 0.0) || !(t > 0.0)) {
    throw DomainError("TVAtTime needs hnorm >= 0 and t > 0");
  }
  return LawSpec(TvAtTimeLaw{hnorm, t});
}

std::string LawSpec::name() const {
  std::ostringstream s;
  s.precision(17);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FirstPassageLaw>) {
          s << "FirstPassage(" << p.level << ")";
        } else if constexpr (std::is_same_v<T, JoinMassLaw>) {
          s << "JoinMass(" << p.hnorm << ")";
        } else {
          s << "TVAtTime(" << p.hnorm << ", " << p.time << ")";
        }
      },
      params_);
  return s.str();
}

bool LawSpec::has_cdf() const noexcept {
  return std::holds_alternative<FirstPassageLaw>(params_);
}

double LawSpec::cdf(double t) const {
  if (const auto* fp = std::get_if<FirstPassageLaw>(&params_)) {
    return first_passage_cdf(fp->level, t);
  }
  throw DomainError(name() + " is a scalar law without a CDF");
}

double LawSpec::value() const {
  if (const auto* j = std::get_if<JoinMassLaw>(&params_)) return join_mass(j->hnorm);
  if (const auto* tv = std::get_if<TvAtTimeLaw>(&params_)) {
    return 1.0 - max_coupling_prob(tv->hnorm, tv->time);
  }
  throw DomainError(name() + " is a distribution, not a scalar");
}

EmpiricalSample::EmpiricalSample(std::vector<double> draws)
    : EmpiricalSample(draws, std::vector<bool>(draws.size(), false)) {}

EmpiricalSample::EmpiricalSample(std::vector<double> draws,
                                 std::vector<bool> censored) {
  if (draws.size() != censored.size()) {
    throw DimensionError("draws and censoring flags differ in length");
  }
  std::vector<std::size_t> order(draws.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Uncensored before censored at equal values: a censored draw at h means
  // "beyond h", so it sorts after any event observed at h.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (draws[a] != draws[b]) return draws[a] < draws[b];
    return !censored[a] && censored[b];
  });
  draws_.reserve(draws.size());
  censored_.reserve(draws.size());
  for (std::size_t i : order) {
    if (std::isnan(draws[i])) throw DomainError("NaN draw in empirical sample");
    draws_.push_back(draws[i]);
    censored_.push_back(censored[i]);
  }
}

std::size_t EmpiricalSample::censored_count() const noexcept {
  return static_cast<std::size_t>(
      std::count(censored_.begin(), censored_.end(), true));
}

double ks_critical_value(std::size_t n, double alpha) {
  if (n == 0) throw DomainError("critical value needs n >= 1");
  return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

KsResult ks_statistic(const EmpiricalSample& sample, const LawSpec& law) {
  if (!law.has_cdf()) throw DomainError("KS needs a law with a CDF");
  const auto& draws = sample.draws();
  const auto& censored = sample.censored();
  const std::size_t n = draws.size();
  KsResult r;
  r.law = law.name();
  r.n = n;
  r.censored = sample.censored_count();
  if (n == 0 || r.censored == n) {
    throw DomainError("KS statistic needs at least one uncensored draw");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double sup = 0.0;
  std::size_t below = 0;  // uncensored draws strictly before index i
  for (std::size_t i = 0; i < n; ++i) {
    if (censored[i]) continue;
    const double f = law.cdf(draws[i]);
    sup = std::max(sup, std::abs(f - static_cast<double>(below) * inv_n));
    ++below;
    sup = std::max(sup, std::abs(static_cast<double>(below) * inv_n - f));
  }
  r.statistic = sup;
  r.critical_value = ks_critical_value(n);
  r.pass = r.statistic <= r.critical_value;
  return r;
}

BinomialCheck binomial_check(std::size_t hits, std::size_t n, double target,
                             double width) {
  if (n == 0) throw DomainError("binomial check needs n >= 1");
  if (!(target >= 0.0 && target <= 1.0)) throw DomainError("target must be a probability");
  BinomialCheck c;
  c.n = n;
  c.hits = hits;
  c.empirical = static_cast<double>(hits) / static_cast<double>(n);
  c.target = target;
  c.sigma = std::sqrt(target * (1.0 - target) / static_cast<double>(n));
  const double diff = std::abs(c.empirical - target);
  c.z = c.sigma > 0.0 ? diff / c.sigma : (diff == 0.0 ? 0.0 : INFINITY);
  c.pass = diff <= width * c.sigma;
  return c;
}

RuinReport ruin_check(double lambda, const std::vector<double>& sup_draws) {
  if (!(lambda > 1.0)) throw DomainError("ruin_check needs lambda > 1");
  if (sup_draws.empty()) throw DomainError("ruin_check needs at least one draw");
  const auto hits = static_cast<std::size_t>(std::count_if(
      sup_draws.begin(), sup_draws.end(), [&](double s) { return s >= lambda; }));
  return {lambda, binomial_check(hits, sup_draws.size(), 1.0 / lambda)};
}

namespace {

std::pair<double, double> mean_and_variance(const std::vector<double>& v) {
  // Welford.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  return {mean, n > 1 ? m2 / static_cast<double>(n - 1) : 0.0};
}

}  // namespace

MeanCheck mean_check(const std::vector<double>& values, double target,
                     double width) {
  if (values.size() < 2) throw DomainError("mean check needs at least two values");
  const auto [mean, var] = mean_and_variance(values);
  MeanCheck c;
  c.n = values.size();
  c.mean = mean;
  c.standard_error = std::sqrt(var / static_cast<double>(c.n));
  c.target = target;
  c.pass = std::abs(mean - target) <= width * c.standard_error;
  return c;
}

VarianceCheck variance_check(const std::vector<double>& values, double target,
                             double width) {
  if (values.size() < 2) throw DomainError("variance check needs at least two values");
  if (!(target > 0.0)) throw DomainError("variance target must be positive");
  const auto [mean, var] = mean_and_variance(values);
  (void)mean;
  VarianceCheck c;
  c.n = values.size();
  c.sample_variance = var;
  c.target = target;
  c.band = width * std::sqrt(2.0 / static_cast<double>(c.n - 1));
  c.pass = std::abs(var / target - 1.0) <= c.band;
  return c;
}

}  // namespace bc
