#include "bc/wiener_space.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "bc/errors.hpp"

namespace bc {
namespace {

void require_same_length(const HVector& x, const HVector& y) {
  if (x.size() != y.size()) {
    throw DimensionError("coefficient length mismatch: " +
                         std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
  }
}

void require_model_length(const ModelSpec& model, const HVector& x) {
  if (x.size() != model.coefficient_count()) {
    throw DimensionError("vector has " + std::to_string(x.size()) +
                         " coefficients, model expects " +
                         std::to_string(model.coefficient_count()));
  }
}

struct TentIndex {
  int level;
  std::size_t position;
};

// k >= 2 (1-based) -> (level, position) in the frozen enumeration.
TentIndex tent_index(std::size_t k) {
  const std::size_t ordinal = k - 1;  // 1, 2, 3, ... for levels 0, 1, 1, ...
  const int level = std::bit_width(ordinal) - 1;
  return {level, ordinal - (std::size_t{1} << level)};
}

double tent_height(int level) { return std::exp2(-0.5 * level - 1.0); }

double tent_value(int level, std::size_t position, double t) {
  const double width = std::exp2(-level);
  const double left = static_cast<double>(position) * width;
  const double u = (t - left) / width;  // local coordinate on [0,1]
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double up = u < 0.5 ? u : 1.0 - u;
  return 2.0 * up * tent_height(level);
}

// Values of sum_k a_k e_k on the dyadic grid {i 2^-m}.
std::vector<double> classical_grid_values(const ModelSpec& model,
                                          const HVector& x) {
  const int m = model.resolution();
  const std::size_t cells = std::size_t{1} << m;
  std::vector<double> values(cells + 1, 0.0);
  const double step = std::exp2(-m);
  for (std::size_t i = 0; i <= cells; ++i) {
    values[i] = x[0] * static_cast<double>(i) * step;
  }
  for (std::size_t k = 2; k <= x.size(); ++k) {
    const double a = x[k - 1];
    if (a == 0.0) continue;
    const auto [level, position] = tent_index(k);
    const std::size_t span = cells >> level;  // grid cells under the tent
    const std::size_t first = position * span;
    const std::size_t half = span / 2;
    const double slope = 2.0 * tent_height(level) / static_cast<double>(span);
    for (std::size_t i = 1; i < span; ++i) {
      const std::size_t up = i <= half ? i : span - i;
      values[first + i] += a * slope * static_cast<double>(up);
    }
  }
  return values;
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::ClassicalWiener ? "ClassicalWiener"
                                            : "DiagonalSequence";
}

std::string to_string(AmbientNorm norm) {
  return norm == AmbientNorm::L2 ? "L2" : "SUP";
}

ModelSpec ModelSpec::classical(int levels, int resolution) {
  if (levels < 0 || levels > 24) {
    throw DomainError("classical model: J must lie in [0, 24], got " +
                      std::to_string(levels));
  }
  if (resolution < levels + 1 || resolution > 30) {
    throw DomainError("classical model: m must satisfy J+1 <= m <= 30, got m=" +
                      std::to_string(resolution));
  }
  ModelSpec spec;
  spec.kind_ = ModelKind::ClassicalWiener;
  spec.levels_ = levels;
  spec.resolution_ = resolution;
  spec.count_ = std::size_t{1} << levels;
  return spec;
}

ModelSpec ModelSpec::diagonal(std::vector<double> sigmas, AmbientNorm ambient) {
  if (sigmas.empty()) throw DomainError("diagonal model: sigmas is empty");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) {
      throw DomainError("diagonal model: sigmas[" + std::to_string(i) +
                        "] must be a finite positive number");
    }
  }
  ModelSpec spec;
  spec.kind_ = ModelKind::DiagonalSequence;
  spec.count_ = sigmas.size();
  spec.sigmas_ = std::move(sigmas);
  spec.ambient_ = ambient;
  return spec;
}

double ModelSpec::basis_w_norm(std::size_t k) const {
  if (k < 1 || k > count_) {
    throw DomainError("basis index " + std::to_string(k) + " outside [1, " +
                      std::to_string(count_) + "]");
  }
  if (kind_ == ModelKind::DiagonalSequence) return sigmas_[k - 1];
  if (k == 1) return 1.0;
  return tent_height(tent_index(k).level);
}

HVector::HVector(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    if (!std::isfinite(coeffs_[i])) {
      throw DomainError("coefficient " + std::to_string(i + 1) +
                        " is not finite");
    }
  }
}

HVector HVector::zeros(std::size_t count) {
  return HVector(std::vector<double>(count, 0.0));
}

HVector HVector::unit(std::size_t count, std::size_t k, double scale) {
  if (k < 1 || k > count) {
    throw DomainError("unit index " + std::to_string(k) + " outside [1, " +
                      std::to_string(count) + "]");
  }
  std::vector<double> c(count, 0.0);
  c[k - 1] = scale;
  return HVector(std::move(c));
}

bool HVector::is_zero() const noexcept {
  return std::all_of(coeffs_.begin(), coeffs_.end(),
                     [](double v) { return v == 0.0; });
}

HVector operator+(const HVector& a, const HVector& b) {
  require_same_length(a, b);
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] + b[i];
  return HVector(std::move(c));
}

HVector operator-(const HVector& a, const HVector& b) {
  require_same_length(a, b);
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] - b[i];
  return HVector(std::move(c));
}

HVector operator*(double s, const HVector& a) {
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = s * a[i];
  return HVector(std::move(c));
}

double h_inner(const HVector& x, const HVector& y) {
  require_same_length(x, y);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  return sum;
}

double h_norm(const HVector& x) { return std::sqrt(h_inner(x, x)); }

double w_norm(const ModelSpec& model, const HVector& x) {
  require_model_length(model, x);
  if (model.kind() == ModelKind::ClassicalWiener) {
    double sup = 0.0;
    for (double v : classical_grid_values(model, x)) sup = std::max(sup, std::abs(v));
    return sup;
  }
  const auto sigmas = model.sigmas();
  if (model.ambient() == AmbientNorm::Sup) {
    double sup = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      sup = std::max(sup, std::abs(x[k] * sigmas[k]));
    }
    return sup;
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double c = x[k] * sigmas[k];
    sum += c * c;
  }
  return std::sqrt(sum);
}

double faber_schauder(std::size_t k, double t) {
  if (k < 1) throw DomainError("basis index must be >= 1");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t must lie in [0, 1]");
  if (k == 1) return t;
  const auto [level, position] = tent_index(k);
  return tent_value(level, position, t);
}

double evaluate(const ModelSpec& model, const HVector& x, double t) {
  if (model.kind() != ModelKind::ClassicalWiener) {
    throw DomainError("evaluate requires a ClassicalWiener model");
  }
  require_model_length(model, x);
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("evaluate: t = " + std::to_string(t) +
                      " outside [0, 1]");
  }
  double value = x[0] * t;
  // One tent per level can be non-zero at t.
  for (int level = 0; level < model.levels(); ++level) {
    const std::size_t per_level = std::size_t{1} << level;
    auto position = static_cast<std::size_t>(std::ldexp(t, level));
    if (position >= per_level) position = per_level - 1;
    const std::size_t k = per_level + position + 1;
    const double a = x[k - 1];
    if (a != 0.0) value += a * tent_value(level, position, t);
  }
  return value;
}

HVector project_block(const HVector& x, CoeffRange range) {
  if (range.lo < 1 || range.lo > range.hi || range.hi > x.size() + 1) {
    throw DomainError("block range [" + std::to_string(range.lo) + ", " +
                      std::to_string(range.hi) + ") invalid for K = " +
                      std::to_string(x.size()));
  }
  std::vector<double> c(x.size(), 0.0);
  for (std::size_t k = range.lo; k < range.hi; ++k) c[k - 1] = x[k - 1];
  return HVector(std::move(c));
}

}  // namespace bc
