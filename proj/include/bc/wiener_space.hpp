#pragma once

// Concrete truncated abstract Wiener spaces.
//
// Two model families are provided:
//
//  * ClassicalWiener: W = C_0[0,1] with the sup norm, H = absolutely continuous
//    paths with square-integrable derivative. The H-orthonormal basis is the
//    Faber-Schauder system (primitives of L2-normalized Haar functions) in
//    the frozen order
//        e_1(t) = t,
//        then level j = 0, 1, ..., J-1 with position p = 0..2^j-1,
//    so K = 2^J coefficients in total. The level-j tent peaks at
//    (p + 1/2) 2^-j with height 2^(-j/2-1).
//
//  * DiagonalSequence: W is a sequence space carrying coordinates x_k = a_k s_k
//    with either the l2 or the sup norm, H has orthonormal basis e_k
//    (coordinate vector scaled by s_k).
//
// Every vector is represented by its coefficients a_1..a_K against the
// H-orthonormal basis. Coefficient indices in the public API are 1-based to
// match the basis enumeration; storage is 0-based (a_k lives at [k-1]).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bc {

enum class ModelKind { ClassicalWiener, DiagonalSequence };
enum class AmbientNorm { L2, Sup };

std::string to_string(ModelKind kind);
std::string to_string(AmbientNorm norm);

class ModelSpec {
 public:
  // J Faber-Schauder levels (K = 2^J) evaluated on the dyadic grid of
  // step 2^-m. Requires J >= 0 and m >= J + 1.
  static ModelSpec classical(int levels, int resolution);
  static ModelSpec diagonal(std::vector<double> sigmas, AmbientNorm ambient);

  ModelKind kind() const noexcept { return kind_; }
  std::size_t coefficient_count() const noexcept { return count_; }

  int levels() const noexcept { return levels_; }
  int resolution() const noexcept { return resolution_; }
  std::span<const double> sigmas() const noexcept { return sigmas_; }
  AmbientNorm ambient() const noexcept { return ambient_; }

  // ||e_k||_W for 1-based k.
  double basis_w_norm(std::size_t k) const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

 private:
  ModelSpec() = default;

  ModelKind kind_ = ModelKind::DiagonalSequence;
  std::size_t count_ = 0;
  int levels_ = 0;
  int resolution_ = 0;
  std::vector<double> sigmas_;
  AmbientNorm ambient_ = AmbientNorm::L2;
};

// Coordinates against the H-orthonormal basis. All entries finite.
class HVector {
 public:
  HVector() = default;
  explicit HVector(std::vector<double> coeffs);
  static HVector zeros(std::size_t count);
  // Unit coefficient at 1-based index k.
  static HVector unit(std::size_t count, std::size_t k, double scale = 1.0);

  std::size_t size() const noexcept { return coeffs_.size(); }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  double operator[](std::size_t i) const { return coeffs_[i]; }
  bool is_zero() const noexcept;

  friend bool operator==(const HVector&, const HVector&) = default;

 private:
  std::vector<double> coeffs_;
};

HVector operator+(const HVector& a, const HVector& b);
HVector operator-(const HVector& a, const HVector& b);
HVector operator*(double s, const HVector& a);

// Half-open range [lo, hi) of 1-based coefficient indices.
struct CoeffRange {
  std::size_t lo = 1;
  std::size_t hi = 1;

  std::size_t length() const noexcept { return hi - lo; }
  bool contains(std::size_t k) const noexcept { return lo <= k && k < hi; }
  friend bool operator==(const CoeffRange&, const CoeffRange&) = default;
};

double h_inner(const HVector& x, const HVector& y);
double h_norm(const HVector& x);
double w_norm(const ModelSpec& model, const HVector& x);

// Reconstructs the path t -> sum_k a_k e_k(t) of a ClassicalWiener vector.
double evaluate(const ModelSpec& model, const HVector& x, double t);

// Copy of x with every coefficient outside [lo, hi) set to zero.
// Requires 1 <= lo <= hi <= K + 1.
HVector project_block(const HVector& x, CoeffRange range);

// Faber-Schauder basis function e_k(t), 1-based k, t in [0,1].
double faber_schauder(std::size_t k, double t);

}  // namespace bc
