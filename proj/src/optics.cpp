#include "vaf/optics.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

#include "vaf/error.hpp"

namespace vaf {
namespace {

constexpr double kPi = std::numbers::pi;

double j0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= -q / (static_cast<double>(k) * k);
    sum += term;
    if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

// Miller backward recurrence normalized with J0 + 2 * sum J_2k = 1.
double j0_miller(double x) {
  const int start = 2 * static_cast<int>((x + 15.0 * std::cbrt(x) + 24.0) / 2.0);
  double next = 0.0;  // J_{k+1}
  double cur = 1e-300;  // J_k
  double norm = 0.0;
  double j0 = 0.0;
  for (int k = start; k >= 1; --k) {
    const double prev = (2.0 * k / x) * cur - next;  // J_{k-1}
    next = cur;
    cur = prev;
    if ((k - 1) % 2 == 0 && k - 1 > 0) norm += 2.0 * cur;
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      next *= 1e-250;
      norm *= 1e-250;
    }
  }
  j0 = cur;
  norm += j0;
  return j0 / norm;
}

// Hankel asymptotic expansion; accurate to ~1e-16 for x >= 25.
double j0_asymptotic(double x) {
  double p = 0.0;
  double q = 0.0;
  double a = 1.0;  // a_k / x^k with alternating sign folded in below
  double last = 1.0;
  for (int k = 0; k < 60; ++k) {
    if (k > 0) {
      const double odd = 2.0 * k - 1.0;
      a *= -(odd * odd) / (8.0 * k * x);
    }
    if (std::abs(a) > last && k > 2) break;
    last = std::abs(a);
    // P collects even k with sign (-1)^(k/2), Q odd k with sign (-1)^((k-1)/2).
    if (k % 2 == 0) {
      p += ((k / 2) % 2 == 0 ? a : -a);
    } else {
      q += (((k - 1) / 2) % 2 == 0 ? a : -a);
    }
    if (last < 1e-18) break;
  }
  const double chi = x - 0.25 * kPi;
  return std::sqrt(2.0 / (kPi * x)) * (p * std::cos(chi) - q * std::sin(chi));
}

}  // namespace

double OpticalConfig::wave_number() const { return 2.0 * kPi / wavelength_um; }

void OpticalConfig::validate() const {
  if (!(numerical_aperture > 0.0 && numerical_aperture < refractive_index)) {
    throw DomainError("optical config requires 0 < NA < n");
  }
  if (!(wavelength_um > 0.0)) throw DomainError("wavelength must be positive");
  if (!(pixel_pitch_um > 0.0)) throw DomainError("pixel pitch must be positive");
  if (kernel_radius_px < 1) throw DomainError("kernel radius must be at least 1 px");
  if (quadrature_nodes < 16) throw DomainError("at least 16 quadrature nodes are required");
}

QuadratureRule gauss_legendre_unit(int n) {
  if (n < 1) throw DomainError("quadrature needs at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = z;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0;
    double p1 = z;
    for (int j = 2; j <= n; ++j) {
      const double p2 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    // Map [-1, 1] onto [0, 1].
    rule.nodes[i] = 0.5 * (1.0 - z);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + z);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  if (n == 1) {
    rule.nodes[0] = 0.5;
    rule.weights[0] = 1.0;
  }
  return rule;
}

double bessel_j0(double x) {
  if (!std::isfinite(x)) throw DomainError("bessel_j0: non-finite argument");
  const double ax = std::abs(x);
  if (ax < 8.0) return j0_series(ax);
  if (ax < 25.0) return j0_miller(ax);
  return j0_asymptotic(ax);
}

double psf_value(double r_um, double defocus_um, const OpticalConfig& cfg,
                 const QuadratureRule& rule) {
  if (!(r_um >= 0.0)) throw DomainError("psf_value: radius must be non-negative");
  if (!std::isfinite(defocus_um)) throw DomainError("psf_value: non-finite defocus");
  const double k = cfg.wave_number();
  const double na_n = cfg.numerical_aperture / cfg.refractive_index;
  const double radial = k * na_n * r_um;
  const double phase = 0.5 * k * defocus_um * na_n * na_n;
  double re = 0.0;
  double im = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double rho = rule.nodes[i];
    const double amp = rule.weights[i] * bessel_j0(radial * rho) * rho;
    const double phi = phase * rho * rho;
    re += amp * std::cos(phi);
    im -= amp * std::sin(phi);
  }
  return re * re + im * im;
}

double psf_value(double r_um, double defocus_um, const OpticalConfig& cfg) {
  cfg.validate();
  return psf_value(r_um, defocus_um, cfg, gauss_legendre_unit(cfg.quadrature_nodes));
}

PsfKernel build_kernel(double defocus_um, const OpticalConfig& cfg) {
  cfg.validate();
  const QuadratureRule rule = gauss_legendre_unit(cfg.quadrature_nodes);
  const int c = cfg.kernel_radius_px;
  const int side = 2 * c + 1;
  PsfKernel kernel;
  kernel.defocus_um = defocus_um;
  kernel.samples = Image(side, side);
  std::unordered_map<int, double> by_radius;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const int d2 = (i - c) * (i - c) + (j - c) * (j - c);
      auto it = by_radius.find(d2);
      if (it == by_radius.end()) {
        const double r = cfg.pixel_pitch_um * std::sqrt(static_cast<double>(d2));
        it = by_radius.emplace(d2, psf_value(r, defocus_um, cfg, rule)).first;
      }
      kernel.samples.at(j, i) = it->second;
    }
  }
  double sum = 0.0;
  for (double v : kernel.samples.pixels()) sum += v;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw NumericError("PSF kernel sums to zero at defocus " + std::to_string(defocus_um));
  }
  kernel.raw_sum = sum;
  for (double& v : kernel.samples.pixels()) v /= sum;
  return kernel;
}

}  // namespace vaf
