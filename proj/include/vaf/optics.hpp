#pragma once

#include <vector>

#include "vaf/image.hpp"

namespace vaf {

/// Physical parameters of the scalar defocus PSF. Defaults describe a
/// green-light, NA 0.75 air objective sampled near Nyquist.
struct OpticalConfig {
  double numerical_aperture = 0.75;
  double refractive_index = 1.0;
  double wavelength_um = 0.55;
  double pixel_pitch_um = 0.3;
  int kernel_radius_px = 15;
  int quadrature_nodes = 128;

  double wave_number() const;  // 2*pi / wavelength, in 1/um
  void validate() const;       // throws DomainError

  friend bool operator==(const OpticalConfig&, const OpticalConfig&) = default;
};

/// Discretized PSF normalized to unit sum. `raw_sum` keeps the grid sum prior
/// to normalization so truncation can be audited.
struct PsfKernel {
  double defocus_um = 0.0;
  Image samples;
  double raw_sum = 0.0;

  int radius() const noexcept { return samples.width() / 2; }
};

/// Nodes and weights of an n-point Gauss-Legendre rule mapped onto [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule gauss_legendre_unit(int n);

/// Bessel function of the first kind, order zero. Throws DomainError on
/// non-finite input.
double bessel_j0(double x);

/// Un-normalized PSF (normalization constant taken as 1):
///   |int_0^1 J0(k NA/n r rho) exp(-i/2 k rho^2 dz (NA/n)^2) rho drho|^2
double psf_value(double r_um, double defocus_um, const OpticalConfig& cfg);
double psf_value(double r_um, double defocus_um, const OpticalConfig& cfg,
                 const QuadratureRule& rule);

PsfKernel build_kernel(double defocus_um, const OpticalConfig& cfg);

}  // namespace vaf
