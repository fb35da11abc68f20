#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pairwfs/path.hpp"
#include "pairwfs/spdc.hpp"

namespace pairwfs {

/// Pair emission driven by a pump profile W at the crystal image plane.
/// The two-photon amplitude in position is Psi = H diag(W) H^T where H is a
/// Gaussian smoothing with transfer function exp(-2 b^2 q^2). In the angular
/// domain this is v(q_s+q_i) exp(-b^2 (q_s-q_i)^2) with the pump spectrum
/// additionally filtered by exp(-b^2 (q_s+q_i)^2); b = 0 is the thin-crystal
/// limit where Psi is diagonal in position.
struct PairSource {
  ComplexField pump;  // rank 1, position domain, pump wavelength
  double b = 0.0;     // m

  double photon_wavelength() const { return 2.0 * pump.wavelength; }
};

inline ComplexField apply_pair_kernel(const ComplexField& f, double b) {
  if (b == 0.0) return f;
  ComplexField s = far_field(f);
  const auto q = s.grid.coords();
  for (std::size_t k = 0; k < s.size(); ++k) s.values[k] *= std::exp(-2.0 * b * b * q[k] * q[k]);
  ComplexField out = near_field(s);
  out.grid = f.grid;
  return out;
}

/// Far-field row for angular coordinate q: exp(-i q x) / sqrt(n).
inline ComplexField far_field_row(const Grid& g, double q, double wavelength) {
  ComplexField f(g, 1, wavelength);
  const double s = 1.0 / std::sqrt(double(g.n_points));
  for (std::size_t k = 0; k < g.n_points; ++k) f.values[k] = std::polar(s, -q * g.coord(k));
  return f;
}

/// Signal far-field coincidence pattern with the idler detector fixed at
/// far-field coordinate q_idler. Both photons traverse `photon_path`.
/// Cost is a handful of FFTs; the joint matrix is never formed.
inline RealField coincidence_slice(const PairSource& src, const OpticalPath& photon_path, double q_idler = 0.0) {
  require(src.pump.rank == 1 && photon_path.rank() == 1 && src.pump.grid == photon_path.grid(),
          ErrorCode::grid_mismatch, "pair source and photon path grids differ");
  ComplexField v = far_field_row(src.pump.grid, q_idler, photon_path.wavelength());
  v = photon_path.apply_transpose(std::move(v));
  v = apply_pair_kernel(v, src.b);
  for (std::size_t k = 0; k < v.size(); ++k) v.values[k] *= src.pump.values[k];
  v = apply_pair_kernel(v, src.b);
  v = photon_path.apply(std::move(v));
  RealField r = intensity(far_field(v));
  r.wavelength = photon_path.wavelength();
  return r;
}

/// Pump far-field intensity after `pump_path`.
inline RealField pump_far_field(const ComplexField& pump, const OpticalPath& pump_path) {
  RealField r = intensity(far_field(pump_path.apply(pump)));
  r.wavelength = pump.wavelength;
  return r;
}

/// Dense joint amplitude of the source in the position domain (for small
/// grids and cross-checks).
inline JointAmplitude joint_amplitude(const PairSource& src) {
  const Grid& g = src.pump.grid;
  const std::size_t n = g.n_points;
  JointAmplitude psi(g, g, Domain::position, src.photon_wavelength());
  for (std::size_t m = 0; m < n; ++m) psi.at(m, m) = src.pump.values[m];
  if (src.b != 0.0) {
    psi = to_angular(psi);
    const auto q = psi.grid_s.coords();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < n; ++i)
        psi.at(s, i) *= std::exp(-2.0 * src.b * src.b * (q[s] * q[s] + q[i] * q[i]));
    psi = to_position(psi);
  }
  psi.normalize();
  return psi;
}

/// Transposed pump path applied to the far-field row of `target_q`: the
/// field whose phase conjugate focuses the pump onto that far-field cell.
inline ComplexField target_backpropagation(const OpticalPath& pump_path, double target_q) {
  return pump_path.apply_transpose(far_field_row(pump_path.grid(), target_q, pump_path.wavelength()));
}

}  // namespace pairwfs
