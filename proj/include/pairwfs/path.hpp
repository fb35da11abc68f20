#pragma once

#include <variant>
#include <vector>

#include "pairwfs/optics.hpp"

namespace pairwfs {

/// Ordered product of thin transmission masks and free-space gaps at one
/// wavelength. Both element kinds are symmetric operators, so the transpose
/// is the same product in reverse order.
class OpticalPath {
 public:
  struct Mask {
    std::vector<cplx> transmission;
  };
  struct Gap {
    double distance = 0.0;
  };
  using Element = std::variant<Mask, Gap>;

  OpticalPath(Grid grid, int rank, double wavelength, PropagationOptions opt = {})
      : grid_(grid), rank_(rank), wavelength_(wavelength), options_(opt) {}

  OpticalPath& mask(std::vector<cplx> t) {
    require(t.size() == ComplexField::count(grid_, rank_), ErrorCode::grid_mismatch,
            "mask size does not match path grid");
    elements_.push_back(Mask{std::move(t)});
    return *this;
  }
  OpticalPath& gap(double z) {
    if (z != 0.0) elements_.push_back(Gap{z});
    return *this;
  }

  ComplexField apply(ComplexField f, PropagationDiagnostics* worst = nullptr) const {
    for (const auto& e : elements_) f = step(std::move(f), e, worst);
    return f;
  }
  ComplexField apply_transpose(ComplexField f, PropagationDiagnostics* worst = nullptr) const {
    for (auto it = elements_.rbegin(); it != elements_.rend(); ++it) f = step(std::move(f), *it, worst);
    return f;
  }

  const Grid& grid() const { return grid_; }
  int rank() const { return rank_; }
  double wavelength() const { return wavelength_; }
  const std::vector<Element>& elements() const { return elements_; }

 private:
  ComplexField step(ComplexField f, const Element& e, PropagationDiagnostics* worst) const {
    require(f.grid == grid_ && f.rank == rank_, ErrorCode::grid_mismatch, "field does not match path grid");
    if (const auto* m = std::get_if<Mask>(&e)) {
      for (std::size_t k = 0; k < f.size(); ++k) f.values[k] *= m->transmission[k];
      return f;
    }
    f.wavelength = wavelength_;
    PropagationDiagnostics d;
    f = propagate_angular_spectrum(f, std::get<Gap>(e).distance, options_, &d);
    if (worst) {
      worst->clipped_power_fraction = std::max(worst->clipped_power_fraction, d.clipped_power_fraction);
      worst->edge_power_fraction = std::max(worst->edge_power_fraction, d.edge_power_fraction);
    }
    return f;
  }

  Grid grid_;
  int rank_;
  double wavelength_;
  PropagationOptions options_;
  std::vector<Element> elements_;
};

}  // namespace pairwfs
