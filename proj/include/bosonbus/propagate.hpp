#pragma once

#include "bosonbus/ladder.hpp"

#include <complex>
#include <vector>

namespace bosonbus {

using Complex = std::complex<double>;

// Eigen-decomposition of a real symmetric matrix; eigenvalues ascending,
// eigenvectors orthonormal columns.
struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;

  int dim() const { return int(eigenvalues.size()); }
};

SpectralDecomposition diagonalize(const Eigen::MatrixXd& matrix);

// The 2x2 blocks f_m(p, t) = <slice m| exp(-i L_p t) |slice source> of one
// ladder; column j is the amplitude pattern reached from leg j of the
// source slice.
struct SlicePropagators {
  int parity = +1;
  double time = 0.0;
  std::vector<Eigen::Matrix2cd> blocks;  // index m in [0, M]
};

SlicePropagators propagator_at(const SpectralDecomposition& spec, double t,
                               int parity = +1, int source_slice = 0);

// exp(-i H t) applied to a state, H = the decomposed matrix.
Eigen::VectorXcd evolve_state(const SpectralDecomposition& spec,
                              const Eigen::VectorXcd& initial, double t);

// Gershgorin bound: every ladder eigenvalue lies in [-R, R + w M] with
// R = 2(wa0 + wb0) + 2 sqrt(M)(|la| + |lb|).
double gershgorin_radius(const ModelParams& p, const Truncation& tr);

}  // namespace bosonbus
