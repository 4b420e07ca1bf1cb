#include "bosonbus/propagate.hpp"

#include <cmath>
#include <sstream>

namespace bosonbus {

SpectralDecomposition diagonalize(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols())
    throw std::invalid_argument("diagonalize: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "eigensolver failed on " << matrix.rows() << "x" << matrix.cols()
        << " matrix, |max| = " << matrix.cwiseAbs().maxCoeff()
        << ", trace = " << matrix.trace();
    throw std::runtime_error(msg.str());
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

SlicePropagators propagator_at(const SpectralDecomposition& spec, double t,
                               int parity, int source_slice) {
  const int n = spec.dim();
  if (n % 2 != 0) throw std::invalid_argument("propagator_at: odd dimension");
  const int slices = n / 2;
  if (source_slice < 0 || source_slice >= slices)
    throw std::invalid_argument("propagator_at: source slice out of range");

  // Columns of exp(-i L t) for the two source-slice states:
  // V diag(exp(-i lam t)) V^T e_j, evaluated as two matrix-vector passes.
  Eigen::MatrixXcd src(n, 2);
  for (int j = 0; j < 2; ++j) {
    const Eigen::VectorXd w = spec.eigenvectors.row(2 * source_slice + j);
    Eigen::VectorXcd phased(n);
    for (int k = 0; k < n; ++k)
      phased[k] = std::polar(w[k], -spec.eigenvalues[k] * t);
    src.col(j) = spec.eigenvectors * phased;
  }

  SlicePropagators out;
  out.parity = parity;
  out.time = t;
  out.blocks.resize(slices);
  for (int m = 0; m < slices; ++m)
    out.blocks[m] = src.block<2, 2>(2 * m, 0);
  return out;
}

Eigen::VectorXcd evolve_state(const SpectralDecomposition& spec,
                              const Eigen::VectorXcd& initial, double t) {
  if (initial.size() != spec.dim())
    throw std::invalid_argument("evolve_state: dimension mismatch");
  Eigen::VectorXcd modal = spec.eigenvectors.transpose() * initial.real().eval() +
                           Complex(0, 1) * (spec.eigenvectors.transpose() *
                                            initial.imag().eval());
  for (int k = 0; k < spec.dim(); ++k)
    modal[k] *= std::polar(1.0, -spec.eigenvalues[k] * t);
  return spec.eigenvectors * modal.real().eval() +
         Complex(0, 1) * (spec.eigenvectors * modal.imag().eval());
}

double gershgorin_radius(const ModelParams& p, const Truncation& tr) {
  return 2.0 * (p.omega_a0 + p.omega_b0) +
         2.0 * std::sqrt(double(tr.max_phonon)) *
             (std::abs(p.lambda_a) + std::abs(p.lambda_b));
}

}  // namespace bosonbus
