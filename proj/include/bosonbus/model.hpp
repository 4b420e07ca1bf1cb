#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace bosonbus {

// Two qubits (A, B) coupled to one boson mode:
//   H = wa0 sz_A + wb0 sz_B + w b'b + la (b + b') sx_A + lb (b + b') sx_B
// with sz = diag(+1, -1), |0> the +1 eigenstate, and <m+1|b'|m> = sqrt(m+1).
// wa0/wb0 multiply sz, so the physical level splitting of each qubit is
// twice the parameter.
struct ModelParams {
  double omega_a0 = 0.0;  // qubit A sz coefficient, >= 0
  double omega_b0 = 0.0;  // qubit B sz coefficient, >= 0
  double omega = 1.0;     // boson frequency, > 0
  double lambda_a = 0.0;  // A-boson coupling
  double lambda_b = 0.0;  // B-boson coupling

  void validate() const;
};

// Hard boson cutoff: occupations 0..max_phonon are retained, the top slice
// simply has no outward coupling.
struct Truncation {
  int max_phonon = 1;  // M >= 1

  void validate() const;
  int slices() const { return max_phonon + 1; }
  int dim_full() const { return 4 * (max_phonon + 1); }
  int dim_ladder() const { return 2 * (max_phonon + 1); }
};

// Product basis state |eta_a, eta_b, m>; eta = 0 is the sz = +1 level.
struct BasisIndex {
  int eta_a = 0;  // {0, 1}
  int eta_b = 0;  // {0, 1}
  int m = 0;      // [0, M]
};

// Slice-major flat layout: index = 4 m + 2 eta_a + eta_b.
int flat_index(const BasisIndex& s);
BasisIndex unflatten(int flat);

// Conserved parity label (-1)^(eta_a + eta_b + m); opposite labels never mix
// under H.
int parity_of(const BasisIndex& s);

// Dense 4(M+1) x 4(M+1) real symmetric Hamiltonian in the product basis.
Eigen::MatrixXd build_full_hamiltonian(const ModelParams& p, const Truncation& tr);

// Orthogonal map from the product basis to the Bell basis; row 4m + k holds
// k = 0: |Psi+,m> = (|00m> + |11m>)/sqrt2    k = 1: |Psi-,m> = (|00m> - |11m>)/sqrt2
// k = 2: |Phi+,m> = (|01m> + |10m>)/sqrt2    k = 3: |Phi-,m> = (|01m> - |10m>)/sqrt2
Eigen::MatrixXd bell_transform(const Truncation& tr);

}  // namespace bosonbus
