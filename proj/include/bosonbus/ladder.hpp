#pragma once

#include "bosonbus/model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace bosonbus {

// One parity block of H in the Bell basis: a two-leg ladder whose slice m
// carries on-site energy w m on both legs, an intra-slice rung, and two
// leg bonds to slice m+1.
//
// Slice types alternate along each ladder. A slice is Psi-type (hosts
// |Psi+,m>, |Psi-,m>) when (-1)^m equals the ladder parity, else Phi-type
// (hosts |Phi+,m>, |Phi-,m>). Leg 0 is the Bell "+" state, leg 1 the "-".
//
// Rung values:  Psi-type slice  wa0 + wb0
//               Phi-type slice  wa0 - wb0
// Bond m -> m+1: leg 0  sqrt(m+1) (la + lb)
//                leg 1  sqrt(m+1) (lb - la)
// The Phi-rung and leg-1 signs follow from the Bell-state phases fixed in
// bell_transform; flipping the sign of every |Phi-> state maps them to the
// opposite convention, leaving all observables unchanged.
struct LadderMatrix {
  int parity = +1;         // {+1, -1}
  int slices = 0;          // M + 1
  Eigen::MatrixXd matrix;  // 2(M+1) x 2(M+1), state order (m, leg): 2m + leg

  bool slice_is_psi(int m) const { return (m % 2 == 0) == (parity == +1); }
  double rung(int m) const { return matrix(2 * m, 2 * m + 1); }
  double leg_hop(int leg, int m) const {  // bond from slice m to m+1
    return matrix(2 * m + leg, 2 * (m + 1) + leg);
  }
};

std::pair<LadderMatrix, LadderMatrix> build_ladders(const ModelParams& p,
                                                    const Truncation& tr);

// Permutation sorting Bell-basis rows into (ladder +, slice-major, legs +/-)
// followed by ladder -; perm[k] is the Bell row placed at sorted position k.
std::vector<int> parity_permutation(const Truncation& tr);

struct BlockEquivalenceReport {
  double residual = 0.0;  // max-norm of P Q H Q^T P^T - diag(L+, L-)
  int row = -1, col = -1; // location of the worst entry (sorted basis)
};

// Numerical proof that the two ladders are exactly the parity blocks of H.
BlockEquivalenceReport verify_block_equivalence(const ModelParams& p,
                                                const Truncation& tr);

// Plain-text dump, one entry per line: "slice_i leg_i slice_j leg_j value".
// Self entries carry the on-site energies, (i, i) cross-leg lines the rungs,
// (i, i+1) lines the bonds. Zero bonds are kept so the shape is fixed.
std::string ladder_edge_list(const LadderMatrix& lad);

}  // namespace bosonbus
