#include "bosonbus/ladder.hpp"

#include <cmath>
#include <cstdio>

namespace bosonbus {

static LadderMatrix build_one(const ModelParams& p, const Truncation& tr, int parity) {
  LadderMatrix lad;
  lad.parity = parity;
  lad.slices = tr.slices();
  const int n = tr.dim_ladder();
  lad.matrix = Eigen::MatrixXd::Zero(n, n);
  const double rung_psi = p.omega_a0 + p.omega_b0;
  const double rung_phi = p.omega_a0 - p.omega_b0;
  const double hop_plus = p.lambda_a + p.lambda_b;
  const double hop_minus = p.lambda_b - p.lambda_a;
  for (int m = 0; m < lad.slices; ++m) {
    const int i = 2 * m;
    lad.matrix(i, i) = lad.matrix(i + 1, i + 1) = p.omega * m;
    const double r = lad.slice_is_psi(m) ? rung_psi : rung_phi;
    lad.matrix(i, i + 1) = lad.matrix(i + 1, i) = r;
    if (m + 1 < lad.slices) {
      const double amp = std::sqrt(double(m + 1));
      lad.matrix(i, i + 2) = lad.matrix(i + 2, i) = amp * hop_plus;
      lad.matrix(i + 1, i + 3) = lad.matrix(i + 3, i + 1) = amp * hop_minus;
    }
  }
  return lad;
}

std::pair<LadderMatrix, LadderMatrix> build_ladders(const ModelParams& p,
                                                    const Truncation& tr) {
  p.validate();
  tr.validate();
  return {build_one(p, tr, +1), build_one(p, tr, -1)};
}

std::vector<int> parity_permutation(const Truncation& tr) {
  tr.validate();
  std::vector<int> perm;
  perm.reserve(tr.dim_full());
  for (int parity : {+1, -1}) {
    for (int m = 0; m <= tr.max_phonon; ++m) {
      // Bell rows 4m + {0,1} are Psi+/-, 4m + {2,3} are Phi+/-.
      const bool psi = (m % 2 == 0) == (parity == +1);
      const int base = 4 * m + (psi ? 0 : 2);
      perm.push_back(base);
      perm.push_back(base + 1);
    }
  }
  return perm;
}

BlockEquivalenceReport verify_block_equivalence(const ModelParams& p,
                                                const Truncation& tr) {
  const Eigen::MatrixXd h = build_full_hamiltonian(p, tr);
  const Eigen::MatrixXd q = bell_transform(tr);
  const std::vector<int> perm = parity_permutation(tr);
  const auto [lp, lm] = build_ladders(p, tr);
  const Eigen::MatrixXd rot = q * h * q.transpose();
  const int n = tr.dim_full();
  const int half = tr.dim_ladder();
  BlockEquivalenceReport rep;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double want = (i < half && j < half)   ? lp.matrix(i, j)
                          : (i >= half && j >= half) ? lm.matrix(i - half, j - half)
                                                     : 0.0;
      const double diff = std::abs(rot(perm[i], perm[j]) - want);
      if (diff > rep.residual) {
        rep.residual = diff;
        rep.row = i;
        rep.col = j;
      }
    }
  }
  return rep;
}

std::string ladder_edge_list(const LadderMatrix& lad) {
  std::string out;
  char line[128];
  auto emit = [&](int si, int li, int sj, int lj, double v) {
    std::snprintf(line, sizeof line, "%d %d %d %d %.17g\n", si, li, sj, lj, v);
    out += line;
  };
  for (int m = 0; m < lad.slices; ++m) {
    emit(m, 0, m, 0, lad.matrix(2 * m, 2 * m));
    emit(m, 1, m, 1, lad.matrix(2 * m + 1, 2 * m + 1));
    emit(m, 0, m, 1, lad.rung(m));
    if (m + 1 < lad.slices) {
      emit(m, 0, m + 1, 0, lad.leg_hop(0, m));
      emit(m, 1, m + 1, 1, lad.leg_hop(1, m));
    }
  }
  return out;
}

}  // namespace bosonbus
