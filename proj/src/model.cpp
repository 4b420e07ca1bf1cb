#include "bosonbus/model.hpp"

#include <cmath>

namespace bosonbus {

void ModelParams::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(omega_a0) || !finite(omega_b0) || !finite(omega) ||
      !finite(lambda_a) || !finite(lambda_b))
    throw std::invalid_argument("model parameters must be finite");
  if (omega_a0 < 0.0 || omega_b0 < 0.0)
    throw std::invalid_argument("omega_a0 and omega_b0 must be >= 0");
  if (omega <= 0.0) throw std::invalid_argument("omega must be > 0");
}

void Truncation::validate() const {
  if (max_phonon < 1) throw std::invalid_argument("max_phonon must be >= 1");
}

int flat_index(const BasisIndex& s) { return 4 * s.m + 2 * s.eta_a + s.eta_b; }

BasisIndex unflatten(int flat) {
  BasisIndex s;
  s.m = flat / 4;
  s.eta_a = (flat % 4) / 2;
  s.eta_b = flat % 2;
  return s;
}

int parity_of(const BasisIndex& s) {
  return (s.eta_a + s.eta_b + s.m) % 2 == 0 ? +1 : -1;
}

Eigen::MatrixXd build_full_hamiltonian(const ModelParams& p, const Truncation& tr) {
  p.validate();
  tr.validate();
  const int n = tr.dim_full();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  auto sz = [](int eta) { return eta == 0 ? +1.0 : -1.0; };
  for (int m = 0; m <= tr.max_phonon; ++m) {
    for (int ea = 0; ea < 2; ++ea) {
      for (int eb = 0; eb < 2; ++eb) {
        const int i = flat_index({ea, eb, m});
        h(i, i) = p.omega_a0 * sz(ea) + p.omega_b0 * sz(eb) + p.omega * m;
        if (m < tr.max_phonon) {
          const double amp = std::sqrt(double(m + 1));
          const int ja = flat_index({1 - ea, eb, m + 1});
          const int jb = flat_index({ea, 1 - eb, m + 1});
          h(i, ja) = h(ja, i) = p.lambda_a * amp;
          h(i, jb) = h(jb, i) = p.lambda_b * amp;
        }
      }
    }
  }
  return h;
}

Eigen::MatrixXd bell_transform(const Truncation& tr) {
  tr.validate();
  const int n = tr.dim_full();
  const double r = 1.0 / std::sqrt(2.0);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int m = 0; m <= tr.max_phonon; ++m) {
    const int i00 = flat_index({0, 0, m});
    const int i01 = flat_index({0, 1, m});
    const int i10 = flat_index({1, 0, m});
    const int i11 = flat_index({1, 1, m});
    q(4 * m + 0, i00) = r;
    q(4 * m + 0, i11) = r;
    q(4 * m + 1, i00) = r;
    q(4 * m + 1, i11) = -r;
    q(4 * m + 2, i01) = r;
    q(4 * m + 2, i10) = r;
    q(4 * m + 3, i01) = r;
    q(4 * m + 3, i10) = -r;
  }
  return q;
}

}  // namespace bosonbus
