#pragma once

#include "bosonbus/propagate.hpp"

#include <cstdint>
#include <optional>
#include <utility>

namespace bosonbus {

// Input state of qubit A: cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>.
struct BlochState {
  double theta = 0.0;  // [0, pi]
  double phi = 0.0;    // [0, 2 pi)

  void validate() const;
  Eigen::Vector2cd amplitudes() const;
  Eigen::Vector3d bloch_vector() const;
};

// Affine Bloch map of the A -> B channel: p_B(t) = T p_A + T0.
struct TransferTensor {
  Eigen::Matrix3d T = Eigen::Matrix3d::Zero();
  Eigen::Vector3d T0 = Eigen::Vector3d::Zero();
};

enum class FidelityEngine { direct, ladder, ladder_printed, montecarlo };

const char* to_string(FidelityEngine e);
std::optional<FidelityEngine> engine_from_string(const std::string& name);

struct FidelityTrace {
  std::vector<double> times;
  std::vector<double> values;
  ModelParams params;
  Truncation trunc;
  FidelityEngine engine = FidelityEngine::direct;
};

struct FidelityPeak {
  double f_max = 0.0;
  double t_peak = 0.0;
  double window_end = 0.0;
  bool window_bound = false;
};

// Direct-route evaluator. The initial states |0_A 0_B 0> and |1_A 0_B 0>
// live in slice 0 of the + and - parity ladders; everything observable
// about the channel follows from their evolved amplitudes chi+-(t).
class TwoLadderEngine {
 public:
  TwoLadderEngine(const ModelParams& p, const Truncation& tr);

  const ModelParams& params() const { return p_; }
  const Truncation& trunc() const { return tr_; }
  const SpectralDecomposition& spectral_plus() const { return sp_; }
  const SpectralDecomposition& spectral_minus() const { return sm_; }

  // Evolved slice-0 amplitudes of the two ladder initial states.
  void chi_at(double t, Eigen::VectorXcd& chi_plus, Eigen::VectorXcd& chi_minus) const;

  double average_fidelity(double t) const;
  TransferTensor transfer_tensor(double t) const;
  Eigen::Matrix2cd reduced_density_b(const BlochState& psi_a, double t) const;

  // One value per grid time; chunked so the eigenbasis rotation runs as a
  // matrix-matrix product. Thread-count never changes the values.
  std::vector<double> trace_values(const std::vector<double>& times,
                                   int threads = 1) const;

  // Uniform Bloch-sphere Monte Carlo: (estimate, standard error). Each
  // sample draws from its own splitmix64 substream keyed by (seed, index),
  // so results are reproducible for any thread count.
  std::pair<double, double> montecarlo(double t, int n_samples,
                                       std::uint64_t seed) const;

 private:
  ModelParams p_;
  Truncation tr_;
  SpectralDecomposition sp_, sm_;
  Eigen::MatrixXcd vp_c_, vm_c_;  // eigenvector copies for complex products
  Eigen::VectorXd wp_, wm_;       // eigenbasis images of the initial states

  struct ChannelMatrices {
    Eigen::Matrix2cd g00, g11, g01;  // rho_B = sum rho_A(i,j) g_ij, g10 = g01^+
  };
  ChannelMatrices channel(const Eigen::VectorXcd& chi_plus,
                          const Eigen::VectorXcd& chi_minus) const;
  static double fidelity_from_chis(const Eigen::VectorXcd& chi_plus,
                                   const Eigen::VectorXcd& chi_minus);
};

// Free-function forms; each constructs the engine it needs.
Eigen::Matrix2cd reduced_density_b(const ModelParams& p, const Truncation& tr,
                                   const BlochState& psi_a, double t);
TransferTensor transfer_tensor(const ModelParams& p, const Truncation& tr, double t);

// <F> = (1 + Tr T / 3) / 2; errors if the result is not within 1e-9 of [0, 1].
double average_fidelity_direct(const TransferTensor& tt);

// Slice-propagator fidelity formula. The printed variant evaluates the
// published expression verbatim; it is miscalibrated (t = 0 gives 0.4375,
// not 1/2) and is kept as a diagnostic. The calibrated variant evaluates
// the corrected closed form derived from the same f_m(+-, t) blocks and
// matches the direct route to numerical precision.
double average_fidelity_ladder_printed(const SlicePropagators& fplus,
                                       const SlicePropagators& fminus);
double average_fidelity_ladder(const SlicePropagators& fplus,
                               const SlicePropagators& fminus);

std::pair<double, double> average_fidelity_montecarlo(const ModelParams& p,
                                                      const Truncation& tr,
                                                      double t, int n_samples,
                                                      std::uint64_t seed);

struct TraceOptions {
  int threads = 1;
  int mc_samples = 10000;
  std::uint64_t seed = 12345;
};

FidelityTrace fidelity_trace(const ModelParams& p, const Truncation& tr,
                             const std::vector<double>& times,
                             FidelityEngine engine,
                             const TraceOptions& opts = {});

// Peak extraction. f_max is the window maximum; t_peak the earliest grid
// time within eps_peak of it, optionally refined by golden-section search
// (+- one grid step) on the direct engine. A trace whose maximum is only
// approached near the window end is flagged window-bound: the tail of the
// window comes within eps_peak of f_max while the first bound_head fraction
// stays more than eps_peak below it. Window-bound peaks report
// t_peak = window_end.
struct PeakOptions {
  double eps_peak = 1e-3;
  double bound_tail = 0.05;  // trailing window fraction that must reach the top
  double bound_head = 0.5;   // leading fraction that must stay below it
  const TwoLadderEngine* refine_engine = nullptr;
};

FidelityPeak find_peak(const FidelityTrace& trace, const PeakOptions& opts = {});

// Evenly spaced grid 0, dt, ..., covering [0, t_max] (last point <= t_max).
std::vector<double> time_grid(double t_max, double dt);

}  // namespace bosonbus
