#include "bosonbus/fidelity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

namespace bosonbus {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2 = 0.70710678118654752440;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double to_unit_double(std::uint64_t z) {
  return double(z >> 11) * 0x1.0p-53;
}

// Bloch vector of a Hermitian 2x2 matrix (x, y, z components).
inline Eigen::Vector3d bloch_of(const Eigen::Matrix2cd& x) {
  return {2.0 * x(0, 1).real(), -2.0 * x(0, 1).imag(),
          x(0, 0).real() - x(1, 1).real()};
}

void run_chunks(int n_chunks, int threads, const std::function<void(int)>& work) {
  threads = std::max(1, std::min(threads, n_chunks));
  if (threads == 1) {
    for (int c = 0; c < n_chunks; ++c) work(c);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int i = 0; i < threads; ++i)
    pool.emplace_back([&] {
      for (int c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) work(c);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

void BlochState::validate() const {
  if (!(theta >= 0.0 && theta <= kPi))
    throw std::invalid_argument("theta must be in [0, pi]");
  if (!(phi >= 0.0 && phi < 2.0 * kPi))
    throw std::invalid_argument("phi must be in [0, 2 pi)");
}

Eigen::Vector2cd BlochState::amplitudes() const {
  validate();
  return {Complex(std::cos(theta / 2.0), 0.0),
          std::polar(std::sin(theta / 2.0), phi)};
}

Eigen::Vector3d BlochState::bloch_vector() const {
  validate();
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
          std::cos(theta)};
}

const char* to_string(FidelityEngine e) {
  switch (e) {
    case FidelityEngine::direct: return "direct";
    case FidelityEngine::ladder: return "ladder";
    case FidelityEngine::ladder_printed: return "ladder-printed";
    case FidelityEngine::montecarlo: return "montecarlo";
  }
  return "?";
}

std::optional<FidelityEngine> engine_from_string(const std::string& name) {
  if (name == "direct") return FidelityEngine::direct;
  if (name == "ladder") return FidelityEngine::ladder;
  if (name == "ladder-printed") return FidelityEngine::ladder_printed;
  if (name == "montecarlo") return FidelityEngine::montecarlo;
  return std::nullopt;
}

TwoLadderEngine::TwoLadderEngine(const ModelParams& p, const Truncation& tr)
    : p_(p), tr_(tr) {
  const auto [lp, lm] = build_ladders(p, tr);
  sp_ = diagonalize(lp.matrix);
  sm_ = diagonalize(lm.matrix);
  vp_c_ = sp_.eigenvectors.cast<Complex>();
  vm_c_ = sm_.eigenvectors.cast<Complex>();
  // |0_A 0_B 0> = (|Psi+,0> + |Psi-,0>)/sqrt2, slice 0 of ladder +;
  // |1_A 0_B 0> = (|Phi+,0> - |Phi-,0>)/sqrt2, slice 0 of ladder -.
  Eigen::VectorXd up = Eigen::VectorXd::Zero(tr.dim_ladder());
  Eigen::VectorXd um = Eigen::VectorXd::Zero(tr.dim_ladder());
  up[0] = up[1] = kInvSqrt2;
  um[0] = kInvSqrt2;
  um[1] = -kInvSqrt2;
  wp_ = sp_.eigenvectors.transpose() * up;
  wm_ = sm_.eigenvectors.transpose() * um;
}

void TwoLadderEngine::chi_at(double t, Eigen::VectorXcd& chi_plus,
                             Eigen::VectorXcd& chi_minus) const {
  const int n = tr_.dim_ladder();
  Eigen::VectorXcd phased(n);
  for (int k = 0; k < n; ++k)
    phased[k] = std::polar(wp_[k], -sp_.eigenvalues[k] * t);
  chi_plus = vp_c_ * phased;
  for (int k = 0; k < n; ++k)
    phased[k] = std::polar(wm_[k], -sm_.eigenvalues[k] * t);
  chi_minus = vm_c_ * phased;
}

// Slice m of ladder + holds the |00m>, |11m> pair when m is even, the
// |01m>, |10m> pair when m is odd; ladder - the complement. Converting leg
// amplitudes back to product amplitudes with W = [[1,1],[1,-1]]/sqrt2 and
// tracing out A and the boson yields a three-sum expression for Tr T.
double TwoLadderEngine::fidelity_from_chis(const Eigen::VectorXcd& chi_plus,
                                           const Eigen::VectorXcd& chi_minus) {
  const int slices = int(chi_plus.size()) / 2;
  Complex sum_c(0.0, 0.0);
  double sum_d = 0.0, sum_e = 0.0;
  for (int m = 0; m < slices; ++m) {
    const Complex a0 = (chi_plus[2 * m] + chi_plus[2 * m + 1]) * kInvSqrt2;
    const Complex a1 = (chi_plus[2 * m] - chi_plus[2 * m + 1]) * kInvSqrt2;
    const Complex b0 = (chi_minus[2 * m] + chi_minus[2 * m + 1]) * kInvSqrt2;
    const Complex b1 = (chi_minus[2 * m] - chi_minus[2 * m + 1]) * kInvSqrt2;
    const bool even = (m % 2 == 0);
    sum_c += even ? a0 * std::conj(b0) : a1 * std::conj(b1);
    const double d = std::norm(a0) - std::norm(a1);
    const double e = std::norm(b0) - std::norm(b1);
    sum_d += even ? d : -d;
    sum_e += even ? e : -e;
  }
  const double tr_t = 2.0 * sum_c.real() + 0.5 * (sum_d + sum_e);
  return 0.5 + tr_t / 6.0;
}

double TwoLadderEngine::average_fidelity(double t) const {
  Eigen::VectorXcd cp, cm;
  chi_at(t, cp, cm);
  return fidelity_from_chis(cp, cm);
}

TwoLadderEngine::ChannelMatrices TwoLadderEngine::channel(
    const Eigen::VectorXcd& chi_plus, const Eigen::VectorXcd& chi_minus) const {
  ChannelMatrices g;
  g.g00.setZero();
  g.g11.setZero();
  g.g01.setZero();
  for (int m = 0; m < tr_.slices(); ++m) {
    const Complex a0 = (chi_plus[2 * m] + chi_plus[2 * m + 1]) * kInvSqrt2;
    const Complex a1 = (chi_plus[2 * m] - chi_plus[2 * m + 1]) * kInvSqrt2;
    const Complex b0 = (chi_minus[2 * m] + chi_minus[2 * m + 1]) * kInvSqrt2;
    const Complex b1 = (chi_minus[2 * m] - chi_minus[2 * m + 1]) * kInvSqrt2;
    if (m % 2 == 0) {
      g.g00(0, 0) += std::norm(a0);
      g.g00(1, 1) += std::norm(a1);
      g.g11(0, 0) += std::norm(b1);
      g.g11(1, 1) += std::norm(b0);
      g.g01(0, 1) += a0 * std::conj(b0);
      g.g01(1, 0) += a1 * std::conj(b1);
    } else {
      g.g00(0, 0) += std::norm(a1);
      g.g00(1, 1) += std::norm(a0);
      g.g11(0, 0) += std::norm(b0);
      g.g11(1, 1) += std::norm(b1);
      g.g01(0, 1) += a1 * std::conj(b1);
      g.g01(1, 0) += a0 * std::conj(b0);
    }
  }
  return g;
}

TransferTensor TwoLadderEngine::transfer_tensor(double t) const {
  Eigen::VectorXcd cp, cm;
  chi_at(t, cp, cm);
  const ChannelMatrices g = channel(cp, cm);
  const Eigen::Matrix2cd g10 = g.g01.adjoint();
  const Complex im(0.0, 1.0);
  TransferTensor tt;
  tt.T.col(0) = bloch_of(0.5 * (g.g01 + g10));
  tt.T.col(1) = bloch_of(0.5 * im * (g10 - g.g01));
  tt.T.col(2) = bloch_of(0.5 * (g.g00 - g.g11));
  tt.T0 = bloch_of(0.5 * (g.g00 + g.g11));
  return tt;
}

Eigen::Matrix2cd TwoLadderEngine::reduced_density_b(const BlochState& psi_a,
                                                    double t) const {
  const Eigen::Vector2cd c = psi_a.amplitudes();
  Eigen::VectorXcd cp, cm;
  chi_at(t, cp, cm);
  const ChannelMatrices g = channel(cp, cm);
  return std::norm(c[0]) * g.g00 + std::norm(c[1]) * g.g11 +
         c[0] * std::conj(c[1]) * g.g01 +
         c[1] * std::conj(c[0]) * g.g01.adjoint();
}

std::vector<double> TwoLadderEngine::trace_values(const std::vector<double>& times,
                                                  int threads) const {
  const int n = tr_.dim_ladder();
  const int total = int(times.size());
  const int chunk = 512;
  const int n_chunks = (total + chunk - 1) / chunk;
  std::vector<double> out(total);
  run_chunks(n_chunks, threads, [&](int ci) {
    const int begin = ci * chunk;
    const int count = std::min(chunk, total - begin);
    Eigen::MatrixXcd phases_p(n, count), phases_m(n, count);
    for (int j = 0; j < count; ++j) {
      const double t = times[begin + j];
      for (int k = 0; k < n; ++k) {
        phases_p(k, j) = std::polar(wp_[k], -sp_.eigenvalues[k] * t);
        phases_m(k, j) = std::polar(wm_[k], -sm_.eigenvalues[k] * t);
      }
    }
    const Eigen::MatrixXcd chis_p = vp_c_ * phases_p;
    const Eigen::MatrixXcd chis_m = vm_c_ * phases_m;
    for (int j = 0; j < count; ++j)
      out[begin + j] = fidelity_from_chis(chis_p.col(j), chis_m.col(j));
  });
  return out;
}

std::pair<double, double> TwoLadderEngine::montecarlo(double t, int n_samples,
                                                      std::uint64_t seed) const {
  if (n_samples < 100)
    throw std::invalid_argument("montecarlo needs at least 100 samples");
  Eigen::VectorXcd cp, cm;
  chi_at(t, cp, cm);
  const int slices = tr_.slices();
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    std::uint64_t stream = seed ^ (0xD1B54A32D192ED03ULL * std::uint64_t(i + 1));
    const double cos_theta = 2.0 * to_unit_double(splitmix64(stream)) - 1.0;
    const double phi = 2.0 * kPi * to_unit_double(splitmix64(stream));
    const double half = std::acos(cos_theta) / 2.0;
    const Complex c0(std::cos(half), 0.0);
    const Complex c1 = std::polar(std::sin(half), phi);
    // <psi_A| rho_B |psi_A> accumulated slice by slice from the product
    // amplitudes of c0 (ladder +) and c1 (ladder -) evolution.
    double f = 0.0;
    for (int m = 0; m < slices; ++m) {
      const Complex a0 = (cp[2 * m] + cp[2 * m + 1]) * kInvSqrt2;
      const Complex a1 = (cp[2 * m] - cp[2 * m + 1]) * kInvSqrt2;
      const Complex b0 = (cm[2 * m] + cm[2 * m + 1]) * kInvSqrt2;
      const Complex b1 = (cm[2 * m] - cm[2 * m + 1]) * kInvSqrt2;
      Complex amp00, amp01, amp10, amp11;
      if (m % 2 == 0) {
        amp00 = c0 * a0;
        amp11 = c0 * a1;
        amp01 = c1 * b0;
        amp10 = c1 * b1;
      } else {
        amp01 = c0 * a0;
        amp10 = c0 * a1;
        amp00 = c1 * b0;
        amp11 = c1 * b1;
      }
      f += std::norm(std::conj(c0) * amp00 + std::conj(c1) * amp01);
      f += std::norm(std::conj(c0) * amp10 + std::conj(c1) * amp11);
    }
    sum += f;
    sum_sq += f * f;
  }
  const double mean = sum / n_samples;
  const double var =
      std::max(0.0, (sum_sq - n_samples * mean * mean) / (n_samples - 1));
  return {mean, std::sqrt(var / n_samples)};
}

Eigen::Matrix2cd reduced_density_b(const ModelParams& p, const Truncation& tr,
                                   const BlochState& psi_a, double t) {
  return TwoLadderEngine(p, tr).reduced_density_b(psi_a, t);
}

TransferTensor transfer_tensor(const ModelParams& p, const Truncation& tr,
                               double t) {
  return TwoLadderEngine(p, tr).transfer_tensor(t);
}

double average_fidelity_direct(const TransferTensor& tt) {
  const double f = 0.5 * (1.0 + tt.T.trace() / 3.0);
  if (f < -1e-9 || f > 1.0 + 1e-9)
    throw std::runtime_error("average fidelity outside [0, 1]: non-physical transfer tensor");
  return std::clamp(f, 0.0, 1.0);
}

static void check_pair(const SlicePropagators& fplus, const SlicePropagators& fminus) {
  if (fplus.parity != +1 || fminus.parity != -1)
    throw std::invalid_argument("ladder fidelity needs (+, -) parity propagators");
  if (fplus.time != fminus.time)
    throw std::invalid_argument("ladder fidelity: mismatched times");
  if (fplus.blocks.size() != fminus.blocks.size())
    throw std::invalid_argument("ladder fidelity: mismatched truncations");
}

double average_fidelity_ladder_printed(const SlicePropagators& fplus,
                                       const SlicePropagators& fminus) {
  check_pair(fplus, fminus);
  Eigen::Matrix2cd sz, sx, miy, sz1, sz2, sp, sm;
  sz << 1, 0, 0, -1;
  sx << 0, 1, 1, 0;
  miy << 0, -1, 1, 0;  // -i sigma_y
  sz1 << 1, 0, 0, 0;
  sz2 << 0, 0, 0, -1;
  sp << 0, 1, 0, 0;
  sm << 0, 0, 1, 0;
  double sum = 0.0;
  for (size_t m = 0; m < fplus.blocks.size(); ++m) {
    const Eigen::Matrix2cd& fp = fplus.blocks[m];
    const Eigen::Matrix2cd& fm = fminus.blocks[m];
    const Eigen::Matrix2cd a = fp + sz * fm;
    const Eigen::Matrix2cd b = fp + miy * fm * sx;
    const Eigen::Matrix2cd c =
        sz1 * fp + 0.5 * sp * fp * sx + 0.5 * sm * fm + sz2 * fm * sx;
    sum += a.squaredNorm() + b.squaredNorm() + c.squaredNorm();
  }
  return sum / 24.0;
}

double average_fidelity_ladder(const SlicePropagators& fplus,
                               const SlicePropagators& fminus) {
  check_pair(fplus, fminus);
  const Eigen::Vector2cd up(kInvSqrt2, kInvSqrt2);
  const Eigen::Vector2cd um(kInvSqrt2, -kInvSqrt2);
  Complex sum_c(0.0, 0.0);
  double sum_d = 0.0, sum_e = 0.0;
  for (size_t m = 0; m < fplus.blocks.size(); ++m) {
    const Eigen::Vector2cd va = fplus.blocks[m] * up;
    const Eigen::Vector2cd vb = fminus.blocks[m] * um;
    const Complex a0 = (va[0] + va[1]) * kInvSqrt2;
    const Complex a1 = (va[0] - va[1]) * kInvSqrt2;
    const Complex b0 = (vb[0] + vb[1]) * kInvSqrt2;
    const Complex b1 = (vb[0] - vb[1]) * kInvSqrt2;
    const bool even = (m % 2 == 0);
    sum_c += even ? a0 * std::conj(b0) : a1 * std::conj(b1);
    const double d = std::norm(a0) - std::norm(a1);
    const double e = std::norm(b0) - std::norm(b1);
    sum_d += even ? d : -d;
    sum_e += even ? e : -e;
  }
  return 0.5 + (2.0 * sum_c.real() + 0.5 * (sum_d + sum_e)) / 6.0;
}

std::pair<double, double> average_fidelity_montecarlo(const ModelParams& p,
                                                      const Truncation& tr,
                                                      double t, int n_samples,
                                                      std::uint64_t seed) {
  return TwoLadderEngine(p, tr).montecarlo(t, n_samples, seed);
}

FidelityTrace fidelity_trace(const ModelParams& p, const Truncation& tr,
                             const std::vector<double>& times,
                             FidelityEngine engine, const TraceOptions& opts) {
  if (times.empty()) throw std::invalid_argument("fidelity_trace: empty time grid");
  for (size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1])
      throw std::invalid_argument("fidelity_trace: time grid must ascend");
  FidelityTrace trace;
  trace.times = times;
  trace.params = p;
  trace.trunc = tr;
  trace.engine = engine;
  const TwoLadderEngine eng(p, tr);
  switch (engine) {
    case FidelityEngine::direct:
      trace.values = eng.trace_values(times, opts.threads);
      break;
    case FidelityEngine::ladder:
    case FidelityEngine::ladder_printed: {
      trace.values.resize(times.size());
      const bool printed = engine == FidelityEngine::ladder_printed;
      const int n_pts = int(times.size());
      run_chunks(n_pts, opts.threads, [&](int i) {
        const auto fp = propagator_at(eng.spectral_plus(), times[i], +1);
        const auto fm = propagator_at(eng.spectral_minus(), times[i], -1);
        trace.values[i] = printed ? average_fidelity_ladder_printed(fp, fm)
                                  : average_fidelity_ladder(fp, fm);
      });
      break;
    }
    case FidelityEngine::montecarlo: {
      trace.values.resize(times.size());
      const int n_pts = int(times.size());
      run_chunks(n_pts, opts.threads, [&](int i) {
        trace.values[i] = eng.montecarlo(times[i], opts.mc_samples, opts.seed).first;
      });
      break;
    }
  }
  return trace;
}

FidelityPeak find_peak(const FidelityTrace& trace, const PeakOptions& opts) {
  if (trace.times.empty()) throw std::invalid_argument("find_peak: empty trace");
  if (opts.eps_peak <= 0.0) throw std::invalid_argument("find_peak: eps_peak must be > 0");
  const auto& ts = trace.times;
  const auto& vs = trace.values;
  const int n = int(ts.size());

  FidelityPeak peak;
  peak.window_end = ts.back();
  double f_max = vs[0];
  for (double v : vs) f_max = std::max(f_max, v);
  peak.f_max = f_max;

  int qualify = 0;
  while (vs[qualify] < f_max - opts.eps_peak) ++qualify;
  peak.t_peak = ts[qualify];

  // Window-bound: the maximum is only approached near the window end. The
  // trailing tail must come within eps of f_max while the leading head stays
  // below it, i.e. the trace is still climbing when the window closes.
  if (n >= 3) {
    const double span = ts.back() - ts.front();
    const double tail_start = ts.back() - opts.bound_tail * span;
    const double head_end = ts.front() + opts.bound_head * span;
    double tail_max = -1.0, head_max = -1.0;
    for (int i = 0; i < n; ++i) {
      if (ts[i] >= tail_start) tail_max = std::max(tail_max, vs[i]);
      if (ts[i] <= head_end) head_max = std::max(head_max, vs[i]);
    }
    if (tail_max >= f_max - opts.eps_peak && head_max < f_max - opts.eps_peak) {
      peak.window_bound = true;
      peak.t_peak = ts.back();
      return peak;
    }
  }

  if (opts.refine_engine != nullptr && n >= 2) {
    const auto& eng = *opts.refine_engine;
    const double step = qualify + 1 < n ? ts[qualify + 1] - ts[qualify]
                                        : ts[qualify] - ts[qualify - 1];
    double lo = std::max(ts.front(), ts[qualify] - step);
    double hi = std::min(ts.back(), ts[qualify] + step);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = eng.average_fidelity(x1), f2 = eng.average_fidelity(x2);
    while (hi - lo > 1e-10 * std::max(1.0, step)) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = eng.average_fidelity(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = eng.average_fidelity(x1);
      }
    }
    const double t_star = 0.5 * (lo + hi);
    const double f_star = eng.average_fidelity(t_star);
    // Move only on strict improvement so flat traces keep the earliest tie.
    if (f_star > vs[qualify] + 1e-12) {
      peak.t_peak = t_star;
      peak.f_max = std::max(peak.f_max, f_star);
    }
  }
  return peak;
}

std::vector<double> time_grid(double t_max, double dt) {
  if (!(t_max >= 0.0) || !(dt > 0.0))
    throw std::invalid_argument("time_grid: need t_max >= 0 and dt > 0");
  std::vector<double> ts;
  const long long count = (long long)(std::floor(t_max / dt + 1e-9)) + 1;
  ts.reserve(size_t(count));
  for (long long k = 0; k < count; ++k) ts.push_back(double(k) * dt);
  return ts;
}

}  // namespace bosonbus
