// bosonbus: command-line front end for the two-qubit / boson-bus transfer
// simulator. Commands: trace, peak, converge, sweep, asym, validate.
//
// Exit codes: 0 success, 1 computation failure, 2 usage error. Stdout carries
// machine-readable CSV only; diagnostics go to stderr.
#include "CLI11.hpp"

#include "bosonbus/config.hpp"
#include "bosonbus/fidelity.hpp"
#include "bosonbus/ladder.hpp"
#include "bosonbus/model.hpp"
#include "bosonbus/propagate.hpp"
#include "bosonbus/sweep.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace bb = bosonbus;

namespace {

constexpr int kExitCompute = 1;
constexpr int kExitUsage = 2;

// Storage bound to the CLI11 options. Sentinels mark "not set anywhere";
// per-command defaults are applied during resolution, after the config file.
struct Options {
  double omega_a0 = 20.0, omega_b0 = 20.0, omega = 1.0;
  double lambda_a = 0.8, lambda_b = 0.8;
  int max_phonon = 50;
  bool auto_converge = false;
  double tol = 1e-3;
  int m_start = 10, m_step = 10, m_cap = 200;
  double t_max = -1.0, dt = -1.0;
  std::string engine = "direct";
  std::uint64_t seed = 12345;
  int mc_samples = 10000;
  double eps_peak = -1.0;
  double f_lo = 0.9;
  int threads = 0;
  bool timing = false;
  std::string out, heatmap, config_path, checkpoint;
  std::string lambda_axis = "0:2:5", omega_axis = "0:80:5";
  std::string axis = "delta-omega";
  std::string deltas = "-0.01,-0.001,-0.0001,0,0.0001,0.001,0.01";
};

// One subcommand plus its registered flags, keyed by config-file name.
struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, CLI::Option*> flag;

  bool given(const std::string& key) const {
    const auto it = flag.find(key);
    return it != flag.end() && it->second->count() > 0;
  }
};

// Everything a command needs, fully resolved (flag > config > default).
struct Run {
  std::string command;
  bb::ModelParams params;
  int max_phonon = 50;
  bool auto_converge = false;
  bool pin_truncation = false;  // --max-phonon given on a sweep-family command
  double tol = 1e-3;
  int m_start = 10, m_step = 10, m_cap = 200;
  double t_max = 0.0, dt = 1.0;
  bb::FidelityEngine engine = bb::FidelityEngine::direct;
  std::uint64_t seed = 12345;
  int mc_samples = 10000;
  double eps_peak = 1e-3;
  double f_lo = 0.9;
  int threads = 1;
  bool timing = false;
  std::string out, heatmap, checkpoint;
  bb::AxisSpec lambda_axis, omega_axis;
  bb::AsymmetryAxis axis = bb::AsymmetryAxis::delta_omega;
  std::vector<double> deltas;
};

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0')
    throw std::invalid_argument(what + ": expected an unsigned integer, got '" +
                                text + "'");
  return v;
}

bb::AxisSpec parse_axis_spec(const std::string& text, const std::string& what) {
  bb::AxisSpec spec;
  const auto c1 = text.find(':');
  const auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos ||
      text.find(':', c2 + 1) != std::string::npos)
    throw std::invalid_argument(what + ": expected MIN:MAX:STEPS, got '" + text +
                                "'");
  spec.min = bb::parse_double(text.substr(0, c1), what + " min");
  spec.max = bb::parse_double(text.substr(c1 + 1, c2 - c1 - 1), what + " max");
  spec.steps = bb::parse_int(text.substr(c2 + 1), what + " steps");
  if (spec.steps < 1) throw std::invalid_argument(what + ": steps must be >= 1");
  if (!(spec.min <= spec.max))
    throw std::invalid_argument(what + ": min must be <= max");
  return spec;
}

std::vector<double> parse_delta_list(const std::string& text) {
  std::vector<double> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ','))
    out.push_back(bb::parse_double(cur, "deltas entry"));
  if (out.empty()) throw std::invalid_argument("deltas: empty list");
  return out;
}

// CSV sink honoring --out; stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw std::runtime_error("cannot open output file " + path);
    }
  }
  std::ostream& stream() { return path_.empty() ? std::cout : file_; }
  void finish() {
    stream().flush();
    if (!path_.empty() && !file_)
      throw std::runtime_error("write failed on " + path_);
  }

 private:
  std::string path_;
  std::ofstream file_;
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << text;
  f.flush();
  if (!f) throw std::runtime_error("write failed on " + path);
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& pixels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "P5\n" << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()),
          std::streamsize(pixels.size()));
  f.flush();
  if (!f) throw std::runtime_error("write failed on " + path);
}

unsigned char fidelity_shade(double f) {
  if (!std::isfinite(f)) return 0;
  const double x = std::min(1.0, std::max(0.0, f));
  return static_cast<unsigned char>(std::lround(255.0 * x));
}

// Log shade over [dt, t_max]; t_peak = 0 (flat trace) and failures map to 0.
unsigned char peak_time_shade(double t, double lo_t, double hi_t) {
  if (!std::isfinite(t) || t <= 0.0) return 0;
  const double lo = std::log10(lo_t), hi = std::log10(hi_t);
  if (!(hi > lo)) return 0;
  const double x =
      std::min(1.0, std::max(0.0, (std::log10(t) - lo) / (hi - lo)));
  return static_cast<unsigned char>(std::lround(255.0 * x));
}

// Truncation used by trace/peak: fixed M, or the converged M when
// --auto-converge is set. Convergence scans on a coarse grid (dt >= 4).
struct ResolvedTruncation {
  bb::Truncation trunc;
  bool converged = false;  // false also means "fixed M, never checked"
};

ResolvedTruncation resolve_truncation(const Run& run) {
  if (!run.auto_converge) return {bb::Truncation{run.max_phonon}, false};
  const bb::Window window{run.t_max, std::max(run.dt, 4.0)};
  const auto res =
      bb::converge_truncation(run.params, window, run.tol, run.m_start,
                              run.m_step, run.m_cap, run.threads);
  std::cerr << "auto-converge: m_used=" << res.m_used
            << (res.converged ? "" : " (cap reached, not converged)") << "\n";
  return {bb::Truncation{res.m_used}, res.converged};
}

int run_trace(const Run& run) {
  const auto rt = resolve_truncation(run);
  const auto times = bb::time_grid(run.t_max, run.dt);
  bb::TraceOptions topts;
  topts.threads = run.threads;
  topts.mc_samples = run.mc_samples;
  topts.seed = run.seed;
  const auto trace =
      bb::fidelity_trace(run.params, rt.trunc, times, run.engine, topts);
  Output out(run.out);
  out.stream() << "t,avg_fidelity\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i)
    out.stream() << bb::format_double(trace.times[i]) << ','
                 << bb::format_double(trace.values[i]) << '\n';
  out.finish();
  return 0;
}

int run_peak(const Run& run) {
  const auto start = std::chrono::steady_clock::now();
  const auto rt = resolve_truncation(run);
  const auto times = bb::time_grid(run.t_max, run.dt);
  bb::TraceOptions topts;
  topts.threads = run.threads;
  topts.mc_samples = run.mc_samples;
  topts.seed = run.seed;
  const auto trace =
      bb::fidelity_trace(run.params, rt.trunc, times, run.engine, topts);

  bb::PeakOptions popts;
  popts.eps_peak = run.eps_peak;
  std::optional<bb::TwoLadderEngine> refine;
  if (run.engine == bb::FidelityEngine::direct) {
    refine.emplace(run.params, rt.trunc);
    popts.refine_engine = &*refine;
  }
  const auto peak = bb::find_peak(trace, popts);

  bb::SweepRecord rec;
  rec.params = run.params;
  rec.m_used = rt.trunc.max_phonon;
  rec.converged = rt.converged;
  rec.f_max = peak.f_max;
  rec.t_peak = peak.t_peak;
  rec.window_bound = peak.window_bound;
  rec.region = bb::classify_region(peak.window_bound, peak.f_max, run.f_lo);
  if (run.timing)
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  Output out(run.out);
  out.stream() << bb::csv_header() << '\n' << bb::csv_row(rec) << '\n';
  out.finish();
  return 0;
}

std::string converge_plot_script(const std::string& prefix,
                                 const std::string& csv_path) {
  std::ostringstream s;
  s << "# render with: gnuplot " << prefix << ".gnuplot\n"
    << "# history rows carry converged=false; the last row is the summary\n"
    << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set terminal pngcairo size 800,500\n"
    << "set output '" << prefix << ".png'\n"
    << "set xlabel 'max phonon M'\n"
    << "set ylabel 'window max average fidelity'\n"
    << "plot '" << csv_path << "' using 6:8 with points pt 7 notitle\n";
  return s.str();
}

int run_converge(const Run& run) {
  const auto start = std::chrono::steady_clock::now();
  const bb::Window window{run.t_max, run.dt};
  const auto res =
      bb::converge_truncation(run.params, window, run.tol, run.m_start,
                              run.m_step, run.m_cap, run.threads);

  Output out(run.out);
  out.stream() << bb::csv_header() << '\n';
  for (const auto& [m, f_max] : res.history) {
    bb::SweepRecord rec;
    rec.params = run.params;
    rec.m_used = m;
    rec.converged = false;
    rec.f_max = f_max;
    rec.t_peak = std::nan("");
    rec.region = bb::Region::na;
    out.stream() << bb::csv_row(rec) << '\n';
  }

  // Summary row: full peak analysis at the settled truncation.
  const bb::Truncation tr{res.m_used};
  const bb::TwoLadderEngine engine(run.params, tr);
  const auto times = bb::time_grid(window.t_max, window.dt);
  bb::FidelityTrace trace;
  trace.times = times;
  trace.values = engine.trace_values(times, run.threads);
  trace.params = run.params;
  trace.trunc = tr;
  bb::PeakOptions popts;
  popts.eps_peak = run.eps_peak;
  popts.refine_engine = &engine;
  const auto peak = bb::find_peak(trace, popts);
  bb::SweepRecord rec;
  rec.params = run.params;
  rec.m_used = res.m_used;
  rec.converged = res.converged;
  rec.f_max = peak.f_max;
  rec.t_peak = peak.t_peak;
  rec.window_bound = peak.window_bound;
  rec.region = bb::classify_region(peak.window_bound, peak.f_max, run.f_lo);
  if (run.timing)
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  out.stream() << bb::csv_row(rec) << '\n';
  out.finish();

  if (!run.heatmap.empty())
    write_text_file(run.heatmap + ".gnuplot",
                    converge_plot_script(run.heatmap, run.out));
  if (!res.converged)
    std::cerr << "warning: truncation cap " << run.m_cap
              << " reached without convergence\n";
  return 0;
}

std::string sweep_plot_script(const std::string& prefix,
                              const bb::AxisSpec& la, const bb::AxisSpec& om) {
  std::ostringstream s;
  s << "# render with: gnuplot " << prefix << ".gnuplot\n"
    << "# pixel grid: columns run lambda_s = " << la.min << " .. " << la.max
    << " (" << la.steps << " steps, left to right),\n"
    << "# rows run omega_s = " << om.min << " .. " << om.max << " ("
    << om.steps << " steps, top row = " << om.max << ")\n"
    << "set terminal pngcairo size 1100,450\n"
    << "set output '" << prefix << ".png'\n"
    << "set palette gray\n"
    << "unset xtics\nunset ytics\n"
    << "set multiplot layout 1,2\n"
    << "set title 'max average fidelity (linear shade 0..1)'\n"
    << "plot '" << prefix
    << "_fidelity.pgm' binary filetype=pgm with image notitle\n"
    << "set title 'first peak time (log shade)'\n"
    << "plot '" << prefix
    << "_tpeak.pgm' binary filetype=pgm with image notitle\n"
    << "unset multiplot\n";
  return s.str();
}

void write_sweep_heatmaps(const Run& run, const std::vector<bb::SweepRecord>& recs) {
  const int nl = run.lambda_axis.steps, nw = run.omega_axis.steps;
  if (int(recs.size()) != nl * nw)
    throw std::runtime_error("heatmap: record count does not match the grid");
  std::vector<unsigned char> fid(recs.size()), tpk(recs.size());
  for (int r = 0; r < nw; ++r) {    // top row = largest omega_s
    for (int c = 0; c < nl; ++c) {  // left column = smallest lambda_s
      const auto& rec = recs[std::size_t(nw - 1 - r) * nl + c];
      fid[std::size_t(r) * nl + c] = fidelity_shade(rec.f_max);
      tpk[std::size_t(r) * nl + c] =
          peak_time_shade(rec.t_peak, run.dt, run.t_max);
    }
  }
  write_pgm(run.heatmap + "_fidelity.pgm", nl, nw, fid);
  write_pgm(run.heatmap + "_tpeak.pgm", nl, nw, tpk);
  write_text_file(run.heatmap + ".gnuplot",
                  sweep_plot_script(run.heatmap, run.lambda_axis, run.omega_axis));
}

bb::SweepOptions sweep_options(const Run& run) {
  bb::SweepOptions opts;
  opts.tol = run.tol;
  opts.m_start = run.m_start;
  opts.m_step = run.m_step;
  opts.m_cap = run.m_cap;
  if (run.pin_truncation) {  // fixed M: a one-step convergence scan
    opts.m_start = run.max_phonon;
    opts.m_cap = run.max_phonon;
  }
  opts.eps_peak = run.eps_peak;
  opts.f_lo = run.f_lo;
  opts.threads = run.threads;
  opts.timing = run.timing;
  opts.checkpoint_path = run.checkpoint;
  return opts;
}

void emit_sweep_result(const Run& run, const bb::SweepResult& result) {
  Output out(run.out);
  out.stream() << bb::csv_header() << '\n';
  for (const auto& row : result.rows) out.stream() << row << '\n';
  out.finish();
  for (const auto& rec : result.records)
    if (rec.failed)
      std::cerr << "warning: point lambda_a=" << rec.params.lambda_a
                << " omega_a0=" << rec.params.omega_a0
                << " failed: " << rec.error << "\n";
}

int run_sweep(const Run& run) {
  const bb::Window window{run.t_max, run.dt};
  const auto result = bb::phase_diagram(run.lambda_axis, run.omega_axis,
                                        window, sweep_options(run));
  emit_sweep_result(run, result);
  if (!run.heatmap.empty()) write_sweep_heatmaps(run, result.records);
  return 0;
}

std::string asym_plot_script(const std::string& prefix,
                             const std::string& csv_path,
                             bb::AsymmetryAxis axis) {
  const bool om = axis == bb::AsymmetryAxis::delta_omega;
  std::ostringstream s;
  s << "# render with: gnuplot " << prefix << ".gnuplot\n"
    << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set terminal pngcairo size 800,500\n"
    << "set output '" << prefix << ".png'\n"
    << "set xlabel '" << (om ? "delta omega" : "delta lambda") << "'\n"
    << "set ylabel 'max average fidelity'\n"
    << "plot '" << csv_path << "' using (column(" << (om ? "4" : "2")
    << ")-column(" << (om ? "3" : "1")
    << ")):8 with linespoints pt 7 notitle\n";
  return s.str();
}

int run_asym(const Run& run) {
  const bb::Window window{run.t_max, run.dt};
  const auto result = bb::asymmetry_scan(run.params, run.axis, run.deltas,
                                         window, sweep_options(run));
  emit_sweep_result(run, result);
  if (!run.heatmap.empty())
    write_text_file(run.heatmap + ".gnuplot",
                    asym_plot_script(run.heatmap, run.out, run.axis));
  return 0;
}

// ---------------------------------------------------------------------------
// validate: cross-engine and structural checks. CSV schema:
// check,status,observed,expected,tolerance with status pass|fail|info.

struct CheckRow {
  std::string check;
  std::string status;  // pass | fail | info
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
};

class Validator {
 public:
  void check_leq(const std::string& name, double observed, double expected,
                 double tolerance) {
    add({name, std::abs(observed - expected) <= tolerance ? "pass" : "fail",
         observed, expected, tolerance});
  }
  void check_greater(const std::string& name, double observed, double floor) {
    add({name, observed > floor ? "pass" : "fail", observed,
         std::nan(""), floor});
  }
  void info(const std::string& name, double observed,
            double expected = std::nan("")) {
    add({name, "info", observed, expected, std::nan("")});
  }
  bool all_passed() const { return fails_ == 0; }
  int fails() const { return fails_; }

  void emit(std::ostream& out) const {
    out << "check,status,observed,expected,tolerance\n";
    for (const auto& r : rows_)
      out << r.check << ',' << r.status << ',' << bb::format_double(r.observed)
          << ',' << bb::format_double(r.expected) << ','
          << bb::format_double(r.tolerance) << '\n';
  }

 private:
  void add(CheckRow row) {
    if (row.status == "fail") ++fails_;
    std::cerr << '[' << row.status << "] " << row.check
              << " observed=" << bb::format_double(row.observed);
    if (std::isfinite(row.expected))
      std::cerr << " expected=" << bb::format_double(row.expected);
    if (std::isfinite(row.tolerance))
      std::cerr << " tolerance=" << bb::format_double(row.tolerance);
    std::cerr << '\n';
    rows_.push_back(std::move(row));
  }

  std::vector<CheckRow> rows_;
  int fails_ = 0;
};

bb::ModelParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  bb::ModelParams p;
  p.omega_a0 = 3.0 * u01(rng);
  p.omega_b0 = 3.0 * u01(rng);
  p.omega = 0.5 + 1.5 * u01(rng);
  p.lambda_a = 3.0 * (u01(rng) - 0.5);
  p.lambda_b = 3.0 * (u01(rng) - 0.5);
  return p;
}

// Worst residual of the sorted Bell rotation against the given blocks; the
// negative control feeds deliberately corrupted ladders through it.
double rotation_residual(const bb::ModelParams& p, const bb::Truncation& tr,
                         const bb::LadderMatrix& lp, const bb::LadderMatrix& lm) {
  const Eigen::MatrixXd h = bb::build_full_hamiltonian(p, tr);
  const Eigen::MatrixXd q = bb::bell_transform(tr);
  const Eigen::MatrixXd rot = q * h * q.transpose();
  const auto perm = bb::parity_permutation(tr);
  const int half = tr.dim_ladder();
  double worst = 0.0;
  for (int i = 0; i < 2 * half; ++i) {
    for (int j = 0; j < 2 * half; ++j) {
      double expected = 0.0;
      if (i < half && j < half) expected = lp.matrix(i, j);
      else if (i >= half && j >= half) expected = lm.matrix(i - half, j - half);
      worst = std::max(worst, std::abs(rot(perm[i], perm[j]) - expected));
    }
  }
  return worst;
}

int run_validate(const Run& run) {
  Validator v;
  std::mt19937_64 rng(run.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> mdist(2, 10);

  // Structure: ladders are exactly the parity blocks of H.
  double worst_block = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto p = random_params(rng);
    const bb::Truncation tr{mdist(rng)};
    worst_block =
        std::max(worst_block, bb::verify_block_equivalence(p, tr).residual);
  }
  v.check_leq("block_equivalence_max_residual", worst_block, 0.0, 1e-12);

  {  // Negative control: a corrupted rung must be detected.
    bb::ModelParams p;
    p.omega_a0 = 1.1;
    p.omega_b0 = 0.6;
    p.omega = 1.0;
    p.lambda_a = 0.8;
    p.lambda_b = 0.5;
    const bb::Truncation tr{6};
    auto [lp, lm] = bb::build_ladders(p, tr);
    lp.matrix(0, 1) = -lp.matrix(0, 1);
    lp.matrix(1, 0) = -lp.matrix(1, 0);
    v.check_greater("block_equivalence_negative_control_residual",
                    rotation_residual(p, tr, lp, lm), 1e-6);
  }

  {  // Parity superselection: opposite labels never mix under H.
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      const auto p = random_params(rng);
      const bb::Truncation tr{5};
      const Eigen::MatrixXd h = bb::build_full_hamiltonian(p, tr);
      for (int a = 0; a < tr.dim_full(); ++a)
        for (int b = 0; b < tr.dim_full(); ++b)
          if (bb::parity_of(bb::unflatten(a)) != bb::parity_of(bb::unflatten(b)))
            worst = std::max(worst, std::abs(h(a, b)));
    }
    v.check_leq("parity_superselection_max_coupling", worst, 0.0, 0.0);
  }

  {  // Bell transform orthogonality.
    const bb::Truncation tr{10};
    const Eigen::MatrixXd q = bb::bell_transform(tr);
    const Eigen::MatrixXd g = q.transpose() * q -
                              Eigen::MatrixXd::Identity(tr.dim_full(), tr.dim_full());
    v.check_leq("bell_transform_orthogonality", g.cwiseAbs().maxCoeff(), 0.0,
                1e-12);
  }

  // Cross-engine: direct transfer tensor vs calibrated slice formula vs
  // Monte Carlo, on random parameter sets and times.
  double worst_ladder = 0.0, worst_sigma = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto p = random_params(rng);
    const bb::Truncation tr{mdist(rng)};
    const double t = 20.0 * u01(rng);
    const bb::TwoLadderEngine engine(p, tr);
    const double direct = engine.average_fidelity(t);
    const auto fp = bb::propagator_at(engine.spectral_plus(), t, +1);
    const auto fm = bb::propagator_at(engine.spectral_minus(), t, -1);
    worst_ladder =
        std::max(worst_ladder,
                 std::abs(direct - bb::average_fidelity_ladder(fp, fm)));
    const auto [mc, se] = engine.montecarlo(t, run.mc_samples, run.seed + i);
    const double diff = std::abs(mc - direct);
    worst_sigma = std::max(worst_sigma, diff == 0.0 ? 0.0 : diff / std::max(se, 1e-300));
  }
  v.check_leq("direct_vs_calibrated_ladder_max_diff", worst_ladder, 0.0, 1e-8);
  v.check_leq("direct_vs_montecarlo_max_zscore", worst_sigma, 0.0, 3.0);

  // Published slice formula, evaluated verbatim: its t = 0 value is 25% low.
  {
    const bb::Truncation tr{20};
    const bb::TwoLadderEngine engine(run.params, tr);
    const auto at = [&](double t, auto eval) {
      const auto fp = bb::propagator_at(engine.spectral_plus(), t, +1);
      const auto fm = bb::propagator_at(engine.spectral_minus(), t, -1);
      return eval(fp, fm);
    };
    v.check_leq("printed_formula_at_t0",
                at(0.0, bb::average_fidelity_ladder_printed), 0.4375, 1e-12);
    v.check_leq("direct_fidelity_at_t0", engine.average_fidelity(0.0), 0.5,
                1e-9);
    for (const double t : {0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0})
      v.info("printed_vs_calibrated_t=" + bb::format_double(t),
             at(t, bb::average_fidelity_ladder_printed),
             at(t, bb::average_fidelity_ladder));
  }

  // Invariants at the resolved parameters.
  {
    const bb::Truncation tr{run.max_phonon};
    const bb::TwoLadderEngine engine(run.params, tr);
    v.check_leq("fidelity_at_t0", engine.average_fidelity(0.0), 0.5, 1e-9);

    const int n = 1000;
    std::vector<double> times(n + 1);
    for (int i = 0; i <= n; ++i) times[i] = run.t_max * i / n;
    const auto values = engine.trace_values(times, run.threads);
    double lo = values[0], hi = values[0];
    for (double f : values) {
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    v.info("fidelity_range_min", lo);
    v.info("fidelity_range_max", hi);
    v.check_leq("fidelity_range_below_zero", std::max(0.0, -lo), 0.0, 1e-12);
    v.check_leq("fidelity_range_above_one", std::max(0.0, hi - 1.0), 0.0, 1e-12);

    Eigen::VectorXcd cp, cm;
    engine.chi_at(run.t_max, cp, cm);
    const double norm_drift =
        std::max(std::abs(cp.norm() - 1.0), std::abs(cm.norm() - 1.0));
    v.check_leq("norm_conservation_at_t_max", norm_drift, 0.0, 1e-10);

    double worst_rev = 0.0;
    for (const double t : {7.3, 1234.5})
      worst_rev = std::max(worst_rev, std::abs(engine.average_fidelity(t) -
                                               engine.average_fidelity(-t)));
    v.check_leq("time_reversal_max_diff", worst_rev, 0.0, 1e-9);

    bb::ModelParams flipped = run.params;
    flipped.lambda_a = -flipped.lambda_a;
    flipped.lambda_b = -flipped.lambda_b;
    const bb::TwoLadderEngine engine_flipped(flipped, tr);
    double worst_gauge = 0.0;
    for (const double t : {0.0, 3.7, 41.0})
      worst_gauge =
          std::max(worst_gauge, std::abs(engine.average_fidelity(t) -
                                         engine_flipped.average_fidelity(t)));
    v.check_leq("coupling_sign_gauge_max_diff", worst_gauge, 0.0, 1e-9);

    const auto once = engine.trace_values({1.0, 2.0, 3.0, 5.0, 8.0}, 1);
    const auto again = engine.trace_values({1.0, 2.0, 3.0, 5.0, 8.0}, 4);
    double worst_thread = 0.0;
    for (std::size_t i = 0; i < once.size(); ++i)
      worst_thread = std::max(worst_thread, std::abs(once[i] - again[i]));
    v.check_leq("determinism_thread_invariance", worst_thread, 0.0, 0.0);

    const auto mc1 = engine.montecarlo(5.0, run.mc_samples, run.seed);
    const auto mc2 = engine.montecarlo(5.0, run.mc_samples, run.seed);
    v.check_leq("determinism_montecarlo_reseed", std::abs(mc1.first - mc2.first),
                0.0, 0.0);
  }

  // omega_a0 = 0: recorded, not asserted. The ladders differ entrywise yet
  // are gauge-equivalent (flip the minus leg on alternate slices), and the
  // average fidelity keeps its 1/2-anchored floor in both engines.
  {
    bb::ModelParams p;
    p.omega_a0 = 0.0;
    p.omega_b0 = 1.0;
    p.omega = 1.0;
    p.lambda_a = 0.8;
    p.lambda_b = 0.5;
    const bb::Truncation tr{30};
    const auto [lp, lm] = bb::build_ladders(p, tr);
    v.info("omega_a0_zero_ladder_entrywise_gap",
           (lp.matrix - lm.matrix).cwiseAbs().maxCoeff());
    Eigen::VectorXd gauge = Eigen::VectorXd::Ones(tr.dim_ladder());
    for (int m = 0; m <= tr.max_phonon; ++m) gauge[2 * m + 1] = -1.0;
    const Eigen::MatrixXd conj =
        gauge.asDiagonal() * lp.matrix * gauge.asDiagonal();
    v.info("omega_a0_zero_gauge_conjugated_gap",
           (conj - lm.matrix).cwiseAbs().maxCoeff());
    const bb::TwoLadderEngine engine(p, tr);
    double floor = 1.0;
    for (int i = 0; i <= 2000; ++i)
      floor = std::min(floor, engine.average_fidelity(0.5 * i));
    v.info("omega_a0_zero_fidelity_floor", floor);
    for (const double t : {5.0, 50.0, 500.0}) {
      const auto fp = bb::propagator_at(engine.spectral_plus(), t, +1);
      const auto fm = bb::propagator_at(engine.spectral_minus(), t, -1);
      v.info("omega_a0_zero_fidelity_t=" + bb::format_double(t),
             engine.average_fidelity(t), bb::average_fidelity_ladder(fp, fm));
    }
  }

  Output out(run.out);
  v.emit(out.stream());
  out.finish();
  std::cerr << (v.all_passed() ? "validate: all checks passed\n"
                               : "validate: checks failed\n");
  return v.all_passed() ? 0 : kExitCompute;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "bosonbus: average transfer fidelity between two qubits coupled to a "
      "single boson mode.\nCSV goes to stdout (or --out); diagnostics to "
      "stderr. Exit codes: 0 ok, 1 compute failure, 2 usage error."};
  app.require_subcommand(1);

  Options o;
  o.threads = int(std::thread::hardware_concurrency());
  if (o.threads < 1) o.threads = 1;
  const int default_threads = o.threads;

  Command trace, peak, converge, sweep, asym, validate;
  trace.app = app.add_subcommand("trace", "Fidelity time series as t,avg_fidelity");
  peak.app = app.add_subcommand(
      "peak", "Window maximum and first peak time, one sweep-schema row");
  converge.app = app.add_subcommand(
      "converge", "Raise the boson truncation until the window maximum settles");
  sweep.app = app.add_subcommand(
      "sweep", "Phase diagram over the symmetric couplings (lambda_s, omega_s)");
  asym.app = app.add_subcommand(
      "asym", "Sensitivity to qubit asymmetry: sweep delta on the B side");
  validate.app = app.add_subcommand(
      "validate", "Cross-engine and structural self-checks; CSV report");

  const auto add_model = [&](Command& c) {
    c.flag["omega_a0"] =
        c.app->add_option("--omega-a0", o.omega_a0, "Qubit A sz coefficient");
    c.flag["omega_b0"] =
        c.app->add_option("--omega-b0", o.omega_b0, "Qubit B sz coefficient");
    c.flag["omega"] = c.app->add_option("--omega", o.omega, "Boson frequency");
    c.flag["lambda_a"] =
        c.app->add_option("--lambda-a", o.lambda_a, "A-boson coupling");
    c.flag["lambda_b"] =
        c.app->add_option("--lambda-b", o.lambda_b, "B-boson coupling");
    c.flag["config"] = c.app->add_option(
        "--config", o.config_path,
        "key = value config file (default: $BOSONBUS_CONFIG if set)");
    c.flag["threads"] =
        c.app->add_option("--threads", o.threads, "Worker threads");
    c.flag["out"] = c.app->add_option("--out", o.out, "Write CSV here instead of stdout");
  };
  const auto add_truncation_choice = [&](Command& c) {
    c.flag["max_phonon"] = c.app->add_option("--max-phonon", o.max_phonon,
                                             "Fixed boson truncation M");
    c.flag["auto_converge"] = c.app->add_flag(
        "--auto-converge", o.auto_converge, "Converge M before computing");
    c.flag["max_phonon"]->excludes(c.flag["auto_converge"]);
    c.flag["auto_converge"]->excludes(c.flag["max_phonon"]);
  };
  const auto add_convergence_knobs = [&](Command& c) {
    c.flag["tol"] = c.app->add_option(
        "--tol", o.tol, "Convergence tolerance on the window maximum");
    c.flag["m_start"] =
        c.app->add_option("--m-start", o.m_start, "First truncation tried");
    c.flag["m_step"] =
        c.app->add_option("--m-step", o.m_step, "Truncation increment");
    c.flag["m_cap"] =
        c.app->add_option("--m-cap", o.m_cap, "Largest truncation tried");
  };
  const auto add_window = [&](Command& c, const char* tmax_help) {
    c.flag["t_max"] = c.app->add_option("--t-max", o.t_max, tmax_help);
    c.flag["dt"] = c.app->add_option("--dt", o.dt, "Time grid step");
  };
  const auto add_engine = [&](Command& c) {
    c.flag["engine"] = c.app->add_option(
        "--engine", o.engine, "direct | ladder | ladder-printed | montecarlo");
  };
  const auto add_sampling = [&](Command& c) {
    c.flag["seed"] = c.app->add_option("--seed", o.seed, "Monte-Carlo seed");
    c.flag["mc_samples"] = c.app->add_option("--mc-samples", o.mc_samples,
                                             "Monte-Carlo samples per time");
  };
  const auto add_peak_knobs = [&](Command& c) {
    c.flag["eps_peak"] = c.app->add_option(
        "--eps-peak", o.eps_peak,
        "Peak qualification margin (trace/peak 1e-3; coarse commands 1e-2)");
    c.flag["f_lo"] = c.app->add_option(
        "--f-lo", o.f_lo, "Region II/III fidelity boundary");
  };
  const auto add_timing = [&](Command& c) {
    c.flag["timing"] = c.app->add_flag(
        "--timing", o.timing, "Record wall_time_s (off keeps CSV byte-stable)");
  };

  add_model(trace);
  add_truncation_choice(trace);
  add_convergence_knobs(trace);
  add_window(trace, "Window end (default 33000)");
  add_engine(trace);
  add_sampling(trace);

  add_model(peak);
  add_truncation_choice(peak);
  add_convergence_knobs(peak);
  add_window(peak, "Window end (default 33000)");
  add_engine(peak);
  add_sampling(peak);
  add_peak_knobs(peak);
  add_timing(peak);

  add_model(converge);
  add_convergence_knobs(converge);
  add_window(converge, "Window end (default 32000)");
  add_engine(converge);
  add_peak_knobs(converge);
  add_timing(converge);
  converge.flag["heatmap"] = converge.app->add_option(
      "--heatmap", o.heatmap, "Write PREFIX.gnuplot (needs --out)");

  add_model(sweep);
  add_truncation_choice(sweep);
  add_convergence_knobs(sweep);
  add_window(sweep, "Window end (default 32000)");
  add_engine(sweep);
  add_peak_knobs(sweep);
  add_timing(sweep);
  sweep.flag["lambda_s"] = sweep.app->add_option(
      "--lambda-s", o.lambda_axis, "Symmetric coupling axis MIN:MAX:STEPS");
  sweep.flag["omega_s"] = sweep.app->add_option(
      "--omega-s", o.omega_axis, "Symmetric splitting axis MIN:MAX:STEPS");
  sweep.flag["checkpoint"] = sweep.app->add_option(
      "--checkpoint", o.checkpoint, "Checkpoint file; resumes when it exists");
  sweep.flag["heatmap"] = sweep.app->add_option(
      "--heatmap", o.heatmap,
      "Write PREFIX_fidelity.pgm, PREFIX_tpeak.pgm, PREFIX.gnuplot");

  add_model(asym);
  add_truncation_choice(asym);
  add_convergence_knobs(asym);
  add_window(asym, "Window end (default 33000)");
  add_engine(asym);
  add_peak_knobs(asym);
  add_timing(asym);
  asym.flag["axis"] = asym.app->add_option(
      "--axis", o.axis, "delta-omega | delta-lambda (applied to the B side)");
  asym.flag["deltas"] = asym.app->add_option(
      "--deltas", o.deltas, "Comma-separated delta values");
  asym.flag["checkpoint"] = asym.app->add_option(
      "--checkpoint", o.checkpoint, "Checkpoint file; resumes when it exists");
  asym.flag["heatmap"] = asym.app->add_option(
      "--heatmap", o.heatmap, "Write PREFIX.gnuplot (needs --out)");

  add_model(validate);
  validate.flag["max_phonon"] = validate.app->add_option(
      "--max-phonon", o.max_phonon, "Truncation for the invariant checks");
  add_window(validate, "Window end for the invariant checks (default 33000)");
  add_sampling(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  Command* active = nullptr;
  Run run;
  for (Command* c : {&trace, &peak, &converge, &sweep, &asym, &validate})
    if (c->app->parsed()) {
      active = c;
      run.command = c->app->get_name();
    }

  // Resolve every knob as flag > config file > per-command default, then
  // validate; anything wrong here is a usage error.
  try {
    std::map<std::string, std::string> file_values;
    std::string config_path = o.config_path;
    if (!active->given("config")) {
      if (const char* env = std::getenv("BOSONBUS_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) file_values = bb::load_config_file(config_path);
    bb::ConfigLayers cfg(std::move(file_values));

    const bool coarse = run.command == "converge" || run.command == "sweep" ||
                        run.command == "asym";
    const double def_t_max = run.command == "converge" || run.command == "sweep"
                                 ? 32000.0
                                 : 33000.0;
    const double def_dt = coarse ? 4.0 : 1.0;
    const double def_eps = coarse ? 1e-2 : 1e-3;

    // Each resolver consumes its config key even when a flag overrides it,
    // so stray-key detection sees only genuinely unknown keys, and malformed
    // file values are rejected regardless of the override.
    const auto rd = [&](const char* key, double def, double& slot) {
      const auto v = cfg.file_value(key);
      const double file = v ? bb::parse_double(*v, key) : def;
      if (!active->given(key)) slot = file;
    };
    const auto ri = [&](const char* key, int def, int& slot) {
      const auto v = cfg.file_value(key);
      const int file = v ? bb::parse_int(*v, key) : def;
      if (!active->given(key)) slot = file;
    };
    const auto rb = [&](const char* key, bool def, bool& slot) {
      const auto v = cfg.file_value(key);
      const bool file = v ? bb::parse_bool(*v, key) : def;
      if (!active->given(key)) slot = file;
    };
    const auto rs = [&](const char* key, const std::string& def,
                        std::string& slot) {
      const auto v = cfg.file_value(key);
      if (!active->given(key)) slot = v ? *v : def;
    };

    rd("omega_a0", 20.0, o.omega_a0);
    rd("omega_b0", 20.0, o.omega_b0);
    rd("omega", 1.0, o.omega);
    rd("lambda_a", 0.8, o.lambda_a);
    rd("lambda_b", 0.8, o.lambda_b);
    ri("max_phonon", 50, o.max_phonon);
    rb("auto_converge", false, o.auto_converge);
    rd("tol", 1e-3, o.tol);
    ri("m_start", 10, o.m_start);
    ri("m_step", 10, o.m_step);
    ri("m_cap", 200, o.m_cap);
    rd("t_max", def_t_max, o.t_max);
    rd("dt", def_dt, o.dt);
    rs("engine", "direct", o.engine);
    if (const auto v = cfg.file_value("seed")) {
      const std::uint64_t file = parse_u64(*v, "seed");
      if (!active->given("seed")) o.seed = file;
    }
    ri("mc_samples", 10000, o.mc_samples);
    rd("eps_peak", def_eps, o.eps_peak);
    rd("f_lo", 0.9, o.f_lo);
    ri("threads", default_threads, o.threads);
    rb("timing", false, o.timing);

    const std::string unused = cfg.first_unused_key();
    if (!unused.empty())
      throw std::invalid_argument("config key '" + unused +
                                  "' is not recognized");

    run.params.omega_a0 = o.omega_a0;
    run.params.omega_b0 = o.omega_b0;
    run.params.omega = o.omega;
    run.params.lambda_a = o.lambda_a;
    run.params.lambda_b = o.lambda_b;
    run.params.validate();

    run.max_phonon = o.max_phonon;
    run.auto_converge = o.auto_converge;
    run.pin_truncation = active->given("max_phonon") &&
                         (run.command == "sweep" || run.command == "asym");
    run.tol = o.tol;
    run.m_start = o.m_start;
    run.m_step = o.m_step;
    run.m_cap = o.m_cap;
    run.t_max = o.t_max;
    run.dt = o.dt;
    run.seed = o.seed;
    run.mc_samples = o.mc_samples;
    run.eps_peak = o.eps_peak;
    run.f_lo = o.f_lo;
    run.threads = o.threads;
    run.timing = o.timing;
    run.out = o.out;
    run.heatmap = o.heatmap;
    run.checkpoint = o.checkpoint;

    if (run.max_phonon < 1)
      throw std::invalid_argument("max_phonon must be >= 1");
    if (!(run.tol > 0)) throw std::invalid_argument("tol must be > 0");
    if (run.m_start < 1 || run.m_step < 1 || run.m_cap < run.m_start)
      throw std::invalid_argument(
          "need m_start >= 1, m_step >= 1, m_cap >= m_start");
    if (!(run.t_max >= 0)) throw std::invalid_argument("t_max must be >= 0");
    if (!(run.dt > 0)) throw std::invalid_argument("dt must be > 0");
    if (run.mc_samples < 100)
      throw std::invalid_argument("mc_samples must be >= 100");
    if (!(run.eps_peak > 0)) throw std::invalid_argument("eps_peak must be > 0");
    if (!(run.f_lo > 0 && run.f_lo <= 1))
      throw std::invalid_argument("f_lo must be in (0, 1]");
    if (run.threads < 1) throw std::invalid_argument("threads must be >= 1");

    const auto parsed_engine = bb::engine_from_string(o.engine);
    if (!parsed_engine)
      throw std::invalid_argument("unknown engine '" + o.engine + "'");
    run.engine = *parsed_engine;
    if (coarse && run.engine != bb::FidelityEngine::direct)
      throw std::invalid_argument("the " + run.command +
                                  " command computes with the direct engine only");

    if (run.command == "sweep") {
      run.lambda_axis = parse_axis_spec(o.lambda_axis, "lambda-s");
      run.omega_axis = parse_axis_spec(o.omega_axis, "omega-s");
    }
    if (run.command == "asym") {
      if (o.axis == "delta-omega") run.axis = bb::AsymmetryAxis::delta_omega;
      else if (o.axis == "delta-lambda") run.axis = bb::AsymmetryAxis::delta_lambda;
      else throw std::invalid_argument("axis must be delta-omega or delta-lambda");
      run.deltas = parse_delta_list(o.deltas);
    }
    if ((run.command == "converge" || run.command == "asym") &&
        !run.heatmap.empty() && run.out.empty())
      throw std::invalid_argument(
          "--heatmap needs --out so the plot script can reference the CSV");
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  }

  try {
    if (run.command == "trace") return run_trace(run);
    if (run.command == "peak") return run_peak(run);
    if (run.command == "converge") return run_converge(run);
    if (run.command == "sweep") return run_sweep(run);
    if (run.command == "asym") return run_asym(run);
    return run_validate(run);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitCompute;
  }
}
