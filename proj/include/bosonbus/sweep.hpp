#pragma once

#include "bosonbus/fidelity.hpp"

#include <string>
#include <vector>

namespace bosonbus {

// Evaluation window: trace on 0, dt, ..., t_max.
struct Window {
  double t_max = 32000.0;
  double dt = 4.0;
};

struct ConvergeResult {
  int m_used = 0;                                // first M of the stable streak
  bool converged = false;
  std::vector<std::pair<int, double>> history;   // (M, window max) per step
};

// Raise M from m_start in steps of m_step until the window maximum moves by
// less than tol twice in a row; m_used is the M opening that streak. Hitting
// m_cap first flags converged = false with m_used = last M evaluated.
ConvergeResult converge_truncation(const ModelParams& p, const Window& window,
                                   double tol = 1e-3, int m_start = 10,
                                   int m_step = 10, int m_cap = 200,
                                   int threads = 1);

enum class Region { I, II, III, na };
const char* to_string(Region r);

struct SweepRecord {
  ModelParams params;
  int m_used = 0;
  bool converged = false;
  double f_max = 0.0;
  double t_peak = 0.0;
  bool window_bound = false;
  Region region = Region::na;
  double wall_time_s = 0.0;
  bool failed = false;      // per-point failure; row still emitted
  std::string error;        // diagnostic only, not part of the CSV schema
};

// I: window-bound (the trace is still climbing when the window closes).
// II: finite peak but f_max below f_lo. III: the high-fidelity rest.
Region classify_region(bool window_bound, double f_max, double f_lo = 0.9);

struct SweepOptions {
  double tol = 1e-3;
  int m_start = 10, m_step = 10, m_cap = 200;
  double eps_peak = 1e-2;  // coarse grids alias revival heights; see find_peak
  double f_lo = 0.9;
  int threads = 1;
  bool timing = false;     // wall_time_s stays 0 unless set, keeping CSV byte-stable
  std::string checkpoint_path;  // empty disables checkpointing
};

// Inclusive linear axis; steps is the point count (steps = 1 pins min).
struct AxisSpec {
  double min = 0.0, max = 0.0;
  int steps = 1;
};
std::vector<double> axis_values(const AxisSpec& axis);

// Rows are the emitted CSV lines (no header), records their parsed form;
// the two always agree, whether a row was computed or replayed on resume.
struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<std::string> rows;
};

// Symmetric-point grid: omega_a0 = omega_b0 = omega_s, lambda_a = lambda_b =
// lambda_s, omega = 1. Records run omega_s-major (lambda fastest), and the
// order never depends on thread count.
SweepResult phase_diagram(const AxisSpec& lambda_axis,
                          const AxisSpec& omega_axis, const Window& window,
                          const SweepOptions& opts = {});

enum class AsymmetryAxis { delta_omega, delta_lambda };

// Adds each delta to the B-side parameter of base, one record per delta in
// the given order.
SweepResult asymmetry_scan(const ModelParams& base, AsymmetryAxis axis,
                           const std::vector<double>& deltas,
                           const Window& window,
                           const SweepOptions& opts = {});

// CSV serialization (17 significant digits, booleans true|false).
std::string csv_header();
std::string csv_row(const SweepRecord& rec);
SweepRecord csv_parse_row(const std::string& row);
std::string format_double(double v);

// Crash-safe sweep persistence: a text file with the grid fingerprint and the
// CSV rows completed so far, rewritten atomically (temp file + rename) after
// every point. Resuming replays the stored rows byte-for-byte; a fingerprint
// mismatch or damaged file is refused with the offending position.
struct CheckpointState {
  std::uint64_t fingerprint = 0;
  std::vector<std::string> rows;  // completed CSV rows, grid order, no newline
};

std::uint64_t fnv1a64(const std::string& text);
bool checkpoint_exists(const std::string& path);
void checkpoint_write(const std::string& path, const CheckpointState& state);
CheckpointState checkpoint_load(const std::string& path);

}  // namespace bosonbus
