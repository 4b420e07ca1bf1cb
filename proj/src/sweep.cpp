#include "bosonbus/sweep.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace bosonbus {

ConvergeResult converge_truncation(const ModelParams& p, const Window& window,
                                   double tol, int m_start, int m_step,
                                   int m_cap, int threads) {
  p.validate();
  if (tol <= 0.0) throw std::invalid_argument("converge: tol must be > 0");
  if (m_start < 1 || m_step < 1 || m_cap < m_start)
    throw std::invalid_argument("converge: need m_start >= 1, m_step >= 1, m_cap >= m_start");
  const std::vector<double> ts = time_grid(window.t_max, window.dt);
  ConvergeResult res;
  for (int m = m_start; m <= m_cap; m += m_step) {
    const TwoLadderEngine eng(p, Truncation{m});
    const std::vector<double> vals = eng.trace_values(ts, threads);
    double f_max = vals[0];
    for (double v : vals) f_max = std::max(f_max, v);
    res.history.emplace_back(m, f_max);
    const size_t k = res.history.size();
    if (k >= 3 &&
        std::abs(res.history[k - 1].second - res.history[k - 2].second) < tol &&
        std::abs(res.history[k - 2].second - res.history[k - 3].second) < tol) {
      res.m_used = res.history[k - 3].first;
      res.converged = true;
      return res;
    }
  }
  res.m_used = res.history.back().first;
  res.converged = false;
  return res;
}

const char* to_string(Region r) {
  switch (r) {
    case Region::I: return "I";
    case Region::II: return "II";
    case Region::III: return "III";
    case Region::na: return "n/a";
  }
  return "?";
}

Region classify_region(bool window_bound, double f_max, double f_lo) {
  if (!std::isfinite(f_max)) return Region::na;
  if (window_bound) return Region::I;
  if (f_max < f_lo) return Region::II;
  return Region::III;
}

std::vector<double> axis_values(const AxisSpec& axis) {
  if (axis.steps < 1) throw std::invalid_argument("axis: steps must be >= 1");
  if (axis.min > axis.max) throw std::invalid_argument("axis: min must be <= max");
  std::vector<double> vals;
  vals.reserve(size_t(axis.steps));
  if (axis.steps == 1) {
    vals.push_back(axis.min);
    return vals;
  }
  const double stride = (axis.max - axis.min) / double(axis.steps - 1);
  for (int i = 0; i < axis.steps; ++i) vals.push_back(axis.min + stride * i);
  return vals;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_header() {
  return "lambda_a,lambda_b,omega_a0,omega_b0,omega,m_used,converged,f_max,"
         "t_peak,window_bound,region,wall_time_s";
}

std::string csv_row(const SweepRecord& rec) {
  std::ostringstream row;
  row << format_double(rec.params.lambda_a) << ','
      << format_double(rec.params.lambda_b) << ','
      << format_double(rec.params.omega_a0) << ','
      << format_double(rec.params.omega_b0) << ','
      << format_double(rec.params.omega) << ',' << rec.m_used << ','
      << (rec.converged ? "true" : "false") << ',' << format_double(rec.f_max)
      << ',' << format_double(rec.t_peak) << ','
      << (rec.window_bound ? "true" : "false") << ',' << to_string(rec.region)
      << ',' << format_double(rec.wall_time_s);
  return row.str();
}

SweepRecord csv_parse_row(const std::string& row) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : row) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  if (fields.size() != 12)
    throw std::runtime_error("sweep row has " + std::to_string(fields.size()) +
                             " fields, expected 12: " + row);
  auto as_double = [&](int i) { return std::strtod(fields[i].c_str(), nullptr); };
  auto as_bool = [&](int i) {
    if (fields[i] == "true") return true;
    if (fields[i] == "false") return false;
    throw std::runtime_error("bad boolean '" + fields[i] + "' in row: " + row);
  };
  SweepRecord rec;
  rec.params.lambda_a = as_double(0);
  rec.params.lambda_b = as_double(1);
  rec.params.omega_a0 = as_double(2);
  rec.params.omega_b0 = as_double(3);
  rec.params.omega = as_double(4);
  rec.m_used = int(std::strtol(fields[5].c_str(), nullptr, 10));
  rec.converged = as_bool(6);
  rec.f_max = as_double(7);
  rec.t_peak = as_double(8);
  rec.window_bound = as_bool(9);
  if (fields[10] == "I") rec.region = Region::I;
  else if (fields[10] == "II") rec.region = Region::II;
  else if (fields[10] == "III") rec.region = Region::III;
  else if (fields[10] == "n/a") rec.region = Region::na;
  else throw std::runtime_error("bad region '" + fields[10] + "' in row: " + row);
  rec.wall_time_s = as_double(11);
  rec.failed = !std::isfinite(rec.f_max);
  return rec;
}

namespace {

// One grid point: converge the truncation, trace, find the peak, classify.
SweepRecord evaluate_point(const ModelParams& p, const Window& window,
                           const SweepOptions& opts) {
  SweepRecord rec;
  rec.params = p;
  const auto start = std::chrono::steady_clock::now();
  try {
    const ConvergeResult conv = converge_truncation(
        p, window, opts.tol, opts.m_start, opts.m_step, opts.m_cap, 1);
    rec.m_used = conv.m_used;
    rec.converged = conv.converged;
    const Truncation tr{conv.m_used};
    const TwoLadderEngine eng(p, tr);
    FidelityTrace trace;
    trace.times = time_grid(window.t_max, window.dt);
    trace.params = p;
    trace.trunc = tr;
    trace.values = eng.trace_values(trace.times, 1);
    PeakOptions popt;
    popt.eps_peak = opts.eps_peak;
    popt.refine_engine = &eng;
    const FidelityPeak peak = find_peak(trace, popt);
    rec.f_max = peak.f_max;
    rec.t_peak = peak.t_peak;
    rec.window_bound = peak.window_bound;
    rec.region = classify_region(peak.window_bound, peak.f_max, opts.f_lo);
  } catch (const std::exception& ex) {
    rec.failed = true;
    rec.error = ex.what();
    rec.f_max = rec.t_peak = std::nan("");
    rec.region = Region::na;
  }
  if (opts.timing)
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  return rec;
}

std::string window_text(const Window& w) {
  return format_double(w.t_max) + ":" + format_double(w.dt);
}

std::string options_text(const SweepOptions& o) {
  std::ostringstream out;
  out << format_double(o.tol) << ":" << o.m_start << ":" << o.m_step << ":"
      << o.m_cap << ":" << format_double(o.eps_peak) << ":"
      << format_double(o.f_lo) << ":" << (o.timing ? "t" : "f");
  return out.str();
}

// Runs the per-point tasks on a worker pool, persisting completed prefixes to
// the checkpoint (if any) and returning rows and records in task order.
SweepResult run_tasks(const std::vector<ModelParams>& points,
                      const Window& window, const SweepOptions& opts,
                      const std::string& fingerprint_text) {
  const std::uint64_t fp = fnv1a64(fingerprint_text);
  size_t done = 0;
  CheckpointState state;
  state.fingerprint = fp;
  const bool use_ckpt = !opts.checkpoint_path.empty();
  if (use_ckpt && checkpoint_exists(opts.checkpoint_path)) {
    const CheckpointState loaded = checkpoint_load(opts.checkpoint_path);
    if (loaded.fingerprint != fp)
      throw std::runtime_error("checkpoint " + opts.checkpoint_path +
                               " belongs to a different sweep (fingerprint mismatch)");
    if (loaded.rows.size() > points.size())
      throw std::runtime_error("checkpoint " + opts.checkpoint_path + " has " +
                               std::to_string(loaded.rows.size()) +
                               " rows but the sweep has only " +
                               std::to_string(points.size()) + " points");
    state.rows = loaded.rows;
    done = state.rows.size();
  }

  const size_t total = points.size();
  std::vector<SweepRecord> records(total);
  std::vector<char> ready(total, 0);
  // Replayed rows are authoritative; parse them back so records agree.
  for (size_t i = 0; i < done; ++i) {
    records[i] = csv_parse_row(state.rows[i]);
    ready[i] = 1;
  }

  std::atomic<size_t> next{done};
  std::mutex flush_mutex;
  size_t flushed = done;
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
      SweepRecord rec = evaluate_point(points[i], window, opts);
      std::lock_guard<std::mutex> lock(flush_mutex);
      records[i] = std::move(rec);
      ready[i] = 1;
      while (flushed < total && ready[flushed]) {
        state.rows.push_back(csv_row(records[flushed]));
        ++flushed;
        if (use_ckpt) checkpoint_write(opts.checkpoint_path, state);
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(opts.threads, int(total - done)));
  if (total > done) {
    if (n_workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
  }
  return {std::move(records), std::move(state.rows)};
}

}  // namespace

SweepResult phase_diagram(const AxisSpec& lambda_axis,
                          const AxisSpec& omega_axis, const Window& window,
                          const SweepOptions& opts) {
  const std::vector<double> lams = axis_values(lambda_axis);
  const std::vector<double> omss = axis_values(omega_axis);
  std::vector<ModelParams> points;
  points.reserve(lams.size() * omss.size());
  for (double oms : omss)
    for (double lam : lams) {
      ModelParams p;
      p.omega_a0 = p.omega_b0 = oms;
      p.lambda_a = p.lambda_b = lam;
      p.omega = 1.0;
      points.push_back(p);
    }
  std::ostringstream fp;
  fp << "phase-diagram v1|lambda " << format_double(lambda_axis.min) << ":"
     << format_double(lambda_axis.max) << ":" << lambda_axis.steps << "|omega "
     << format_double(omega_axis.min) << ":" << format_double(omega_axis.max)
     << ":" << omega_axis.steps << "|window " << window_text(window) << "|opts "
     << options_text(opts);
  return run_tasks(points, window, opts, fp.str());
}

SweepResult asymmetry_scan(const ModelParams& base, AsymmetryAxis axis,
                           const std::vector<double>& deltas,
                           const Window& window, const SweepOptions& opts) {
  base.validate();
  std::vector<ModelParams> points;
  points.reserve(deltas.size());
  for (double d : deltas) {
    ModelParams p = base;
    if (axis == AsymmetryAxis::delta_omega)
      p.omega_b0 = base.omega_b0 + d;
    else
      p.lambda_b = base.lambda_b + d;
    points.push_back(p);
  }
  std::ostringstream fp;
  fp << "asymmetry v1|axis "
     << (axis == AsymmetryAxis::delta_omega ? "delta_omega" : "delta_lambda")
     << "|base " << format_double(base.lambda_a) << ","
     << format_double(base.lambda_b) << "," << format_double(base.omega_a0)
     << "," << format_double(base.omega_b0) << "," << format_double(base.omega)
     << "|deltas";
  for (double d : deltas) fp << " " << format_double(d);
  fp << "|window " << window_text(window) << "|opts " << options_text(opts);
  return run_tasks(points, window, opts, fp.str());
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

bool checkpoint_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

void checkpoint_write(const std::string& path, const CheckpointState& state) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint temp file " + tmp);
    char fp[32];
    std::snprintf(fp, sizeof fp, "%016llx",
                  (unsigned long long)state.fingerprint);
    out << "bosonbus-checkpoint 1\n" << "fingerprint " << fp << "\n"
        << "rows " << state.rows.size() << "\n";
    for (const auto& row : state.rows) out << row << "\n";
    if (!out) throw std::runtime_error("checkpoint write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointState checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  auto fail = [&](const std::string& what) {
    const auto pos = in.tellg();
    throw std::runtime_error("corrupted checkpoint " + path + ": " + what +
                             " at byte offset " +
                             std::to_string(pos < 0 ? -1 : (long long)pos) +
                             "; refusing to resume");
  };
  std::string line;
  if (!std::getline(in, line) || line != "bosonbus-checkpoint 1")
    fail("bad header");
  CheckpointState state;
  if (!std::getline(in, line) || line.rfind("fingerprint ", 0) != 0)
    fail("missing fingerprint");
  {
    const std::string hex = line.substr(12);
    if (hex.size() != 16 || hex.find_first_not_of("0123456789abcdef") != std::string::npos)
      fail("bad fingerprint");
    state.fingerprint = std::stoull(hex, nullptr, 16);
  }
  if (!std::getline(in, line) || line.rfind("rows ", 0) != 0) fail("missing row count");
  size_t count = 0;
  try {
    count = std::stoull(line.substr(5));
  } catch (...) {
    fail("bad row count");
  }
  state.rows.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      fail("row " + std::to_string(i) + " missing (expected " +
           std::to_string(count) + " rows)");
    state.rows.push_back(line);
  }
  if (std::getline(in, line) && !line.empty()) fail("trailing data");
  return state;
}

}  // namespace bosonbus
