#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bosonbus/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace bosonbus;

namespace {

ModelParams symmetric_params(double lambda_s, double omega_s) {
  ModelParams p;
  p.omega_a0 = omega_s;
  p.omega_b0 = omega_s;
  p.omega = 1.0;
  p.lambda_a = lambda_s;
  p.lambda_b = lambda_s;
  return p;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/bosonbus_test_" + name) {
    std::remove(path.c_str());
  }
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("converge_truncation on a decoupled mode stops immediately") {
  const ModelParams p = symmetric_params(0.0, 2.0);
  const Window window{100.0, 4.0};
  const auto res = converge_truncation(p, window, 1e-3, 1, 1, 20);
  CHECK(res.converged);
  CHECK(res.m_used == 1);
  // With lambda = 0 the trace is constant 1/2, so every window max matches.
  for (const auto& [m, f] : res.history) CHECK(f == doctest::Approx(0.5));
}

TEST_CASE("converge_truncation history obeys the streak rule") {
  const ModelParams p = symmetric_params(0.8, 3.0);
  const Window window{400.0, 4.0};
  const double tol = 1e-3;
  const auto res = converge_truncation(p, window, tol, 2, 2, 60);
  REQUIRE(res.converged);
  REQUIRE(res.history.size() >= 3);

  // m_used opens the first run of two consecutive sub-tol deltas.
  int first_streak = -1;
  for (std::size_t i = 0; i + 2 < res.history.size() && first_streak < 0; ++i) {
    const double d1 = std::abs(res.history[i + 1].second - res.history[i].second);
    const double d2 =
        std::abs(res.history[i + 2].second - res.history[i + 1].second);
    if (d1 < tol && d2 < tol) first_streak = res.history[i].first;
  }
  CHECK(first_streak == res.m_used);
  // The scan stops right after certifying the streak.
  CHECK(res.history.back().first == res.m_used + 2 * 2);
}

TEST_CASE("converge_truncation reports cap exhaustion") {
  const ModelParams p = symmetric_params(1.5, 2.0);
  const Window window{400.0, 4.0};
  const auto res = converge_truncation(p, window, 1e-9, 1, 1, 3);
  CHECK_FALSE(res.converged);
  CHECK(res.m_used == 3);
  CHECK(res.history.size() == 3);
}

TEST_CASE("region classification") {
  CHECK(classify_region(true, 0.99) == Region::I);
  CHECK(classify_region(true, 0.1) == Region::I);   // window-bound wins
  CHECK(classify_region(false, 0.5) == Region::II);
  CHECK(classify_region(false, 0.95) == Region::III);
  CHECK(classify_region(false, 0.95, 0.97) == Region::II);
  CHECK(std::string(to_string(Region::I)) == "I");
  CHECK(std::string(to_string(Region::na)) == "n/a");
}

TEST_CASE("axis_values") {
  const auto single = axis_values(AxisSpec{0.25, 2.0, 1});
  CHECK(single == std::vector<double>{0.25});
  const auto three = axis_values(AxisSpec{0.0, 1.0, 3});
  REQUIRE(three.size() == 3);
  CHECK(three[0] == 0.0);
  CHECK(three[1] == doctest::Approx(0.5));
  CHECK(three[2] == 1.0);
}

TEST_CASE("csv round trip") {
  CHECK(csv_header() ==
        "lambda_a,lambda_b,omega_a0,omega_b0,omega,m_used,converged,f_max,"
        "t_peak,window_bound,region,wall_time_s");

  SweepRecord rec;
  rec.params = symmetric_params(0.1, 2.0);
  rec.m_used = 30;
  rec.converged = true;
  rec.f_max = 0.123456789012345678;
  rec.t_peak = 1973.0;
  rec.window_bound = false;
  rec.region = Region::III;
  rec.wall_time_s = 0.0;
  const std::string row = csv_row(rec);
  CHECK(row.find('\n') == std::string::npos);
  const SweepRecord back = csv_parse_row(row);
  CHECK(back.params.lambda_a == rec.params.lambda_a);
  CHECK(back.params.omega_b0 == rec.params.omega_b0);
  CHECK(back.m_used == rec.m_used);
  CHECK(back.converged == rec.converged);
  CHECK(back.f_max == rec.f_max);  // 17 digits reproduce the double exactly
  CHECK(back.t_peak == rec.t_peak);
  CHECK(back.region == Region::III);
  CHECK_FALSE(back.failed);
  CHECK(csv_row(back) == row);
}

TEST_CASE("csv nan encodes a failed point") {
  SweepRecord rec;
  rec.params = symmetric_params(0.1, 2.0);
  rec.f_max = std::nan("");
  rec.t_peak = std::nan("");
  rec.region = Region::na;
  rec.failed = true;
  const std::string row = csv_row(rec);
  const SweepRecord back = csv_parse_row(row);
  CHECK(back.failed);
  CHECK(std::isnan(back.f_max));
  CHECK(back.region == Region::na);
  CHECK(csv_row(back) == row);
}

TEST_CASE("csv_parse_row rejects malformed rows") {
  CHECK_THROWS_AS(csv_parse_row("1,2,3"), std::runtime_error);
  SweepRecord rec;
  rec.params = symmetric_params(0.1, 2.0);
  std::string row = csv_row(rec);
  const auto flip = [&](const std::string& from, const std::string& to) {
    std::string s = row;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(csv_parse_row(flip("false,n/a", "maybe,n/a")),
                  std::runtime_error);
  CHECK_THROWS_AS(csv_parse_row(flip(",n/a,", ",IV,")), std::runtime_error);
  CHECK_THROWS_AS(csv_parse_row(row + ",extra"), std::runtime_error);
}

TEST_CASE("format_double prints round-trippable values") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(4.0) == "4");
  CHECK(std::strtod(format_double(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
}

TEST_CASE("fnv1a64 reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("checkpoint write and load round trip") {
  TempFile tmp("ckpt_roundtrip");
  CHECK_FALSE(checkpoint_exists(tmp.path));
  CheckpointState state;
  state.fingerprint = 0x0123456789abcdefULL;
  state.rows = {"row one", "row,two,0.5"};
  checkpoint_write(tmp.path, state);
  CHECK(checkpoint_exists(tmp.path));
  const CheckpointState back = checkpoint_load(tmp.path);
  CHECK(back.fingerprint == state.fingerprint);
  CHECK(back.rows == state.rows);

  const std::string text = slurp(tmp.path);
  CHECK(text.rfind("bosonbus-checkpoint 1\n", 0) == 0);
  CHECK(text.find("fingerprint 0123456789abcdef\n") != std::string::npos);
  CHECK(text.find("rows 2\n") != std::string::npos);
}

TEST_CASE("checkpoint_load refuses damaged files") {
  TempFile tmp("ckpt_damaged");
  {
    std::ofstream out(tmp.path, std::ios::binary);
    out << "bosonbus-checkpoint 1\nfingerprint 00000000000000aa\nrows 3\nonly\n";
  }
  CHECK_THROWS_AS(checkpoint_load(tmp.path), std::runtime_error);
  {
    std::ofstream out(tmp.path, std::ios::binary);
    out << "not-a-checkpoint\n";
  }
  CHECK_THROWS_AS(checkpoint_load(tmp.path), std::runtime_error);
  CHECK_THROWS_AS(checkpoint_load("/tmp/bosonbus_test_missing_ckpt"),
                  std::runtime_error);
}

TEST_CASE("phase_diagram is deterministic and thread-invariant") {
  const AxisSpec lambdas{0.5, 1.0, 2};
  const AxisSpec omegas{2.0, 3.0, 2};
  const Window window{200.0, 4.0};
  SweepOptions opts;
  opts.m_start = 4;
  opts.m_step = 4;
  opts.m_cap = 40;

  const auto a = phase_diagram(lambdas, omegas, window, opts);
  REQUIRE(a.rows.size() == 4);
  REQUIRE(a.records.size() == 4);

  // omega-major order, lambda fastest.
  CHECK(a.records[0].params.omega_a0 == 2.0);
  CHECK(a.records[0].params.lambda_a == 0.5);
  CHECK(a.records[1].params.omega_a0 == 2.0);
  CHECK(a.records[1].params.lambda_a == 1.0);
  CHECK(a.records[2].params.omega_a0 == 3.0);
  CHECK(a.records[2].params.lambda_a == 0.5);
  for (const auto& rec : a.records) {
    CHECK(rec.params.omega_a0 == rec.params.omega_b0);
    CHECK(rec.params.lambda_a == rec.params.lambda_b);
    CHECK(rec.params.omega == 1.0);
    CHECK_FALSE(rec.failed);
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    CHECK(a.rows[i] == csv_row(a.records[i]));

  const auto b = phase_diagram(lambdas, omegas, window, opts);
  CHECK(a.rows == b.rows);
  SweepOptions threaded = opts;
  threaded.threads = 3;
  const auto c = phase_diagram(lambdas, omegas, window, threaded);
  CHECK(a.rows == c.rows);
}

TEST_CASE("sweep resume replays completed rows byte for byte") {
  const AxisSpec lambdas{0.5, 1.0, 2};
  const AxisSpec omegas{2.0, 3.0, 2};
  const Window window{200.0, 4.0};
  TempFile tmp("ckpt_resume");
  SweepOptions opts;
  opts.m_start = 4;
  opts.m_step = 4;
  opts.m_cap = 40;

  SweepOptions with_ckpt = opts;
  with_ckpt.checkpoint_path = tmp.path;
  const auto full = phase_diagram(lambdas, omegas, window, with_ckpt);
  const CheckpointState finished = checkpoint_load(tmp.path);
  CHECK(finished.rows == full.rows);

  // Truncate to two finished rows and resume; the rest is recomputed and the
  // output matches the uninterrupted run byte for byte.
  CheckpointState partial;
  partial.fingerprint = finished.fingerprint;
  partial.rows = {full.rows[0], full.rows[1]};
  checkpoint_write(tmp.path, partial);
  const auto resumed = phase_diagram(lambdas, omegas, window, with_ckpt);
  CHECK(resumed.rows == full.rows);
  CHECK(checkpoint_load(tmp.path).rows == full.rows);

  // A checkpoint for a different grid is refused.
  CheckpointState wrong = partial;
  wrong.fingerprint ^= 1;
  checkpoint_write(tmp.path, wrong);
  CHECK_THROWS_AS(phase_diagram(lambdas, omegas, window, with_ckpt),
                  std::runtime_error);
}

TEST_CASE("asymmetry_scan perturbs only the B side") {
  ModelParams base = symmetric_params(0.8, 3.0);
  const std::vector<double> deltas{-0.01, 0.0, 0.01};
  const Window window{200.0, 4.0};
  SweepOptions opts;
  opts.m_start = 4;
  opts.m_step = 4;
  opts.m_cap = 40;

  const auto domega = asymmetry_scan(base, AsymmetryAxis::delta_omega, deltas,
                                     window, opts);
  REQUIRE(domega.records.size() == 3);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const auto& p = domega.records[i].params;
    CHECK(p.omega_a0 == base.omega_a0);
    CHECK(p.omega_b0 == doctest::Approx(base.omega_b0 + deltas[i]));
    CHECK(p.lambda_b == base.lambda_b);
  }

  const auto dlambda = asymmetry_scan(base, AsymmetryAxis::delta_lambda, deltas,
                                      window, opts);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const auto& p = dlambda.records[i].params;
    CHECK(p.lambda_a == base.lambda_a);
    CHECK(p.lambda_b == doctest::Approx(base.lambda_b + deltas[i]));
    CHECK(p.omega_b0 == base.omega_b0);
  }

  // delta = 0 reproduces the symmetric point in both scans.
  CHECK(domega.records[1].f_max == dlambda.records[1].f_max);
}
