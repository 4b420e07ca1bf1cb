#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bosonbus/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

using namespace bosonbus;

TEST_CASE("parse_config_text basics") {
  const auto kv = parse_config_text(
      "# comment line\n"
      "omega_a0 = 20\n"
      "  lambda_a=0.8   # trailing comment\n"
      "\n"
      "tol = 1e-3\n");
  CHECK(kv.size() == 3);
  CHECK(kv.at("omega_a0") == "20");
  CHECK(kv.at("lambda_a") == "0.8");
  CHECK(kv.at("tol") == "1e-3");
}

TEST_CASE("parse_config_text reports line numbers on errors") {
  try {
    parse_config_text("omega = 1\nno equals sign here\n");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_config_text("a = 1\n\n = 2\n");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_config_text("dt = 1\ndt = 2\n");
    FAIL("expected a duplicate-key error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dt") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
}

TEST_CASE("empty value is an error, empty text is fine") {
  CHECK(parse_config_text("").empty());
  CHECK(parse_config_text("# only comments\n\n").empty());
  CHECK_THROWS_AS(parse_config_text("dt =\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("dt = # gone\n"), std::invalid_argument);
}

TEST_CASE("load_config_file") {
  const std::string path = "/tmp/bosonbus_test_config.txt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "omega = 2.5\nthreads = 4\n";
  }
  const auto kv = load_config_file(path);
  CHECK(kv.at("omega") == "2.5");
  CHECK(kv.at("threads") == "4");
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config_file(path), std::runtime_error);
}

TEST_CASE("ConfigLayers tracks consumption") {
  ConfigLayers layers({{"omega", "2"}, {"stray_key", "1"}});
  CHECK(layers.first_unused_key() == "omega");
  const auto v = layers.file_value("omega");
  REQUIRE(v.has_value());
  CHECK(*v == "2");
  CHECK_FALSE(layers.file_value("dt").has_value());
  CHECK(layers.first_unused_key() == "stray_key");
  CHECK(layers.file_value("stray_key").has_value());
  CHECK(layers.first_unused_key().empty());
}

TEST_CASE("scalar parsers") {
  CHECK(parse_double("0.25", "x") == 0.25);
  CHECK(parse_double("-3e2", "x") == -300.0);
  CHECK_THROWS_AS(parse_double("0.25oops", "x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_double("", "x"), std::invalid_argument);

  CHECK(parse_int("42", "n") == 42);
  CHECK(parse_int("-7", "n") == -7);
  CHECK_THROWS_AS(parse_int("4.2", "n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_int("x", "n"), std::invalid_argument);

  CHECK(parse_bool("true", "b"));
  CHECK(parse_bool("1", "b"));
  CHECK(parse_bool("yes", "b"));
  CHECK(parse_bool("on", "b"));
  CHECK_FALSE(parse_bool("false", "b"));
  CHECK_FALSE(parse_bool("0", "b"));
  CHECK_FALSE(parse_bool("no", "b"));
  CHECK_FALSE(parse_bool("off", "b"));
  CHECK_THROWS_AS(parse_bool("maybe", "b"), std::invalid_argument);
}
