#include <doctest.h>

#include <cmath>
#include <set>

#include "twinopt/search_space.hpp"

using namespace twinopt;

namespace {

SearchSpace mixed_space() {
  SearchSpace s;
  s.params.push_back({"rate", ParamDomain::log_uniform(0.01, 1.0)});
  s.params.push_back({"width", ParamDomain::uniform(-2.0, 2.0)});
  s.params.push_back({"leaves", ParamDomain::integer(8, 64)});
  s.params.push_back({"mode", ParamDomain::categorical({"a", "b", "c"})});
  return s;
}

}  // namespace

TEST_CASE("encoding widths follow the domain kinds") {
  const SearchSpace s = mixed_space();
  s.validate();
  CHECK(s.at("rate").domain.encoded_width() == 1);
  CHECK(s.at("leaves").domain.encoded_width() == 1);
  CHECK(s.at("mode").domain.encoded_width() == 3);
  CHECK(s.encoded_dim() == 6);
  CHECK_THROWS_AS(s.at("absent"), Error);
}

TEST_CASE("encode and decode invert each other across all domain kinds") {
  const SearchSpace s = mixed_space();
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const TrialParams p = sample_params(s, rng);
    const auto point = encode(p, s);
    REQUIRE(point.size() == s.encoded_dim());
    for (double v : point) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const TrialParams back = decode(point, s);
    // integers and categoricals are exact; continuous round-trips
    // are exact up to floating transforms
    CHECK(back.get_int("leaves") == p.get_int("leaves"));
    CHECK(back.get_string("mode") == p.get_string("mode"));
    CHECK(back.get_double("width") == doctest::Approx(p.get_double("width")).epsilon(1e-12));
    CHECK(back.get_double("rate") == doctest::Approx(p.get_double("rate")).epsilon(1e-12));
  }
}

TEST_CASE("log-uniform encoding is affine in log space") {
  SearchSpace s;
  s.params.push_back({"rate", ParamDomain::log_uniform(0.01, 1.0)});
  TrialParams p;
  p.set("rate", 0.1);  // geometric midpoint of [0.01, 1]
  const auto point = encode(p, s);
  CHECK(point[0] == doctest::Approx(0.5).epsilon(1e-12));
  const TrialParams back = decode(std::vector<double>{0.25}, s);
  // quarter of the log range: 0.01 * 100^0.25
  CHECK(back.get_double("rate") ==
        doctest::Approx(0.01 * std::pow(100.0, 0.25)).epsilon(1e-12));
}

TEST_CASE("integer decoding snaps to the nearest cell and stays in range") {
  SearchSpace s;
  s.params.push_back({"n", ParamDomain::integer(0, 4)});
  // 5 cells of width 0.2; decode the center, edges, and off-grid points
  CHECK(decode(std::vector<double>{0.0}, s).get_int("n") == 0);
  CHECK(decode(std::vector<double>{0.09}, s).get_int("n") == 0);
  CHECK(decode(std::vector<double>{0.30}, s).get_int("n") == 1);
  CHECK(decode(std::vector<double>{0.5}, s).get_int("n") == 2);
  CHECK(decode(std::vector<double>{0.99}, s).get_int("n") == 4);
  CHECK(decode(std::vector<double>{1.0}, s).get_int("n") == 4);

  // every integer maps to a distinct encoded coordinate that decodes back
  std::set<int64_t> seen;
  for (int64_t v = 0; v <= 4; ++v) {
    TrialParams p;
    p.set("n", v);
    const auto point = encode(p, s);
    CHECK(decode(point, s).get_int("n") == v);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("categorical decoding picks the largest coordinate, lowest index on ties") {
  SearchSpace s;
  s.params.push_back({"mode", ParamDomain::categorical({"a", "b", "c"})});
  CHECK(decode(std::vector<double>{0.1, 0.9, 0.2}, s).get_string("mode") == "b");
  CHECK(decode(std::vector<double>{0.4, 0.4, 0.4}, s).get_string("mode") == "a");
  CHECK(decode(std::vector<double>{0.0, 0.5, 0.5}, s).get_string("mode") == "b");

  TrialParams p;
  p.set("mode", std::string("c"));
  const auto point = encode(p, s);
  REQUIRE(point.size() == 3);
  CHECK(point[2] > point[0]);
  CHECK(point[2] > point[1]);
}

TEST_CASE("domain membership accepts in-range values and rejects the rest") {
  const SearchSpace s = mixed_space();
  CHECK(s.at("rate").domain.contains(0.01));
  CHECK(s.at("rate").domain.contains(1.0));
  CHECK_FALSE(s.at("rate").domain.contains(1.5));
  CHECK_FALSE(s.at("rate").domain.contains(int64_t{1}));  // wrong type
  CHECK(s.at("leaves").domain.contains(int64_t{8}));
  CHECK_FALSE(s.at("leaves").domain.contains(int64_t{65}));
  CHECK_FALSE(s.at("leaves").domain.contains(0.5));
  CHECK(s.at("mode").domain.contains(std::string("b")));
  CHECK_FALSE(s.at("mode").domain.contains(std::string("z")));
}

TEST_CASE("sampling respects bounds and covers categorical choices") {
  const SearchSpace s = mixed_space();
  Rng rng(11);
  std::set<std::string> modes;
  for (int i = 0; i < 500; ++i) {
    const TrialParams p = sample_params(s, rng);
    const double rate = p.get_double("rate");
    CHECK(rate >= 0.01);
    CHECK(rate <= 1.0);
    const int64_t leaves = p.get_int("leaves");
    CHECK(leaves >= 8);
    CHECK(leaves <= 64);
    modes.insert(p.get_string("mode"));
    validate_params(p, s);
  }
  CHECK(modes.size() == 3);
}

TEST_CASE("invalid domains and foreign parameters are rejected") {
  SearchSpace s;
  s.params.push_back({"x", ParamDomain::uniform(1.0, 0.5)});  // inverted bounds
  CHECK_THROWS_AS(s.validate(), Error);

  s.params[0].domain = ParamDomain::log_uniform(-1.0, 1.0);  // nonpositive lo
  CHECK_THROWS_AS(s.validate(), Error);

  s.params[0].domain = ParamDomain::categorical({});  // empty choices
  CHECK_THROWS_AS(s.validate(), Error);

  s.params[0].domain = ParamDomain::uniform(0.0, 1.0);
  s.params.push_back({"x", ParamDomain::uniform(0.0, 1.0)});  // duplicate name
  CHECK_THROWS_AS(s.validate(), Error);

  const SearchSpace good = mixed_space();
  TrialParams missing;  // lacks every parameter
  CHECK_THROWS_AS(validate_params(missing, good), Error);

  TrialParams wrong;
  wrong.set("rate", 0.1);
  wrong.set("width", 0.0);
  wrong.set("leaves", int64_t{8});
  wrong.set("mode", std::string("z"));  // not a choice
  CHECK_THROWS_AS(validate_params(wrong, good), Error);
}

TEST_CASE("typed getters enforce the stored type") {
  TrialParams p;
  p.set("a", 1.5);
  p.set("b", int64_t{3});
  p.set("c", std::string("x"));
  CHECK(p.get_double("a") == 1.5);
  CHECK(p.get_int("b") == 3);
  CHECK(p.get_string("c") == "x");
  CHECK(p.get_double("b") == 3.0);  // integers coerce to double
  CHECK_THROWS_AS(p.get_double("c"), Error);
  CHECK_THROWS_AS(p.get_int("a"), Error);
  CHECK_THROWS_AS(p.get_int("c"), Error);
  CHECK_THROWS_AS(p.get_string("missing"), Error);
  CHECK(param_value_to_string(ParamValue{int64_t{3}}) == "3");
  CHECK(param_value_to_string(ParamValue{std::string("x")}) == "x");
  CHECK(param_value_to_string(ParamValue{2.5}) == "2.5");
}
