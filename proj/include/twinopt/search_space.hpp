#pragma once

// ------------------------------------------------------------
// typed hyperparameter search space and its unit-hypercube
// encoding. Continuous domains map affinely (log-space for
// log_uniform), integers map to centered cells so the round
// trip is exact, categoricals become one-hot blocks.
// ------------------------------------------------------------

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "twinopt/common.hpp"

namespace twinopt {

using ParamValue = std::variant<double, int64_t, std::string>;

std::string param_value_to_string(const ParamValue& v);

struct ParamDomain {
  enum class Kind { Uniform, LogUniform, Integer, Categorical };

  Kind kind = Kind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::string> choices;

  static ParamDomain uniform(double lo, double hi);
  static ParamDomain log_uniform(double lo, double hi);
  static ParamDomain integer(int64_t lo, int64_t hi);
  static ParamDomain categorical(std::vector<std::string> choices);

  void validate(const std::string& name) const;
  size_t encoded_width() const;  // 1, or number of choices for categorical
  bool contains(const ParamValue& v) const;
};

struct ParamSpec {
  std::string name;
  ParamDomain domain;
};

struct SearchSpace {
  std::vector<ParamSpec> params;

  void validate() const;
  size_t encoded_dim() const;
  const ParamSpec& at(const std::string& name) const;
};

struct TrialParams {
  std::map<std::string, ParamValue> values;

  bool has(const std::string& name) const { return values.count(name) > 0; }
  double get_double(const std::string& name) const;
  int64_t get_int(const std::string& name) const;
  const std::string& get_string(const std::string& name) const;
  void set(const std::string& name, ParamValue v) { values[name] = std::move(v); }

  bool operator==(const TrialParams& other) const = default;
};

// every space parameter present and inside its domain
void validate_params(const TrialParams& params, const SearchSpace& space);

std::vector<double> encode(const TrialParams& params, const SearchSpace& space);
TrialParams decode(std::span<const double> point, const SearchSpace& space);

// uniform draw over the space (log-uniform respected)
TrialParams sample_params(const SearchSpace& space, Rng& rng);

}  // namespace twinopt
