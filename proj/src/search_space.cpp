#include "twinopt/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace twinopt {

std::string param_value_to_string(const ParamValue& v) {
  if (std::holds_alternative<double>(v)) return format_double(std::get<double>(v));
  if (std::holds_alternative<int64_t>(v)) return std::to_string(std::get<int64_t>(v));
  return std::get<std::string>(v);
}

ParamDomain ParamDomain::uniform(double lo, double hi) {
  ParamDomain d;
  d.kind = Kind::Uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

ParamDomain ParamDomain::log_uniform(double lo, double hi) {
  ParamDomain d;
  d.kind = Kind::LogUniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

ParamDomain ParamDomain::integer(int64_t lo, int64_t hi) {
  ParamDomain d;
  d.kind = Kind::Integer;
  d.lo = static_cast<double>(lo);
  d.hi = static_cast<double>(hi);
  return d;
}

ParamDomain ParamDomain::categorical(std::vector<std::string> choices) {
  ParamDomain d;
  d.kind = Kind::Categorical;
  d.choices = std::move(choices);
  return d;
}

void ParamDomain::validate(const std::string& name) const {
  switch (kind) {
    case Kind::Uniform:
      check(lo < hi, ErrorKind::Config, "parameter " + name + ": lo must be < hi");
      break;
    case Kind::LogUniform:
      check(lo > 0.0, ErrorKind::Config, "parameter " + name + ": log_uniform requires lo > 0");
      check(lo < hi, ErrorKind::Config, "parameter " + name + ": lo must be < hi");
      break;
    case Kind::Integer:
      check(lo < hi, ErrorKind::Config, "parameter " + name + ": lo must be < hi");
      check(lo == std::floor(lo) && hi == std::floor(hi), ErrorKind::Config,
            "parameter " + name + ": integer bounds must be whole numbers");
      break;
    case Kind::Categorical: {
      check(!choices.empty(), ErrorKind::Config,
            "parameter " + name + ": categorical needs at least one choice");
      std::set<std::string> uniq(choices.begin(), choices.end());
      check(uniq.size() == choices.size(), ErrorKind::Config,
            "parameter " + name + ": duplicate categorical choice");
      break;
    }
  }
}

size_t ParamDomain::encoded_width() const {
  return kind == Kind::Categorical ? choices.size() : 1;
}

bool ParamDomain::contains(const ParamValue& v) const {
  switch (kind) {
    case Kind::Uniform:
    case Kind::LogUniform: {
      if (!std::holds_alternative<double>(v)) return false;
      const double x = std::get<double>(v);
      return std::isfinite(x) && x >= lo && x <= hi;
    }
    case Kind::Integer: {
      if (!std::holds_alternative<int64_t>(v)) return false;
      const double x = static_cast<double>(std::get<int64_t>(v));
      return x >= lo && x <= hi;
    }
    case Kind::Categorical: {
      if (!std::holds_alternative<std::string>(v)) return false;
      return std::find(choices.begin(), choices.end(), std::get<std::string>(v)) !=
             choices.end();
    }
  }
  return false;
}

void SearchSpace::validate() const {
  check(!params.empty(), ErrorKind::Config, "search space has no parameters");
  std::set<std::string> names;
  for (const auto& p : params) {
    check(!p.name.empty(), ErrorKind::Config, "search space parameter with empty name");
    check(names.insert(p.name).second, ErrorKind::Config,
          "duplicate search space parameter: " + p.name);
    p.domain.validate(p.name);
  }
}

size_t SearchSpace::encoded_dim() const {
  size_t dim = 0;
  for (const auto& p : params) dim += p.domain.encoded_width();
  return dim;
}

const ParamSpec& SearchSpace::at(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw Error(ErrorKind::Config, "unknown search space parameter: " + name);
}

double TrialParams::get_double(const std::string& name) const {
  auto it = values.find(name);
  check(it != values.end(), ErrorKind::Config, "missing parameter: " + name);
  if (std::holds_alternative<double>(it->second)) return std::get<double>(it->second);
  if (std::holds_alternative<int64_t>(it->second)) {
    return static_cast<double>(std::get<int64_t>(it->second));
  }
  throw Error(ErrorKind::Config, "parameter " + name + " is not numeric");
}

int64_t TrialParams::get_int(const std::string& name) const {
  auto it = values.find(name);
  check(it != values.end(), ErrorKind::Config, "missing parameter: " + name);
  check(std::holds_alternative<int64_t>(it->second), ErrorKind::Config,
        "parameter " + name + " is not an integer");
  return std::get<int64_t>(it->second);
}

const std::string& TrialParams::get_string(const std::string& name) const {
  auto it = values.find(name);
  check(it != values.end(), ErrorKind::Config, "missing parameter: " + name);
  check(std::holds_alternative<std::string>(it->second), ErrorKind::Config,
        "parameter " + name + " is not categorical");
  return std::get<std::string>(it->second);
}

void validate_params(const TrialParams& params, const SearchSpace& space) {
  for (const auto& spec : space.params) {
    auto it = params.values.find(spec.name);
    check(it != params.values.end(), ErrorKind::Encoding,
          "assignment is missing parameter: " + spec.name);
    check(spec.domain.contains(it->second), ErrorKind::Encoding,
          "value out of domain for parameter: " + spec.name);
  }
}

std::vector<double> encode(const TrialParams& params, const SearchSpace& space) {
  validate_params(params, space);
  std::vector<double> out;
  out.reserve(space.encoded_dim());
  for (const auto& spec : space.params) {
    const ParamDomain& d = spec.domain;
    const ParamValue& v = params.values.at(spec.name);
    switch (d.kind) {
      case ParamDomain::Kind::Uniform:
        out.push_back((std::get<double>(v) - d.lo) / (d.hi - d.lo));
        break;
      case ParamDomain::Kind::LogUniform:
        out.push_back((std::log(std::get<double>(v)) - std::log(d.lo)) /
                      (std::log(d.hi) - std::log(d.lo)));
        break;
      case ParamDomain::Kind::Integer: {
        const double x = static_cast<double>(std::get<int64_t>(v));
        out.push_back((x - d.lo + 0.5) / (d.hi - d.lo + 1.0));
        break;
      }
      case ParamDomain::Kind::Categorical: {
        const std::string& s = std::get<std::string>(v);
        for (const auto& choice : d.choices) out.push_back(choice == s ? 1.0 : 0.0);
        break;
      }
    }
  }
  return out;
}

TrialParams decode(std::span<const double> point, const SearchSpace& space) {
  check(point.size() == space.encoded_dim(), ErrorKind::Encoding,
        "encoded point has wrong dimension");
  TrialParams params;
  size_t pos = 0;
  for (const auto& spec : space.params) {
    const ParamDomain& d = spec.domain;
    switch (d.kind) {
      case ParamDomain::Kind::Uniform: {
        const double u = std::clamp(point[pos++], 0.0, 1.0);
        params.set(spec.name, d.lo + u * (d.hi - d.lo));
        break;
      }
      case ParamDomain::Kind::LogUniform: {
        const double u = std::clamp(point[pos++], 0.0, 1.0);
        params.set(spec.name,
                   std::exp(std::log(d.lo) + u * (std::log(d.hi) - std::log(d.lo))));
        break;
      }
      case ParamDomain::Kind::Integer: {
        const double u = std::clamp(point[pos++], 0.0, 1.0);
        const double cells = d.hi - d.lo + 1.0;
        double x = d.lo + std::floor(u * cells);
        x = std::clamp(x, d.lo, d.hi);
        params.set(spec.name, static_cast<int64_t>(x));
        break;
      }
      case ParamDomain::Kind::Categorical: {
        size_t best = 0;
        for (size_t i = 1; i < d.choices.size(); ++i) {
          if (point[pos + i] > point[pos + best]) best = i;
        }
        params.set(spec.name, d.choices[best]);
        pos += d.choices.size();
        break;
      }
    }
  }
  return params;
}

TrialParams sample_params(const SearchSpace& space, Rng& rng) {
  TrialParams params;
  for (const auto& spec : space.params) {
    const ParamDomain& d = spec.domain;
    switch (d.kind) {
      case ParamDomain::Kind::Uniform:
        params.set(spec.name, rng.uniform(d.lo, d.hi));
        break;
      case ParamDomain::Kind::LogUniform:
        params.set(spec.name, std::exp(rng.uniform(std::log(d.lo), std::log(d.hi))));
        break;
      case ParamDomain::Kind::Integer: {
        const uint64_t span = static_cast<uint64_t>(d.hi - d.lo) + 1;
        params.set(spec.name,
                   static_cast<int64_t>(d.lo) + static_cast<int64_t>(rng.uniform_int(span)));
        break;
      }
      case ParamDomain::Kind::Categorical:
        params.set(spec.name, d.choices[rng.uniform_int(d.choices.size())]);
        break;
    }
  }
  return params;
}

}  // namespace twinopt
