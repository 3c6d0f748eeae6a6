#include "twinopt/sim.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace twinopt {

namespace {

const char* kChannelNames[kSimStateDim] = {"v_g", "i_o", "omega", "v_dc", "p", "q"};

Eigen::Matrix<double, 6, 6> to_eigen_a(const StateSpaceModel& m) {
  Eigen::Matrix<double, 6, 6> a;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) a(i, j) = m.a_matrix[i][j];
  return a;
}

}  // namespace

void StateSpaceModel::validate() const {
  for (const auto& row : a_matrix)
    for (double v : row)
      check(std::isfinite(v), ErrorKind::Config, "a_matrix contains a non-finite entry");
  for (const auto& row : b_matrix)
    for (double v : row)
      check(std::isfinite(v), ErrorKind::Config, "b_matrix contains a non-finite entry");
  check(dt > 0.0, ErrorKind::Config, "dt must be > 0");
  for (double s : noise_std)
    check(s >= 0.0 && std::isfinite(s), ErrorKind::Config, "noise_std must be >= 0");
}

double StateSpaceModel::discrete_spectral_radius() const {
  Eigen::Matrix<double, 6, 6> ad =
      Eigen::Matrix<double, 6, 6>::Identity() + dt * to_eigen_a(*this);
  Eigen::EigenSolver<Eigen::Matrix<double, 6, 6>> es(ad, false);
  double rho = 0.0;
  for (int i = 0; i < 6; ++i) rho = std::max(rho, std::abs(es.eigenvalues()[i]));
  return rho;
}

SimState StateSpaceModel::equilibrium(const ControlInput& u) const {
  Eigen::Matrix<double, 6, 6> a = to_eigen_a(*this);
  Eigen::Matrix<double, 6, 1> bu;
  for (int i = 0; i < 6; ++i) bu(i) = -(b_matrix[i][0] * u.p_ref + b_matrix[i][1] * u.q_ref);
  Eigen::Matrix<double, 6, 1> x = a.fullPivLu().solve(bu);
  SimState s;
  for (int i = 0; i < 6; ++i) s.x[static_cast<size_t>(i)] = x(i);
  return s;
}

StateSpaceModel default_model() {
  StateSpaceModel m;
  // voltage/current damped-oscillator block plus first-order lags on
  // omega, v_dc, p, q; chosen so the equilibrium at u = (1, 0) is
  // (1.0, 0.5, 1.0, 1.0, 1.0, 0.0)
  m.a_matrix = {{
      {-6.0, -1.5, 0.0, 0.0, 0.5, 0.0},
      {2.0, -5.0, 0.0, 0.0, 0.8, 0.3},
      {0.0, 0.0, -3.0, 0.0, 0.6, 0.0},
      {0.5, 0.0, 0.0, -4.0, -0.4, 0.0},
      {0.0, 0.0, 0.0, 0.0, -8.0, 0.0},
      {0.0, 0.0, 0.0, 0.0, 0.0, -8.0},
  }};
  m.b_matrix = {{
      {6.25, 0.5},
      {-0.3, 1.0},
      {2.4, 0.3},
      {3.9, -0.2},
      {8.0, 0.0},
      {0.0, 8.0},
  }};
  m.dt = 1e-3;
  m.noise_std.fill(0.01);
  return m;
}

void FaultScenario::validate() const {
  check(class_id >= 0 && class_id < kNumFaultClasses, ErrorKind::InvalidScenario,
        "class_id must be in {0..4}, got " + std::to_string(class_id));
  check(onset_time >= 0.0, ErrorKind::InvalidScenario, "onset_time must be >= 0");
  check(sag_depth > 0.0 && sag_depth <= 1.0, ErrorKind::InvalidScenario,
        "sag_depth must be in (0, 1]");
  check(residual_fraction >= 0.0 && residual_fraction < 1.0, ErrorKind::InvalidScenario,
        "residual_fraction must be in [0, 1)");
}

const std::vector<std::string>& measurement_feature_names() {
  static const std::vector<std::string> names = {"va", "vb",    "vc",   "ia", "ib",
                                                 "ic", "omega", "v_dc", "p",  "q"};
  return names;
}

const std::vector<std::string>& fault_class_names() {
  static const std::vector<std::string> names = {
      "Normal behavior", "Line-to-line fault", "Three-phase sensor fault", "Single-phase sag",
      "Three-phase grid fault"};
  return names;
}

SimState step(const StateSpaceModel& model, const SimState& x, const ControlInput& u, Rng& rng) {
  SimState out;
  const double dt = model.dt;
  for (int i = 0; i < kSimStateDim; ++i) {
    double ax = 0.0;
    for (int j = 0; j < kSimStateDim; ++j) ax += model.a_matrix[i][j] * x.x[static_cast<size_t>(j)];
    double bu = model.b_matrix[i][0] * u.p_ref + model.b_matrix[i][1] * u.q_ref;
    double v = x.x[static_cast<size_t>(i)] + dt * (ax + bu);
    if (model.noise_std[static_cast<size_t>(i)] > 0.0) {
      v += rng.normal(0.0, model.noise_std[static_cast<size_t>(i)]);
    }
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::SimDivergence,
                  std::string("simulation diverged on channel ") + kChannelNames[i]);
    }
    out.x[static_cast<size_t>(i)] = v;
  }
  return out;
}

MeasurementRow expand_measurements(const SimState& x) {
  MeasurementRow r;
  r.va = r.vb = r.vc = x.v_g();
  r.ia = r.ib = r.ic = x.i_o();
  r.omega = x.omega();
  r.v_dc = x.v_dc();
  r.p = x.p();
  r.q = x.q();
  r.label = 0;
  return r;
}

namespace {

double& phase_voltage(MeasurementRow& r, Phase ph) {
  switch (ph) {
    case Phase::A: return r.va;
    case Phase::B: return r.vb;
    default: return r.vc;
  }
}

}  // namespace

MeasurementRow inject_fault(const MeasurementRow& row, const FaultScenario& scenario, double t) {
  scenario.validate();
  if (scenario.class_id == 0 || t < scenario.onset_time) return row;

  MeasurementRow r = row;
  switch (scenario.class_id) {
    case 1: {
      // line-to-line between phases a and b: voltages collapse toward
      // their midpoint, both currents rise
      double mid = 0.5 * (r.va + r.vb);
      double gap = 0.1 * std::abs(r.va - r.vb);
      r.va = mid + gap;
      r.vb = mid - gap;
      r.ia *= 1.5;
      r.ib *= 1.5;
      break;
    }
    case 2:
      // sensor fault: measured voltages offset, dynamics untouched
      r.va += scenario.sensor_offset;
      r.vb += scenario.sensor_offset;
      r.vc += scenario.sensor_offset;
      break;
    case 3:
      phase_voltage(r, scenario.affected_phase) *= (1.0 - scenario.sag_depth);
      break;
    case 4: {
      r.va *= scenario.residual_fraction;
      r.vb *= scenario.residual_fraction;
      r.vc *= scenario.residual_fraction;
      double boost = scenario.residual_fraction > 0.0
                         ? std::min(1.0 / scenario.residual_fraction, 2.0)
                         : 2.0;
      r.ia *= boost;
      r.ib *= boost;
      r.ic *= boost;
      break;
    }
    default:
      throw Error(ErrorKind::InvalidScenario, "unknown class_id");
  }
  r.label = scenario.class_id;
  return r;
}

std::vector<ScenarioMix> default_scenarios() {
  std::vector<ScenarioMix> mix(kNumFaultClasses);
  const double weights[kNumFaultClasses] = {0.70, 0.05, 0.10, 0.10, 0.05};
  for (int c = 0; c < kNumFaultClasses; ++c) {
    mix[static_cast<size_t>(c)].scenario.class_id = c;
    mix[static_cast<size_t>(c)].scenario.onset_time = 0.1;
    mix[static_cast<size_t>(c)].weight = weights[c];
  }
  return mix;
}

namespace {

// largest-remainder apportionment of n_rows across weights, ties by index
std::vector<size_t> apportion(const std::vector<double>& weights, size_t n_rows) {
  double total = 0.0;
  for (double w : weights) {
    check(w >= 0.0 && std::isfinite(w), ErrorKind::Config, "scenario weights must be >= 0");
    total += w;
  }
  check(total > 0.0, ErrorKind::Config, "scenario weights must not all be zero");

  std::vector<size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    double share = static_cast<double>(n_rows) * weights[i] / total;
    counts[i] = static_cast<size_t>(std::floor(share));
    assigned += counts[i];
    remainders.emplace_back(share - std::floor(share), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (size_t k = 0; assigned < n_rows; ++k, ++assigned) {
    counts[remainders[k % remainders.size()].second] += 1;
  }
  return counts;
}

}  // namespace

Dataset generate_dataset(const StateSpaceModel& model, const std::vector<ScenarioMix>& scenarios,
                         size_t n_rows, uint64_t seed, const GeneratorConfig& gen) {
  model.validate();
  check(n_rows > 0, ErrorKind::Config, "n_rows must be > 0");
  check(!scenarios.empty(), ErrorKind::Config, "scenario list must not be empty");
  for (const auto& s : scenarios) s.scenario.validate();

  std::vector<double> weights;
  for (const auto& s : scenarios) weights.push_back(s.weight);
  const std::vector<size_t> quota = apportion(weights, n_rows);

  Dataset data;
  data.feature_names = measurement_feature_names();
  data.values.reserve(n_rows * data.feature_names.size());
  data.labels.reserve(n_rows);

  Rng root(seed);
  for (size_t si = 0; si < scenarios.size(); ++si) {
    const FaultScenario& scenario = scenarios[si].scenario;
    size_t remaining = quota[si];
    size_t episode = 0;
    while (remaining > 0) {
      Rng rng = root.fork((si << 32) | episode);
      ++episode;
      ControlInput u{rng.uniform(gen.p_ref_lo, gen.p_ref_hi),
                     rng.uniform(gen.q_ref_lo, gen.q_ref_hi)};
      SimState x = model.equilibrium(u);
      for (auto& v : x.x) v += rng.normal(0.0, gen.init_perturbation);

      // emission starts after the settle window; the scenario onset is
      // placed inside it so every emitted fault row carries its label
      FaultScenario ep = scenario;
      ep.onset_time = static_cast<double>(gen.settle_steps) * model.dt;

      double t = 0.0;
      for (size_t k = 0; k < gen.settle_steps; ++k) {
        x = step(model, x, u, rng);
        t += model.dt;
      }
      const size_t emit = std::min(remaining, gen.rows_per_episode);
      for (size_t k = 0; k < emit; ++k) {
        MeasurementRow row = inject_fault(expand_measurements(x), ep, t);
        data.append_row(row.features(), row.label);
        x = step(model, x, u, rng);
        t += model.dt;
      }
      remaining -= emit;
    }
  }
  return data;
}

}  // namespace twinopt
