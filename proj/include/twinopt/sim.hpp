#pragma once

// ------------------------------------------------------------
// VSG grid-forming converter as a linear state-space system,
// measurement expansion, fault injection and dataset generation.
//
// State x = [v_g, i_o, omega, v_dc, p, q], input u = [p_ref, q_ref],
// continuous dynamics xdot = A x + B u discretized with forward Euler.
// ------------------------------------------------------------

#include <array>
#include <vector>

#include "twinopt/common.hpp"
#include "twinopt/dataset.hpp"

namespace twinopt {

inline constexpr int kSimStateDim = 6;
inline constexpr int kSimInputDim = 2;
inline constexpr int kNumFaultClasses = 5;

struct SimState {
  // v_g, i_o, omega, v_dc, p, q
  std::array<double, kSimStateDim> x{};

  double v_g() const { return x[0]; }
  double i_o() const { return x[1]; }
  double omega() const { return x[2]; }
  double v_dc() const { return x[3]; }
  double p() const { return x[4]; }
  double q() const { return x[5]; }
};

struct ControlInput {
  double p_ref = 0.0;
  double q_ref = 0.0;
};

struct StateSpaceModel {
  std::array<std::array<double, kSimStateDim>, kSimStateDim> a_matrix{};
  std::array<std::array<double, kSimInputDim>, kSimStateDim> b_matrix{};
  double dt = 1e-3;
  std::array<double, kSimStateDim> noise_std{};

  // finite entries, dt > 0, noise_std >= 0
  void validate() const;

  // largest |eigenvalue| of I + dt*A
  double discrete_spectral_radius() const;

  // x with A x + B u = 0
  SimState equilibrium(const ControlInput& u) const;
};

// stable damped-oscillator defaults; the reference dynamics are a
// documented stand-in, overridable from the config file
StateSpaceModel default_model();

enum class Phase { A = 0, B = 1, C = 2 };

struct FaultScenario {
  int class_id = 0;              // 0 normal .. 4 three-phase grid fault
  double onset_time = 0.1;       // seconds
  double sag_depth = 0.5;        // class 3, fraction in (0, 1]
  Phase affected_phase = Phase::A;
  double sensor_offset = 0.3;    // class 2, pu
  double residual_fraction = 0.1;  // class 4, fraction in [0, 1)

  void validate() const;
};

struct MeasurementRow {
  double va = 0, vb = 0, vc = 0;
  double ia = 0, ib = 0, ic = 0;
  double omega = 0, v_dc = 0, p = 0, q = 0;
  int label = 0;

  std::array<double, 10> features() const {
    return {va, vb, vc, ia, ib, ic, omega, v_dc, p, q};
  }
};

const std::vector<std::string>& measurement_feature_names();
const std::vector<std::string>& fault_class_names();

// one forward-Euler step plus per-channel Gaussian process noise
SimState step(const StateSpaceModel& model, const SimState& x, const ControlInput& u, Rng& rng);

// balanced three-phase expansion of the state into measurement channels
MeasurementRow expand_measurements(const SimState& x);

// applies the class signature when t >= onset; identity otherwise
MeasurementRow inject_fault(const MeasurementRow& row, const FaultScenario& scenario, double t);

struct ScenarioMix {
  FaultScenario scenario;
  double weight = 0.0;
};

// default mixture: 0.70 / 0.05 / 0.10 / 0.10 / 0.05 for classes 0-4
std::vector<ScenarioMix> default_scenarios();

struct GeneratorConfig {
  size_t settle_steps = 100;     // simulated, not emitted; faults onset after this
  size_t rows_per_episode = 100;
  double p_ref_lo = 0.2, p_ref_hi = 1.0;
  double q_ref_lo = -0.3, q_ref_hi = 0.3;
  double init_perturbation = 0.05;
};

Dataset generate_dataset(const StateSpaceModel& model, const std::vector<ScenarioMix>& scenarios,
                         size_t n_rows, uint64_t seed,
                         const GeneratorConfig& gen = GeneratorConfig{});

}  // namespace twinopt
