#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvr/bounds.hpp"
#include "bvr/tensor.hpp"

namespace bvr {

// Decision layout: 3 new producers x (heel xyz, toe xyz), then 18 wells x 4
// BHP periods. Wells 0-2 are the new producers, 3-10 existing producers,
// 11-17 injectors.
inline constexpr int kNewWells = 3;
inline constexpr int kProducers = 11;
inline constexpr int kInjectors = 7;
inline constexpr int kWells = kProducers + kInjectors;
inline constexpr int kPeriods = 4;
inline constexpr int kPlacementVars = kNewWells * 6;
inline constexpr int kControlVars = kWells * kPeriods;
inline constexpr int kDecisionVars = kPlacementVars + kControlVars;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

class DecisionVector {
 public:
  DecisionVector() { values_.fill(0.0); }
  /// Throws ShapeError unless `values` has exactly 90 entries.
  explicit DecisionVector(std::span<const double> values);

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  Point3 heel(int new_well) const;
  Point3 toe(int new_well) const;
  double bhp(int well, int period) const { return values_[control_index(well, period)]; }

  static constexpr std::size_t placement_index(int new_well, int end, int axis) {
    return static_cast<std::size_t>(new_well * 6 + end * 3 + axis);
  }
  static constexpr std::size_t control_index(int well, int period) {
    return static_cast<std::size_t>(kPlacementVars + well * kPeriods + period);
  }
  static constexpr bool is_producer(int well) { return well < kProducers; }

 private:
  std::array<double, kDecisionVars> values_;
};

struct PermeabilityBump {
  Point3 center;
  double amplitude = 1.0;
  double radius = 1000.0;
};

struct WellTrajectory {
  Point3 heel;
  Point3 toe;
};

/// Analytic stand-in for a full-physics reservoir model: permeability is a
/// sum of Gaussian bumps, reservoir pressure declines linearly per period and
/// water cut rises as 1 - exp(-period / tau).
struct ProxyField {
  std::uint64_t seed = 0;
  Point3 extent{9000.0, 3000.0, 50.0};
  std::vector<PermeabilityBump> bumps;
  /// Vertical length scale of every bump (metres).
  double vertical_radius = 25.0;
  double initial_pressure = 250.0;
  double pressure_decline = 0.05;
  double water_cut_tau = 3.0;
  double period_days = 5.0 * 365.25;
  /// Rate (m^3/day) per unit of PI x pressure difference (bar).
  double productivity = 0.02;
  double producer_bhp_min = 150.0;
  double producer_bhp_max = 250.0;
  double injector_bhp_min = 250.0;
  double injector_bhp_max = 350.0;
  /// Existing wells 3..17 in well order (8 producers, then 7 injectors).
  std::vector<WellTrajectory> existing;

  /// 12 bumps and 15 existing wells drawn from `seed`.
  static ProxyField generate(std::uint64_t seed);

  double permeability(const Point3& p) const;
  /// Mean permeability at 5 equidistant points on heel-toe, times its length.
  double productivity_index(const WellTrajectory& w) const;
  /// p_tau = P0 * (1 - decline * tau), tau = 1..4.
  double reservoir_pressure(int period) const;
  double water_cut(int period) const;
  Bounds bounds() const;
};

void to_json(nlohmann::json& j, const ProxyField& f);
void from_json(const nlohmann::json& j, ProxyField& f);

struct PeriodVolumes {
  double oil_produced = 0.0;
  double water_produced = 0.0;
  double water_injected = 0.0;
};

struct FluidVolumes {
  std::array<PeriodVolumes, kPeriods> periods{};
  /// Per-well, per-period breakdown (kWells entries).
  std::vector<std::array<PeriodVolumes, kPeriods>> wells;
  double total_oil_produced = 0.0;
  double total_water_produced = 0.0;
  double total_water_injected = 0.0;
  /// The decision was outside the box and got clamped.
  bool clamped = false;
};

/// Deterministic for a fixed (decision, field, rng state). Out-of-box
/// decisions are clamped and flagged. `noise_std` > 0 multiplies each
/// well-period volume by max(0, 1 + noise_std * N(0,1)).
FluidVolumes simulate(const DecisionVector& decision, const ProxyField& field, double noise_std, Rng& rng);
FluidVolumes simulate(const DecisionVector& decision, const ProxyField& field);

/// Q_op - 0.1 * (Q_wp + Q_wi)
double wcf(double oil_produced, double water_produced, double water_injected);
double wcf(const FluidVolumes& v);

/// Prices, per-component discount rates and signed drilling cash flows.
/// Components are ordered oil, produced water, injected water.
struct EconomicParams {
  std::vector<double> prices{45.0, -3.0, -3.0};
  std::vector<double> discount{0.08, 0.08, 0.08};
  std::vector<double> drilling{-8e6, -8e6, -8e6};

  /// Prices (1, -0.1, -0.1), no discounting, no drilling: npv == wcf.
  static EconomicParams wcf_equivalent();
};

void to_json(nlohmann::json& j, const EconomicParams& e);
void from_json(const nlohmann::json& j, EconomicParams& e);

/// sum_f sum_tau Q[f][tau] * C_f / (1 + d_f)^(tau-1) + sum_i D_i, with
/// volumes[f][tau] and tau counted from 0. Throws ConfigError when the
/// component counts disagree.
double npv(const std::vector<std::vector<double>>& volumes, const EconomicParams& econ);
double npv(const FluidVolumes& v, const EconomicParams& econ);

enum class ObjectiveKind { wcf, npv };

std::string to_string(ObjectiveKind k);
ObjectiveKind objective_from_string(const std::string& s);

double objective_value(const FluidVolumes& v, ObjectiveKind kind, const EconomicParams& econ);

}  // namespace bvr
