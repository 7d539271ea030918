#include "bvr/field_proxy.hpp"

#include <algorithm>
#include <cmath>

#include "bvr/error.hpp"

namespace bvr {
namespace {

constexpr int kBumpCount = 12;
constexpr int kPiSamples = 5;

Point3 lerp(const Point3& a, const Point3& b, double t) {
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
}

double distance(const Point3& a, const Point3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

nlohmann::json point_json(const Point3& p) { return nlohmann::json::array({p.x, p.y, p.z}); }

Point3 point_from(const nlohmann::json& j) {
  const auto a = j.get<std::array<double, 3>>();
  return {a[0], a[1], a[2]};
}

}  // namespace

DecisionVector::DecisionVector(std::span<const double> values) {
  if (values.size() != static_cast<std::size_t>(kDecisionVars)) {
    throw ShapeError("DecisionVector needs " + std::to_string(kDecisionVars) + " values, got " +
                     std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), values_.begin());
}

Point3 DecisionVector::heel(int w) const {
  return {values_[placement_index(w, 0, 0)], values_[placement_index(w, 0, 1)], values_[placement_index(w, 0, 2)]};
}

Point3 DecisionVector::toe(int w) const {
  return {values_[placement_index(w, 1, 0)], values_[placement_index(w, 1, 1)], values_[placement_index(w, 1, 2)]};
}

ProxyField ProxyField::generate(std::uint64_t seed) {
  ProxyField f;
  f.seed = seed;
  Rng rng(derive_seed(seed, 0));
  for (int k = 0; k < kBumpCount; ++k) {
    PermeabilityBump b;
    b.center = {rng.uniform(0.0, f.extent.x), rng.uniform(0.0, f.extent.y), rng.uniform(0.0, f.extent.z)};
    b.amplitude = rng.uniform(0.5, 1.5);
    b.radius = rng.uniform(1000.0, 2500.0);
    f.bumps.push_back(b);
  }
  const int existing = kWells - kNewWells;
  for (int w = 0; w < existing; ++w) {
    WellTrajectory t;
    t.heel = {rng.uniform(500.0, f.extent.x - 500.0), rng.uniform(300.0, f.extent.y - 300.0),
              rng.uniform(10.0, f.extent.z - 10.0)};
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double length = rng.uniform(400.0, 1200.0);
    t.toe = {std::clamp(t.heel.x + length * std::cos(angle), 0.0, f.extent.x),
             std::clamp(t.heel.y + length * std::sin(angle), 0.0, f.extent.y), rng.uniform(10.0, f.extent.z - 10.0)};
    f.existing.push_back(t);
  }
  return f;
}

double ProxyField::permeability(const Point3& p) const {
  double k = 0.0;
  for (const PermeabilityBump& b : bumps) {
    const double dx = p.x - b.center.x;
    const double dy = p.y - b.center.y;
    const double dz = p.z - b.center.z;
    const double r2 = (dx * dx + dy * dy) / (b.radius * b.radius) + dz * dz / (vertical_radius * vertical_radius);
    k += b.amplitude * std::exp(-0.5 * r2);
  }
  return k;
}

double ProxyField::productivity_index(const WellTrajectory& w) const {
  double sum = 0.0;
  for (int s = 0; s < kPiSamples; ++s) {
    sum += permeability(lerp(w.heel, w.toe, static_cast<double>(s) / (kPiSamples - 1)));
  }
  return sum / kPiSamples * distance(w.heel, w.toe);
}

double ProxyField::reservoir_pressure(int period) const {
  return initial_pressure * (1.0 - pressure_decline * static_cast<double>(period));
}

double ProxyField::water_cut(int period) const { return 1.0 - std::exp(-static_cast<double>(period) / water_cut_tau); }

Bounds ProxyField::bounds() const {
  Bounds b{RowVector(kDecisionVars), RowVector(kDecisionVars)};
  const std::array<double, 3> hi{extent.x, extent.y, extent.z};
  for (int w = 0; w < kNewWells; ++w) {
    for (int end = 0; end < 2; ++end) {
      for (int axis = 0; axis < 3; ++axis) {
        const auto i = static_cast<Index>(DecisionVector::placement_index(w, end, axis));
        b.lower[i] = 0.0;
        b.upper[i] = hi[static_cast<std::size_t>(axis)];
      }
    }
  }
  for (int w = 0; w < kWells; ++w) {
    const bool prod = DecisionVector::is_producer(w);
    for (int t = 0; t < kPeriods; ++t) {
      const auto i = static_cast<Index>(DecisionVector::control_index(w, t));
      b.lower[i] = prod ? producer_bhp_min : injector_bhp_min;
      b.upper[i] = prod ? producer_bhp_max : injector_bhp_max;
    }
  }
  return b;
}

void to_json(nlohmann::json& j, const ProxyField& f) {
  nlohmann::json bumps = nlohmann::json::array();
  for (const auto& b : f.bumps) {
    bumps.push_back({{"center", point_json(b.center)}, {"amplitude", b.amplitude}, {"radius", b.radius}});
  }
  nlohmann::json wells = nlohmann::json::array();
  for (const auto& w : f.existing) wells.push_back({{"heel", point_json(w.heel)}, {"toe", point_json(w.toe)}});
  j = nlohmann::json{
      {"format_version", 1},
      {"seed", f.seed},
      {"extent", point_json(f.extent)},
      {"bumps", bumps},
      {"vertical_radius", f.vertical_radius},
      {"initial_pressure", f.initial_pressure},
      {"pressure_decline", f.pressure_decline},
      {"water_cut_tau", f.water_cut_tau},
      {"period_days", f.period_days},
      {"productivity", f.productivity},
      {"producer_bhp", {f.producer_bhp_min, f.producer_bhp_max}},
      {"injector_bhp", {f.injector_bhp_min, f.injector_bhp_max}},
      {"existing_wells", wells},
  };
}

void from_json(const nlohmann::json& j, ProxyField& f) {
  try {
    if (j.at("format_version").get<int>() != 1) throw DataError("field descriptor: unsupported format_version");
    f.seed = j.at("seed").get<std::uint64_t>();
    f.extent = point_from(j.at("extent"));
    f.bumps.clear();
    for (const auto& b : j.at("bumps")) {
      f.bumps.push_back({point_from(b.at("center")), b.at("amplitude").get<double>(), b.at("radius").get<double>()});
    }
    f.vertical_radius = j.at("vertical_radius").get<double>();
    f.initial_pressure = j.at("initial_pressure").get<double>();
    f.pressure_decline = j.at("pressure_decline").get<double>();
    f.water_cut_tau = j.at("water_cut_tau").get<double>();
    f.period_days = j.at("period_days").get<double>();
    f.productivity = j.at("productivity").get<double>();
    const auto prod = j.at("producer_bhp").get<std::array<double, 2>>();
    const auto inj = j.at("injector_bhp").get<std::array<double, 2>>();
    f.producer_bhp_min = prod[0];
    f.producer_bhp_max = prod[1];
    f.injector_bhp_min = inj[0];
    f.injector_bhp_max = inj[1];
    f.existing.clear();
    for (const auto& w : j.at("existing_wells")) f.existing.push_back({point_from(w.at("heel")), point_from(w.at("toe"))});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("field descriptor: ") + e.what());
  }
  if (f.existing.size() != static_cast<std::size_t>(kWells - kNewWells)) {
    throw DataError("field descriptor: expected 15 existing wells");
  }
  for (const auto& b : f.bumps) {
    if (!(b.amplitude > 0.0 && b.radius > 0.0)) throw DataError("field descriptor: bump amplitude/radius must be > 0");
  }
}

FluidVolumes simulate(const DecisionVector& decision, const ProxyField& field, double noise_std, Rng& rng) {
  DecisionVector d = decision;
  const Bounds box = field.bounds();
  FluidVolumes v;
  v.clamped = box.clamp(d.values().data());
  v.wells.assign(kWells, {});

  for (int w = 0; w < kWells; ++w) {
    const WellTrajectory traj =
        w < kNewWells ? WellTrajectory{d.heel(w), d.toe(w)} : field.existing[static_cast<std::size_t>(w - kNewWells)];
    const double pi = field.productivity_index(traj);
    for (int t = 0; t < kPeriods; ++t) {
      const int tau = t + 1;
      const double p = field.reservoir_pressure(tau);
      const double bhp = d.bhp(w, t);
      const double scale = field.productivity * pi * field.period_days;
      PeriodVolumes& pv = v.wells[static_cast<std::size_t>(w)][static_cast<std::size_t>(t)];
      if (DecisionVector::is_producer(w)) {
        const double wc = field.water_cut(tau);
        const double liquid = scale * std::max(0.0, p - bhp);
        pv.oil_produced = liquid * (1.0 - wc);
        pv.water_produced = liquid * wc;
      } else {
        pv.water_injected = scale * std::max(0.0, bhp - p);
      }
      if (noise_std > 0.0) {
        const double factor = std::max(0.0, 1.0 + noise_std * rng.normal());
        pv.oil_produced *= factor;
        pv.water_produced *= factor;
        pv.water_injected *= factor;
      }
    }
  }

  for (int t = 0; t < kPeriods; ++t) {
    PeriodVolumes& agg = v.periods[static_cast<std::size_t>(t)];
    for (const auto& well : v.wells) {
      agg.oil_produced += well[static_cast<std::size_t>(t)].oil_produced;
      agg.water_produced += well[static_cast<std::size_t>(t)].water_produced;
      agg.water_injected += well[static_cast<std::size_t>(t)].water_injected;
    }
  }
  for (const PeriodVolumes& pv : v.periods) {
    v.total_oil_produced += pv.oil_produced;
    v.total_water_produced += pv.water_produced;
    v.total_water_injected += pv.water_injected;
  }
  return v;
}

FluidVolumes simulate(const DecisionVector& decision, const ProxyField& field) {
  Rng unused(0);
  return simulate(decision, field, 0.0, unused);
}

double wcf(double oil_produced, double water_produced, double water_injected) {
  return oil_produced - 0.1 * water_produced - 0.1 * water_injected;
}

double wcf(const FluidVolumes& v) {
  return wcf(v.total_oil_produced, v.total_water_produced, v.total_water_injected);
}

EconomicParams EconomicParams::wcf_equivalent() { return {{1.0, -0.1, -0.1}, {0.0, 0.0, 0.0}, {}}; }

void to_json(nlohmann::json& j, const EconomicParams& e) {
  j = nlohmann::json{{"prices", e.prices}, {"discount", e.discount}, {"drilling", e.drilling}};
}

void from_json(const nlohmann::json& j, EconomicParams& e) {
  if (!j.is_object()) throw ConfigError("economics must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "prices") e.prices = v.get<std::vector<double>>();
      else if (key == "discount") e.discount = v.get<std::vector<double>>();
      else if (key == "drilling") e.drilling = v.get<std::vector<double>>();
      else throw ConfigError("unknown economics key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("economics: ") + ex.what());
  }
  if (e.prices.size() != e.discount.size()) throw ConfigError("economics: prices and discount lengths differ");
  for (double d : e.discount) {
    if (d < 0.0) throw ConfigError("economics: discount factors must be >= 0");
  }
}

double npv(const std::vector<std::vector<double>>& volumes, const EconomicParams& econ) {
  if (volumes.size() != econ.prices.size() || econ.discount.size() != econ.prices.size()) {
    throw ConfigError("npv: " + std::to_string(volumes.size()) + " volume components but " +
                      std::to_string(econ.prices.size()) + " prices");
  }
  double total = 0.0;
  for (std::size_t f = 0; f < volumes.size(); ++f) {
    double discounted = 0.0;
    for (std::size_t t = 0; t < volumes[f].size(); ++t) {
      discounted += volumes[f][t] / std::pow(1.0 + econ.discount[f], static_cast<double>(t));
    }
    total += discounted * econ.prices[f];
  }
  for (double d : econ.drilling) total += d;
  return total;
}

double npv(const FluidVolumes& v, const EconomicParams& econ) {
  std::vector<std::vector<double>> q(3, std::vector<double>(kPeriods));
  for (std::size_t t = 0; t < static_cast<std::size_t>(kPeriods); ++t) {
    q[0][t] = v.periods[t].oil_produced;
    q[1][t] = v.periods[t].water_produced;
    q[2][t] = v.periods[t].water_injected;
  }
  return npv(q, econ);
}

std::string to_string(ObjectiveKind k) { return k == ObjectiveKind::wcf ? "wcf" : "npv"; }

ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "wcf") return ObjectiveKind::wcf;
  if (s == "npv") return ObjectiveKind::npv;
  throw ConfigError("objective must be 'wcf' or 'npv', got '" + s + "'");
}

double objective_value(const FluidVolumes& v, ObjectiveKind kind, const EconomicParams& econ) {
  return kind == ObjectiveKind::wcf ? wcf(v) : npv(v, econ);
}

}  // namespace bvr
