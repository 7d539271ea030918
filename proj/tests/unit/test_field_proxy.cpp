#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "bvr/dataset.hpp"
#include "bvr/error.hpp"
#include "bvr/field_proxy.hpp"
#include "test_support.hpp"

using namespace bvr;
using Volumes = std::vector<std::vector<double>>;

namespace {

DecisionVector random_decision(const ProxyField& f, Rng& rng) {
  const Bounds b = f.bounds();
  DecisionVector d;
  for (int i = 0; i < kDecisionVars; ++i) d[static_cast<std::size_t>(i)] = rng.uniform(b.lower[i], b.upper[i]);
  return d;
}

double total_volume(const FluidVolumes& v) {
  return v.total_oil_produced + v.total_water_produced + v.total_water_injected;
}

// Kolmogorov-Smirnov distance between a sample and U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = (xs[i] - lo) / (hi - lo);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

TEST_SUITE("field-proxy") {
  TEST_CASE("wcf formula") {
    CHECK(wcf(0.0, 0.0, 0.0) == 0.0);
    CHECK(wcf(100.0, 50.0, 50.0) == doctest::Approx(90.0).epsilon(1e-15));
    CHECK(wcf(0.0, 10.0, 0.0) == doctest::Approx(-1.0).epsilon(1e-15));
  }

  TEST_CASE("npv formula") {
    EconomicParams one{{5.0}, {0.0}, {}};
    CHECK(npv(Volumes{{10.0}}, one) == doctest::Approx(50.0).epsilon(1e-15));

    EconomicParams discounted{{1.0}, {0.1}, {}};
    CHECK(npv(Volumes{{10.0, 10.0}}, discounted) == doctest::Approx(10.0 + 10.0 / 1.1).epsilon(1e-14));
    CHECK(npv(Volumes{{10.0, 10.0}}, discounted) == doctest::Approx(19.0909).epsilon(1e-5));

    EconomicParams drilling{{45.0, -3.0, -3.0}, {0.08, 0.08, 0.08}, {-8e6, -8e6, -8e6}};
    CHECK(npv(Volumes{{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}}, drilling) == doctest::Approx(-2.4e7));

    EconomicParams mismatched{{1.0, 2.0}, {0.0, 0.0}, {}};
    CHECK_THROWS_AS(npv(Volumes{{1.0}}, mismatched), ConfigError);
  }

  TEST_CASE("npv with wcf-equivalent economics equals wcf") {
    const ProxyField f = ProxyField::generate(4);
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
      const FluidVolumes v = simulate(random_decision(f, rng), f);
      CHECK(npv(v, EconomicParams::wcf_equivalent()) == doctest::Approx(wcf(v)).epsilon(1e-12));
    }
  }

  TEST_CASE("volumes are nonnegative and totals equal period sums") {
    const ProxyField f = ProxyField::generate(5);
    Rng rng(2);
    for (int k = 0; k < 50; ++k) {
      const FluidVolumes v = simulate(random_decision(f, rng), f, 0.3, rng);
      double oil = 0.0;
      for (const auto& p : v.periods) {
        CHECK(p.oil_produced >= 0.0);
        CHECK(p.water_produced >= 0.0);
        CHECK(p.water_injected >= 0.0);
        oil += p.oil_produced;
      }
      CHECK(v.total_oil_produced == doctest::Approx(oil).epsilon(1e-14));
      CHECK_FALSE(v.clamped);
    }
  }

  TEST_CASE("permeability is positive everywhere in the box") {
    const ProxyField f = ProxyField::generate(6);
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
      CHECK(f.permeability({rng.uniform(0, 9000), rng.uniform(0, 3000), rng.uniform(0, 50)}) > 0.0);
    }
  }

  TEST_CASE("zero drawdown gives no production") {
    const ProxyField f = ProxyField::generate(7);
    Rng rng(4);
    DecisionVector d = random_decision(f, rng);
    for (int w = 0; w < kProducers; ++w) {
      for (int t = 0; t < kPeriods; ++t) d[DecisionVector::control_index(w, t)] = f.producer_bhp_max;
    }
    REQUIRE(f.producer_bhp_max >= f.reservoir_pressure(1));
    const FluidVolumes v = simulate(d, f);
    CHECK(v.total_oil_produced == 0.0);
    CHECK(v.total_water_produced == 0.0);
  }

  TEST_CASE("mirror-symmetric placements give identical per-well volumes") {
    ProxyField f = ProxyField::generate(8);
    f.bumps = {{{2000.0, 1500.0, 25.0}, 1.2, 1500.0}, {{7000.0, 1500.0, 25.0}, 1.2, 1500.0},
               {{4500.0, 800.0, 10.0}, 0.7, 2000.0}};
    Rng rng(5);
    DecisionVector d = random_decision(f, rng);
    const Point3 heel{1500.0, 1000.0, 20.0};
    const Point3 toe{2600.0, 1900.0, 30.0};
    auto place = [&](int w, const Point3& h, const Point3& t) {
      const double hv[3] = {h.x, h.y, h.z};
      const double tv[3] = {t.x, t.y, t.z};
      for (int a = 0; a < 3; ++a) {
        d[DecisionVector::placement_index(w, 0, a)] = hv[a];
        d[DecisionVector::placement_index(w, 1, a)] = tv[a];
      }
    };
    place(0, heel, toe);
    place(1, {9000.0 - heel.x, heel.y, heel.z}, {9000.0 - toe.x, toe.y, toe.z});
    for (int t = 0; t < kPeriods; ++t) {
      d[DecisionVector::control_index(0, t)] = f.producer_bhp_min;
      d[DecisionVector::control_index(1, t)] = f.producer_bhp_min;
    }

    const FluidVolumes v = simulate(d, f);
    for (int t = 0; t < kPeriods; ++t) {
      CHECK(v.wells[0][static_cast<std::size_t>(t)].oil_produced ==
            doctest::Approx(v.wells[1][static_cast<std::size_t>(t)].oil_produced).epsilon(1e-12));
      CHECK(v.wells[0][static_cast<std::size_t>(t)].water_produced ==
            doctest::Approx(v.wells[1][static_cast<std::size_t>(t)].water_produced).epsilon(1e-12));
    }
    CHECK(v.wells[0][0].oil_produced > 0.0);
  }

  TEST_CASE("doubling bump amplitudes doubles every volume") {
    const ProxyField f = ProxyField::generate(9);
    ProxyField g = f;
    for (auto& b : g.bumps) b.amplitude *= 2.0;
    Rng rng(6);
    for (int k = 0; k < 10; ++k) {
      const DecisionVector d = random_decision(f, rng);
      const FluidVolumes a = simulate(d, f);
      const FluidVolumes b = simulate(d, g);
      for (int w = 0; w < kWells; ++w) {
        for (int t = 0; t < kPeriods; ++t) {
          const auto& pa = a.wells[static_cast<std::size_t>(w)][static_cast<std::size_t>(t)];
          const auto& pb = b.wells[static_cast<std::size_t>(w)][static_cast<std::size_t>(t)];
          CHECK(pb.oil_produced == doctest::Approx(2.0 * pa.oil_produced).epsilon(1e-12));
          CHECK(pb.water_injected == doctest::Approx(2.0 * pa.water_injected).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("simulate is deterministic and flags clamping") {
    const ProxyField f = ProxyField::generate(10);
    Rng rng(7);
    const DecisionVector d = random_decision(f, rng);
    Rng r1(99);
    Rng r2(99);
    CHECK(total_volume(simulate(d, f, 0.2, r1)) == total_volume(simulate(d, f, 0.2, r2)));

    DecisionVector out = d;
    out[0] = -100.0;
    out[DecisionVector::control_index(0, 0)] = 1e4;
    const FluidVolumes v = simulate(out, f);
    CHECK(v.clamped);
    DecisionVector fixed = out;
    fixed[0] = 0.0;
    fixed[DecisionVector::control_index(0, 0)] = f.producer_bhp_max;
    CHECK(total_volume(simulate(fixed, f)) == total_volume(v));
  }

  TEST_CASE("field JSON round trip") {
    const ProxyField f = ProxyField::generate(11);
    nlohmann::json j = f;
    const ProxyField g = j.get<ProxyField>();
    Rng rng(8);
    const DecisionVector d = random_decision(f, rng);
    CHECK(wcf(simulate(d, f)) == wcf(simulate(d, g)));
  }

  TEST_CASE("decision vector requires 90 entries") {
    std::vector<double> short_values(89, 0.0);
    CHECK_THROWS_AS(DecisionVector{short_values}, ShapeError);
  }

  TEST_CASE("uniform sampler marginals are uniform") {
    const ProxyField f = ProxyField::generate(12);
    DatasetSpec spec;
    spec.samples = 10000;
    spec.seed = 3;
    const LabeledDataset data = generate_dataset(f, spec);
    REQUIRE(data.size() == 10000);
    const Bounds b = f.bounds();
    for (Index j = 0; j < kDecisionVars; ++j) {
      std::vector<double> col(data.features.col(j).begin(), data.features.col(j).end());
      CHECK_MESSAGE(ks_uniform(col, b.lower[j], b.upper[j]) < 0.05, "column ", j);
    }
    CHECK(data.train_indices.size() == 8000);
    CHECK(data.holdout_indices.size() == 2000);
  }

  TEST_CASE("optimizer-trace sampler is denser at high objective values") {
    const ProxyField f = ProxyField::generate(13);
    DatasetSpec spec;
    spec.samples = 2000;
    spec.seed = 4;
    const LabeledDataset uniform = generate_dataset(f, spec);
    spec.sampler = SamplerKind::optimizer_trace;
    const LabeledDataset trace = generate_dataset(f, spec);
    REQUIRE(trace.size() == 2000);

    std::vector<double> sorted(uniform.targets.begin(), uniform.targets.end());
    std::sort(sorted.begin(), sorted.end());
    const double decile = sorted[sorted.size() * 9 / 10];
    const auto above = std::count_if(trace.targets.begin(), trace.targets.end(), [&](double y) { return y > decile; });
    CHECK(static_cast<double>(above) / static_cast<double>(trace.size()) > 0.10);
  }

  TEST_CASE("single-row dataset is reproducible") {
    const ProxyField f = ProxyField::generate(14);
    DatasetSpec spec;
    spec.samples = 1;
    spec.seed = 21;
    const LabeledDataset a = generate_dataset(f, spec);
    const LabeledDataset b = generate_dataset(f, spec);
    REQUIRE(a.size() == 1);
    CHECK(a.features == b.features);
    CHECK(a.targets == b.targets);
  }

  TEST_CASE("normalization statistics round trip") {
    const ProxyField f = ProxyField::generate(15);
    DatasetSpec spec;
    spec.samples = 500;
    spec.seed = 5;
    const LabeledDataset data = generate_dataset(f, spec);
    const Matrix train = data.features_of(data.train_indices);
    const Matrix z = data.stats.normalize(train);
    CHECK(z.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
    CHECK((data.stats.denormalize(z) - train).cwiseAbs().maxCoeff() < 1e-12 * train.cwiseAbs().maxCoeff());
    const Vector yz = data.stats.normalize_targets(data.targets_of(data.train_indices));
    CHECK(std::abs(yz.mean()) < 1e-10);
  }

  TEST_CASE("constant feature column warns and stays unscaled") {
    Matrix x(4, 2);
    x << 1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0;
    Vector y(4);
    y << 1.0, 2.0, 3.0, 4.0;
    std::vector<std::string> warnings;
    const NormStats s = NormStats::fit(x, y, {}, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("column 1") != std::string::npos);
    CHECK_FALSE(s.feature_scaled[1]);
    CHECK(s.normalize(x).allFinite());
  }

  TEST_CASE("dataset CSV is byte-identical across runs and round trips") {
    const ProxyField f = ProxyField::generate(16);
    DatasetSpec spec;
    spec.samples = 50;
    spec.seed = 6;
    spec.noise_std = 0.05;
    test::TempDir dir;
    write_dataset(generate_dataset(f, spec), dir / "a.csv");
    write_dataset(generate_dataset(f, spec), dir / "b.csv");
    CHECK(test::slurp(dir / "a.csv") == test::slurp(dir / "b.csv"));
    CHECK(test::slurp(dir / "a.csv").rfind("x000,x001", 0) == 0);

    const LabeledDataset back = read_dataset(dir / "a.csv");
    const LabeledDataset orig = generate_dataset(f, spec);
    CHECK(back.features == orig.features);
    CHECK(back.targets == orig.targets);
    CHECK(back.train_indices == orig.train_indices);
    CHECK(back.stats.target_std == orig.stats.target_std);
  }

  TEST_CASE("malformed dataset file raises DataError") {
    test::TempDir dir;
    {
      std::ofstream out(dir / "bad.csv");
      out << "x000,y\n1,2\n";
    }
    CHECK_THROWS_AS(read_dataset(dir / "bad.csv"), DataError);
    CHECK_THROWS_AS(parse_double("1.2.3"), DataError);
    CHECK(parse_double(format_double(0.1)) == 0.1);
  }
}
