#include "bvr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bvr/error.hpp"
#include "bvr/optimizer.hpp"

namespace bvr {
namespace {

constexpr int kTracePopulation = 20;
constexpr int kTraceGenerations = 24;
constexpr int kDatasetFormatVersion = 1;

std::string column_name(int j) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "x%03d", j);
  return buf;
}

std::vector<double> to_std(const RowVector& v) { return {v.data(), v.data() + v.size()}; }

RowVector from_std(const std::vector<double>& v) {
  RowVector r(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r[static_cast<Index>(i)] = v[i];
  return r;
}

double label(const RowVector& x, const ProxyField& field, const DatasetSpec& spec, std::uint64_t stream) {
  Rng rng(derive_seed(spec.seed ^ 0x6e6f697365ULL, stream));
  const DecisionVector d(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  return objective_value(simulate(d, field, spec.noise_std, rng), spec.objective, spec.economics);
}

}  // namespace

// ---------------------------------------------------------------------------
// NormStats

NormStats NormStats::fit(const Matrix& features, const Vector& targets, const std::vector<Index>& rows,
                         std::vector<std::string>* warnings) {
  std::vector<Index> use = rows;
  if (use.empty()) {
    use.resize(static_cast<std::size_t>(features.rows()));
    std::iota(use.begin(), use.end(), Index{0});
  }
  if (use.empty()) throw DataError("NormStats::fit: no rows");
  const Index d = features.cols();
  const double n = static_cast<double>(use.size());

  NormStats s;
  s.feature_mean = RowVector::Zero(d);
  s.feature_std = RowVector::Zero(d);
  for (Index r : use) s.feature_mean += features.row(r);
  s.feature_mean /= n;
  for (Index r : use) s.feature_std += (features.row(r) - s.feature_mean).array().square().matrix();
  s.feature_std = (s.feature_std / n).array().sqrt().matrix();
  s.feature_scaled.assign(static_cast<std::size_t>(d), true);
  for (Index j = 0; j < d; ++j) {
    if (s.feature_std[j] <= 1e-12 * std::max(1.0, std::abs(s.feature_mean[j]))) {
      s.feature_scaled[static_cast<std::size_t>(j)] = false;
      s.feature_mean[j] = 0.0;
      s.feature_std[j] = 1.0;
      if (warnings != nullptr) {
        warnings->push_back("feature column " + std::to_string(j) + " has zero variance; left unscaled");
      }
    }
  }

  double tm = 0.0;
  for (Index r : use) tm += targets[r];
  tm /= n;
  double tv = 0.0;
  for (Index r : use) tv += (targets[r] - tm) * (targets[r] - tm);
  const double ts = std::sqrt(tv / n);
  s.target_mean = tm;
  s.target_std = ts;
  if (ts <= 1e-12 * std::max(1.0, std::abs(tm))) {
    s.target_mean = 0.0;
    s.target_std = 1.0;
    if (warnings != nullptr) warnings->push_back("target has zero variance; left unscaled");
  }
  return s;
}

Matrix NormStats::normalize(const Matrix& features) const {
  if (features.cols() != feature_dim()) throw ShapeError("NormStats::normalize: feature width mismatch");
  return (features.rowwise() - feature_mean).array().rowwise() / feature_std.array();
}

Matrix NormStats::denormalize(const Matrix& features) const {
  if (features.cols() != feature_dim()) throw ShapeError("NormStats::denormalize: feature width mismatch");
  Matrix out = features.array().rowwise() * feature_std.array();
  out.rowwise() += feature_mean;
  return out;
}

Vector NormStats::normalize_targets(const Vector& targets) const {
  return ((targets.array() - target_mean) / target_std).matrix();
}

Vector NormStats::denormalize_targets(const Vector& targets) const {
  return (targets.array() * target_std + target_mean).matrix();
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = nlohmann::json{{"feature_mean", to_std(s.feature_mean)},
                     {"feature_std", to_std(s.feature_std)},
                     {"feature_scaled", s.feature_scaled},
                     {"target_mean", s.target_mean},
                     {"target_std", s.target_std}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  try {
    s.feature_mean = from_std(j.at("feature_mean").get<std::vector<double>>());
    s.feature_std = from_std(j.at("feature_std").get<std::vector<double>>());
    s.feature_scaled = j.at("feature_scaled").get<std::vector<bool>>();
    s.target_mean = j.at("target_mean").get<double>();
    s.target_std = j.at("target_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("normalization statistics: ") + e.what());
  }
  if (s.feature_std.size() != s.feature_mean.size() ||
      s.feature_scaled.size() != static_cast<std::size_t>(s.feature_mean.size())) {
    throw DataError("normalization statistics: inconsistent lengths");
  }
}

// ---------------------------------------------------------------------------
// Dataset

std::string to_string(SamplerKind k) { return k == SamplerKind::uniform ? "uniform" : "optimizer-trace"; }

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "uniform") return SamplerKind::uniform;
  if (s == "optimizer-trace") return SamplerKind::optimizer_trace;
  throw ConfigError("sampler must be 'uniform' or 'optimizer-trace', got '" + s + "'");
}

Matrix LabeledDataset::features_of(const std::vector<Index>& rows) const {
  Matrix out(static_cast<Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = features.row(rows[i]);
  return out;
}

Vector LabeledDataset::targets_of(const std::vector<Index>& rows) const {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = targets[rows[i]];
  return out;
}

LabeledDataset generate_dataset(const ProxyField& field, const DatasetSpec& spec) {
  if (spec.samples < 1) throw ConfigError("generate_dataset: samples must be >= 1");
  if (!(spec.holdout_fraction >= 0.0 && spec.holdout_fraction < 1.0)) {
    throw ConfigError("generate_dataset: holdout_fraction must be in [0, 1)");
  }
  if (spec.noise_std < 0.0) throw ConfigError("generate_dataset: noise_std must be >= 0");
  LabeledDataset data;
  data.objective = spec.objective;
  data.sampler = spec.sampler;
  data.noise_std = spec.noise_std;
  data.seed = spec.seed;
  data.field_seed = field.seed;
  data.economics = spec.economics;
  data.bounds = field.bounds();
  data.features.resize(spec.samples, kDecisionVars);
  data.targets.resize(spec.samples);

  if (spec.sampler == SamplerKind::uniform) {
    for (Index i = 0; i < spec.samples; ++i) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
      for (Index j = 0; j < kDecisionVars; ++j) {
        data.features(i, j) = rng.uniform(data.bounds.lower[j], data.bounds.upper[j]);
      }
      data.targets[i] = label(data.features.row(i), field, spec, static_cast<std::uint64_t>(i));
    }
  } else {
    DeParams de;
    de.population_size = kTracePopulation;
    Index filled = 0;
    auto record = [&](const Matrix& points) {
      Vector values(points.rows());
      for (Index r = 0; r < points.rows(); ++r) {
        values[r] = label(points.row(r), field, spec, static_cast<std::uint64_t>(filled + r));
        if (filled + r < spec.samples) {
          data.features.row(filled + r) = points.row(r);
          data.targets[filled + r] = values[r];
        }
      }
      filled += points.rows();
      return values;
    };
    for (std::uint64_t search = 0; filled < spec.samples; ++search) {
      Rng rng(derive_seed(spec.seed, 0x7261636500000000ULL + search));
      Population pop;
      pop.members = random_population(de.population_size, data.bounds, rng);
      pop.values = record(pop.members);
      for (int g = 0; g < kTraceGenerations && filled < spec.samples; ++g) {
        pop = de_step(pop, de, data.bounds, Direction::maximize, rng, record);
      }
    }
  }

  split_dataset(data, spec.holdout_fraction, spec.seed);
  return data;
}

void split_dataset(LabeledDataset& data, double holdout_fraction, std::uint64_t seed) {
  const Index n = data.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto holdout = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  data.holdout_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
  data.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
  std::sort(data.holdout_indices.begin(), data.holdout_indices.end());
  std::sort(data.train_indices.begin(), data.train_indices.end());
  data.warnings.clear();
  data.stats = NormStats::fit(data.features, data.targets, data.train_indices, &data.warnings);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) throw DataError("not a number: '" + text + "'");
  return v;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_dataset(const LabeledDataset& data, const std::filesystem::path& csv_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  for (Index j = 0; j < data.features.cols(); ++j) csv << column_name(static_cast<int>(j)) << ',';
  csv << "y\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.features.cols(); ++j) csv << format_double(data.features(i, j)) << ',';
    csv << format_double(data.targets[i]) << '\n';
  }
  if (!csv) throw DataError("write failed for " + csv_path.string());

  std::vector<double> sorted(data.targets.data(), data.targets.data() + data.targets.size());
  std::sort(sorted.begin(), sorted.end());
  nlohmann::json side{
      {"format_version", kDatasetFormatVersion},
      {"rows", data.size()},
      {"columns", data.features.cols()},
      {"objective", to_string(data.objective)},
      {"sampler", to_string(data.sampler)},
      {"noise_std", data.noise_std},
      {"seed", data.seed},
      {"field_seed", data.field_seed},
      {"economics", data.economics},
      {"bounds", {{"lower", to_std(data.bounds.lower)}, {"upper", to_std(data.bounds.upper)}}},
      {"normalization", data.stats},
      {"split", {{"train", data.train_indices}, {"holdout", data.holdout_indices}}},
      {"summary",
       {{"min", sorted.front()}, {"median", sorted[sorted.size() / 2]}, {"max", sorted.back()}}},
      {"warnings", data.warnings},
  };
  std::ofstream js(sidecar_path(csv_path), std::ios::binary);
  if (!js) throw DataError("cannot write " + sidecar_path(csv_path).string());
  js << side.dump(2) << '\n';
}

LabeledDataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw DataError("cannot read dataset " + csv_path.string());
  std::ifstream js(sidecar_path(csv_path), std::ios::binary);
  if (!js) throw DataError("missing dataset sidecar " + sidecar_path(csv_path).string());

  LabeledDataset data;
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
    if (side.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw DataError("dataset sidecar: unsupported format_version");
    }
    data.objective = objective_from_string(side.at("objective").get<std::string>());
    data.sampler = sampler_from_string(side.at("sampler").get<std::string>());
    data.noise_std = side.at("noise_std").get<double>();
    data.seed = side.at("seed").get<std::uint64_t>();
    data.field_seed = side.at("field_seed").get<std::uint64_t>();
    data.economics = side.at("economics").get<EconomicParams>();
    data.bounds.lower = from_std(side.at("bounds").at("lower").get<std::vector<double>>());
    data.bounds.upper = from_std(side.at("bounds").at("upper").get<std::vector<double>>());
    data.stats = side.at("normalization").get<NormStats>();
    data.train_indices = side.at("split").at("train").get<std::vector<Index>>();
    data.holdout_indices = side.at("split").at("holdout").get<std::vector<Index>>();
    data.warnings = side.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset sidecar " + sidecar_path(csv_path).string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("dataset sidecar " + sidecar_path(csv_path).string() + ": " + e.what());
  }

  std::string line;
  if (!std::getline(csv, line)) throw DataError("dataset CSV is empty");
  std::string expected;
  for (int j = 0; j < kDecisionVars; ++j) expected += column_name(j) + ",";
  expected += "y";
  if (line != expected) throw DataError("dataset CSV header does not match x000..x089,y");

  std::vector<double> values;
  Index rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int count = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(parse_double(cell));
      ++count;
    }
    if (count != kDecisionVars + 1) {
      throw DataError("dataset CSV row " + std::to_string(rows + 1) + " has " + std::to_string(count) + " cells");
    }
    ++rows;
  }
  data.features.resize(rows, kDecisionVars);
  data.targets.resize(rows);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < kDecisionVars; ++j) data.features(i, j) = values[static_cast<std::size_t>(i * 91 + j)];
    data.targets[i] = values[static_cast<std::size_t>(i * 91 + 90)];
  }
  if (side.at("rows").get<Index>() != rows) throw DataError("dataset CSV row count disagrees with sidecar");
  for (const auto& idx : {&data.train_indices, &data.holdout_indices}) {
    for (Index r : *idx) {
      if (r < 0 || r >= rows) throw DataError("dataset sidecar: split index out of range");
    }
  }
  return data;
}

}  // namespace bvr
