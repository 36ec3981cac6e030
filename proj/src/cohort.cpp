#include "survfuse/cohort.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "survfuse/error.hpp"

namespace survfuse {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string record_context(std::size_t line, const std::string& id) {
  std::ostringstream os;
  os << "manifest line " << line;
  if (!id.empty()) os << " (patient " << id << ")";
  return os.str();
}

template <typename T>
T field(const json& j, const char* name, const std::string& ctx) {
  auto it = j.find(name);
  if (it == j.end()) throw SchemaError(ctx + ": missing field '" + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(ctx + ": field '" + name + "' has the wrong type");
  }
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) |
        ((v & 0x00FF0000u) >> 8) | ((v & 0xFF000000u) >> 24);
  }
  return v;
}

PatchFeatureMatrix read_blob(const fs::path& path, int rows, int cols,
                             const std::string& ctx) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError(ctx + ": cannot read patch blob " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::size_t expected =
      static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 4;
  if (bytes.size() != expected)
    throw SchemaError(ctx + ": patch_blob holds " +
                      std::to_string(bytes.size()) + " bytes, patch_shape " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      " needs " + std::to_string(expected));
  PatchFeatureMatrix m(rows, cols);
  float* out = m.data();
  for (std::size_t i = 0; i < expected / 4; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, bytes.data() + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_little_endian(raw));
  }
  return m;
}

void write_blob(const fs::path& path, const PatchFeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write patch blob " + path.string());
  const float* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint32_t raw = to_little_endian(std::bit_cast<std::uint32_t>(data[i]));
    out.write(reinterpret_cast<const char*>(&raw), 4);
  }
  if (!out) throw IOError("short write to " + path.string());
}

void check_record(const PatientRecord& p, const std::string& ctx) {
  if (!(p.survival_time > 0.0) || !std::isfinite(p.survival_time))
    throw SchemaError(ctx + ": time_months must be finite and > 0");
  if (p.censor != 0 && p.censor != 1)
    throw SchemaError(ctx + ": censor must be 0 or 1, got " +
                      std::to_string(p.censor));
  if (p.clinical.age < 0 || p.clinical.age > 130)
    throw SchemaError(ctx + ": age must lie in [0, 130]");
  if (p.wsi_bag.rows() < 1)
    throw SchemaError(ctx + ": patch bag needs at least one patch");
  if (!p.wsi_bag.allFinite())
    throw SchemaError(ctx + ": patch features must be finite");
  for (const auto& g : p.genomic_bag)
    for (double v : g)
      if (!std::isfinite(v))
        throw SchemaError(ctx + ": genomic values must be finite");
}

}  // namespace

bool PatientRecord::operator==(const PatientRecord& o) const {
  return id == o.id && survival_time == o.survival_time &&
         censor == o.censor && bin == o.bin &&
         wsi_bag.rows() == o.wsi_bag.rows() &&
         wsi_bag.cols() == o.wsi_bag.cols() &&
         (wsi_bag.array() == o.wsi_bag.array()).all() &&
         genomic_bag == o.genomic_bag && clinical == o.clinical;
}

void validate_cohort(const Cohort& cohort) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    const PatientRecord& p = cohort.patients[i];
    const std::string ctx = record_context(i + 1, p.id);
    check_record(p, ctx);
    if (!ids.insert(p.id).second)
      throw SchemaError(ctx + ": duplicate id " + p.id);
    if (p.wsi_bag.cols() != cohort.dims.c_in)
      throw SchemaError(ctx + ": patch_shape[1] " +
                        std::to_string(p.wsi_bag.cols()) + " != C_in " +
                        std::to_string(cohort.dims.c_in));
    for (int k = 0; k < kGenomicGroups; ++k)
      if (static_cast<int>(p.genomic_bag[k].size()) !=
          cohort.dims.genomic_widths[k])
        throw SchemaError(ctx + ": genomics[" + std::to_string(k) +
                          "] width " +
                          std::to_string(p.genomic_bag[k].size()) + " != " +
                          std::to_string(cohort.dims.genomic_widths[k]));
  }
}

Cohort load_cohort(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IOError("cannot open manifest " + manifest_path.string());
  const fs::path base = manifest_path.parent_path();

  Cohort cohort;
  bool have_dims = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(record_context(line_no, "") + ": " + e.what());
    }
    PatientRecord p;
    const std::string ctx0 = record_context(line_no, "");
    p.id = field<std::string>(j, "id", ctx0);
    const std::string ctx = record_context(line_no, p.id);
    p.survival_time = field<double>(j, "time_months", ctx);
    p.censor = field<int>(j, "censor", ctx);
    const auto sex = field<std::string>(j, "sex", ctx);
    if (sex == "male")
      p.clinical.sex = Sex::kMale;
    else if (sex == "female")
      p.clinical.sex = Sex::kFemale;
    else
      throw SchemaError(ctx + ": sex must be 'male' or 'female'");
    p.clinical.age = field<int>(j, "age", ctx);
    p.clinical.race = field<std::string>(j, "race", ctx);
    p.clinical.radiation = field<bool>(j, "radiation", ctx);
    p.clinical.pharmaceutical = field<bool>(j, "pharmaceutical", ctx);

    const auto genomics =
        field<std::vector<std::vector<double>>>(j, "genomics", ctx);
    if (genomics.size() != kGenomicGroups)
      throw SchemaError("genomic groups: " + std::to_string(genomics.size()) +
                        " != " + std::to_string(kGenomicGroups) + " (" + ctx +
                        ")");
    for (int k = 0; k < kGenomicGroups; ++k) p.genomic_bag[k] = genomics[k];

    const auto shape = field<std::vector<int>>(j, "patch_shape", ctx);
    if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1)
      throw SchemaError(ctx + ": patch_shape must be [N_p >= 1, C_in >= 1]");
    const auto blob = field<std::string>(j, "patch_blob", ctx);
    const fs::path blob_path = base / blob;
    if (!fs::exists(blob_path))
      throw IOError(ctx + ": missing patch blob " + blob_path.string());
    p.wsi_bag = read_blob(blob_path, shape[0], shape[1], ctx);

    FeatureDims dims;
    dims.c_in = shape[1];
    for (int k = 0; k < kGenomicGroups; ++k)
      dims.genomic_widths[k] = static_cast<int>(p.genomic_bag[k].size());
    if (!have_dims) {
      cohort.dims = dims;
      have_dims = true;
    }
    cohort.patients.push_back(std::move(p));
  }
  validate_cohort(cohort);
  return cohort;
}

fs::path save_cohort(const Cohort& cohort, const fs::path& out_dir) {
  validate_cohort(cohort);
  std::error_code ec;
  fs::create_directories(out_dir / "blobs", ec);
  if (ec) throw IOError("cannot create " + (out_dir / "blobs").string());
  const fs::path manifest = out_dir / "manifest.jsonl";
  std::ofstream out(manifest);
  if (!out) throw IOError("cannot write " + manifest.string());
  for (const PatientRecord& p : cohort.patients) {
    const std::string blob = "blobs/" + p.id + ".bin";
    write_blob(out_dir / blob, p.wsi_bag);
    json j;
    j["id"] = p.id;
    j["time_months"] = p.survival_time;
    j["censor"] = p.censor;
    j["sex"] = p.clinical.sex == Sex::kMale ? "male" : "female";
    j["age"] = p.clinical.age;
    j["race"] = p.clinical.race;
    j["radiation"] = p.clinical.radiation;
    j["pharmaceutical"] = p.clinical.pharmaceutical;
    j["genomics"] = json::array();
    for (const auto& g : p.genomic_bag) j["genomics"].push_back(g);
    j["patch_blob"] = blob;
    j["patch_shape"] = {p.wsi_bag.rows(), p.wsi_bag.cols()};
    out << j.dump() << '\n';
  }
  if (!out) throw IOError("short write to " + manifest.string());
  return manifest;
}

TimeBinSpec compute_time_bins(std::vector<double> times, int n_bins) {
  if (n_bins < 2) throw ConfigError("n_bins must be >= 2");
  if (static_cast<int>(times.size()) < n_bins)
    throw DataError("need at least " + std::to_string(n_bins) +
                    " uncensored patients to form bins, have " +
                    std::to_string(times.size()));
  std::sort(times.begin(), times.end());
  const double last = static_cast<double>(times.size() - 1);
  TimeBinSpec spec;
  for (int k = 1; k < n_bins; ++k) {
    const double pos = last * k / n_bins;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, times.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    spec.edges.push_back(times[lo] + frac * (times[hi] - times[lo]));
  }
  for (std::size_t k = 1; k < spec.edges.size(); ++k)
    if (!(spec.edges[k] > spec.edges[k - 1]))
      throw DataError("duplicate bin edges at " +
                      std::to_string(spec.edges[k]) +
                      "; survival times are too degenerate, use fewer bins");
  // An edge equal to the smallest time leaves bin 0 empty.
  if (!(spec.edges.front() > times.front()))
    throw DataError("duplicate bin edges at " +
                    std::to_string(spec.edges.front()) +
                    "; survival times are too degenerate, use fewer bins");
  return spec;
}

TimeBinSpec compute_time_bins(const Cohort& train, int n_bins) {
  std::vector<double> times;
  for (const auto& p : train.patients)
    if (p.censor == 0) times.push_back(p.survival_time);
  return compute_time_bins(std::move(times), n_bins);
}

int assign_bin(double time, const TimeBinSpec& spec) {
  const auto it = std::upper_bound(spec.edges.begin(), spec.edges.end(), time);
  return static_cast<int>(it - spec.edges.begin());
}

void assign_bins(Cohort& cohort, const TimeBinSpec& spec) {
  for (auto& p : cohort.patients) p.bin = assign_bin(p.survival_time, spec);
}

std::vector<Fold> split_folds(std::size_t cohort_size, int k,
                              std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be >= 2");
  if (static_cast<std::size_t>(k) > cohort_size)
    throw ConfigError("k = " + std::to_string(k) + " exceeds cohort size " +
                      std::to_string(cohort_size));
  std::vector<std::size_t> order(cohort_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t base = cohort_size / k, extra = cohort_size % k;
  std::vector<Fold> folds(k);
  std::size_t at = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    folds[f].val.assign(order.begin() + at, order.begin() + at + len);
    std::sort(folds[f].val.begin(), folds[f].val.end());
    at += len;
  }
  for (int f = 0; f < k; ++f) {
    for (int o = 0; o < k; ++o)
      if (o != f)
        folds[f].train.insert(folds[f].train.end(), folds[o].val.begin(),
                              folds[o].val.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

Cohort subset(const Cohort& cohort, const std::vector<std::size_t>& indices) {
  Cohort out;
  out.dims = cohort.dims;
  out.patients.reserve(indices.size());
  for (std::size_t i : indices) out.patients.push_back(cohort.patients.at(i));
  return out;
}

SyntheticCohort generate_synthetic_cohort(const GeneratorConfig& config,
                                          std::uint64_t seed) {
  if (config.n_patients < 1) throw ConfigError("n_patients must be >= 1");
  if (config.patches_min < 1 || config.patches_max < config.patches_min)
    throw ConfigError("patch count range must satisfy 1 <= min <= max");
  if (config.c_in < 1) throw ConfigError("c_in must be >= 1");
  for (int w : config.genomic_widths)
    if (w < 1) throw ConfigError("genomic widths must be >= 1");
  if (!(config.censor_rate >= 0.0 && config.censor_rate < 1.0))
    throw ConfigError("censor_rate must lie in [0, 1)");
  if (!(config.base_rate > 0.0)) throw ConfigError("base_rate must be > 0");
  if (config.race_vocab.empty()) throw ConfigError("race_vocab is empty");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Fixed directions along which the latent factors are planted.
  std::array<std::vector<double>, kGenomicGroups> loadings;
  for (int k = 0; k < kGenomicGroups; ++k) {
    loadings[k].resize(config.genomic_widths[k]);
    for (double& v : loadings[k]) v = normal(rng);
  }
  std::vector<double> pattern(config.c_in);
  for (double& v : pattern) v = normal(rng);

  std::uniform_int_distribution<int> n_patch(config.patches_min,
                                             config.patches_max);
  std::uniform_int_distribution<int> age_dist(30, 89);
  std::uniform_int_distribution<int> race_dist(
      0, static_cast<int>(config.race_vocab.size()) - 1);
  std::bernoulli_distribution coin(0.5);

  SyntheticCohort out;
  out.cohort.dims.c_in = config.c_in;
  out.cohort.dims.genomic_widths = config.genomic_widths;
  const int width = std::max(3, static_cast<int>(std::to_string(config.n_patients).size()));

  for (int i = 0; i < config.n_patients; ++i) {
    PatientRecord p;
    std::ostringstream id;
    id << "P" << std::setw(width) << std::setfill('0') << i;
    p.id = id.str();

    p.clinical.sex = coin(rng) ? Sex::kFemale : Sex::kMale;
    p.clinical.age = age_dist(rng);
    p.clinical.race = config.race_vocab[race_dist(rng)];
    p.clinical.radiation = coin(rng);
    p.clinical.pharmaceutical = coin(rng);

    const double z_genomic = normal(rng);
    const double z_patch = normal(rng);

    for (int k = 0; k < kGenomicGroups; ++k) {
      auto& g = p.genomic_bag[k];
      g.resize(config.genomic_widths[k]);
      for (int j = 0; j < config.genomic_widths[k]; ++j)
        g[j] = config.genomic_signal * z_genomic * loadings[k][j] + normal(rng);
    }

    const int np = n_patch(rng);
    p.wsi_bag.resize(np, config.c_in);
    for (int r = 0; r < np; ++r)
      for (int c = 0; c < config.c_in; ++c)
        p.wsi_bag(r, c) = static_cast<float>(
            config.patch_signal * z_patch * pattern[c] + normal(rng));

    const int treatments =
        (p.clinical.radiation ? 1 : 0) + (p.clinical.pharmaceutical ? 1 : 0);
    const double risk = config.genomic_weight * z_genomic +
                        config.patch_weight * z_patch -
                        config.treatment_weight * (treatments - 1) +
                        config.age_weight * (p.clinical.age - 60) / 15.0;

    const double rate = config.base_rate * std::exp(risk);
    const double event_time = -std::log1p(-unit(rng)) / rate;
    const double cut = unit(rng);
    const bool censored = unit(rng) < config.censor_rate;
    double observed = censored ? event_time * cut : event_time;
    p.survival_time = std::max(observed, 1e-3);
    p.censor = censored ? 1 : 0;

    out.cohort.patients.push_back(std::move(p));
    out.true_risk.push_back(risk);
  }
  return out;
}

}  // namespace survfuse
