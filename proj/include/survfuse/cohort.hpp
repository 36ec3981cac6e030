#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace survfuse {

inline constexpr int kGenomicGroups = 6;

// Patch features, one row per patch. Stored at 32-bit precision, which is
// also the on-disk blob precision.
using PatchFeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Sex { kMale, kFemale };

struct ClinicalInfo {
  Sex sex = Sex::kMale;
  int age = 0;
  std::string race;
  bool radiation = false;
  bool pharmaceutical = false;

  bool operator==(const ClinicalInfo&) const = default;
};

struct PatientRecord {
  std::string id;
  double survival_time = 0.0;  // months
  int censor = 0;              // 1 = censored
  std::optional<int> bin;      // assigned from TimeBinSpec, never read from disk
  PatchFeatureMatrix wsi_bag;
  std::array<std::vector<double>, kGenomicGroups> genomic_bag;
  ClinicalInfo clinical;

  bool operator==(const PatientRecord& other) const;
};

struct FeatureDims {
  int c_in = 0;
  std::array<int, kGenomicGroups> genomic_widths{};

  bool operator==(const FeatureDims&) const = default;
};

struct Cohort {
  std::vector<PatientRecord> patients;
  FeatureDims dims;

  std::size_t size() const { return patients.size(); }
  bool operator==(const Cohort&) const = default;
};

// Right edges of bins 0..N_b-2; the last bin is unbounded.
struct TimeBinSpec {
  std::vector<double> edges;

  int n_bins() const { return static_cast<int>(edges.size()) + 1; }
};

// Reads a JSON-lines manifest; patch blobs are resolved relative to the
// manifest's directory.
Cohort load_cohort(const std::filesystem::path& manifest_path);

// Writes `manifest.jsonl` plus one blob per patient under `blobs/`.
// Returns the manifest path.
std::filesystem::path save_cohort(const Cohort& cohort,
                                  const std::filesystem::path& out_dir);

// Checks the shared-dims and per-record invariants. Throws SchemaError.
void validate_cohort(const Cohort& cohort);

TimeBinSpec compute_time_bins(const Cohort& train, int n_bins);
TimeBinSpec compute_time_bins(std::vector<double> uncensored_times,
                              int n_bins);
int assign_bin(double time, const TimeBinSpec& spec);
void assign_bins(Cohort& cohort, const TimeBinSpec& spec);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
std::vector<Fold> split_folds(std::size_t cohort_size, int k,
                              std::uint64_t seed);

Cohort subset(const Cohort& cohort, const std::vector<std::size_t>& indices);

struct GeneratorConfig {
  int n_patients = 200;
  int patches_min = 8;
  int patches_max = 32;
  int c_in = 1024;
  std::array<int, kGenomicGroups> genomic_widths{94, 334, 521, 468, 1496, 479};
  // Log-hazard contributions per unit latent (genomic, patch) and per
  // applied treatment (protective, so it lowers the risk).
  double genomic_weight = 1.5;
  double patch_weight = 0.5;
  double treatment_weight = 1.5;
  double age_weight = 0.0;
  // Per-coordinate amplitude of the planted latent in the raw features.
  double genomic_signal = 2.0;
  double patch_signal = 1.0;
  double censor_rate = 0.3;
  double base_rate = 0.03;  // events per month at zero risk
  std::vector<std::string> race_vocab{"white", "black", "asian", "other"};
};

struct SyntheticCohort {
  Cohort cohort;
  std::vector<double> true_risk;
};

SyntheticCohort generate_synthetic_cohort(const GeneratorConfig& config,
                                          std::uint64_t seed);

}  // namespace survfuse
