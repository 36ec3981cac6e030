#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "survfuse/cohort.hpp"
#include "survfuse/model.hpp"
#include "survfuse/objective.hpp"
#include "survfuse/params.hpp"

namespace survfuse {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  int accumulation_steps = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  int n_bins = 4;
  double eps_ot = 0.1;
  double ot_tol = 1e-6;
  int ot_max_iter = 1000;
  int hidden_dim = 256;
  int heads = 4;
  int vocab_size = 256;
  int token_dim = 64;
  std::vector<std::string> race_vocab{"white", "black", "asian", "other"};
  Ablation ablation;

  bool operator==(const TrainConfig&) const = default;
};

// Throws ConfigError on nonpositive rates, sizes or step counts.
void validate(const TrainConfig& config);

ModelConfig make_model_config(const TrainConfig& config, const FeatureDims& dims);

struct AdamOptions {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Matrix, std::less<>> m;
  std::map<std::string, Matrix, std::less<>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update from each parameter's `grad`, followed by
// the decoupled shrink params *= (1 - lr * weight_decay). Moments are
// created on first use. Throws SchemaError if a stored moment's shape does
// not match its parameter.
void adam_step(ParamStore& params, AdamState& state, const AdamOptions& options);

// Parameters, moments and metadata of one training state.
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  TimeBinSpec bins;
  ParamStore params;
  AdamState adam;
  int epochs_completed = 0;
  std::optional<double> val_cindex;
};

// Directory with `manifest.json` and `params.bin`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
// With `expect`, throws SchemaError unless width, bins, heads and input
// dimensions agree. A blob whose size disagrees with the manifest raises
// IOError.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const ModelConfig* expect = nullptr);

// Model view of a checkpoint (parameters are copied).
Model model_from_checkpoint(const Checkpoint& checkpoint);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_cindex = 0.0;  // NaN without comparable validation pairs
};

// Loss components averaged over the patients of one optimizer step.
struct StepLosses {
  std::int64_t step = 0;
  LossBreakdown mean;
};

struct TrainResult {
  Checkpoint best;  // highest validation C-index (last state without one)
  Checkpoint last;
  std::vector<EpochMetrics> metrics;
  std::vector<StepLosses> steps;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(const StepLosses&)> on_step;
};

// Batch size 1; gradients are averaged over `accumulation_steps` patients
// (or over the remainder at the end of an epoch) before each Adam step.
// Time bins come from `train` unless resuming, in which case the stored
// bins and state are reused and `config.epochs` counts total epochs.
TrainResult train(const Cohort& train, const Cohort& val, const TrainConfig& config,
                  const Checkpoint* resume = nullptr, const TrainHooks& hooks = {});

// Outcomes of `cohort` under `model`, one per patient.
std::vector<double> predict_risks(Model& model, const Cohort& cohort);

struct FiniteDiffOptions {
  double step = 1e-4;
  double tol = 1e-4;
  int max_coords_per_tensor = 40;
  std::uint64_t seed = 0;
  // Multiplies the analytic gradient; 2.0 is the mutation self-test.
  double corrupt = 1.0;
};

struct FiniteDiffProbe {
  std::string tensor;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FiniteDiffReport {
  int checked = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  FiniteDiffProbe worst;
  std::vector<FiniteDiffProbe> failures;
  bool passed = false;
  double seconds = 0.0;
};

// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

// Central differences of a scalar function against a supplied gradient.
FiniteDiffReport finite_diff_check(const std::function<double(const Vector&)>& f,
                                   const Vector& analytic_grad, const Vector& x,
                                   const FiniteDiffOptions& options = {});

// Sum of per-patient total losses over `instance` (bins assigned), with OT
// plans frozen at the unperturbed solution.
FiniteDiffReport finite_diff_check(Model& model, const Cohort& instance,
                                   const FiniteDiffOptions& options = {});

struct ToyInstance {
  ModelConfig config;
  Cohort cohort;
};

// Three patients, d = 16, N_b = 3, at most 8 patches, narrow inputs.
ToyInstance make_toy_instance(std::uint64_t seed);

struct CvFold {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double val_cindex = 0.0;
  int best_epoch = 0;
};

struct CvResult {
  std::vector<CvFold> folds;
  double mean = 0.0;
  double stddev = 0.0;  // population

  std::string formatted() const;  // "0.709±0.044"
};

// k-fold CV with fold-local bins; each fold reports the validation C-index
// of its retained checkpoint.
CvResult run_cross_validation(const Cohort& cohort, int k, const TrainConfig& config,
                              const std::function<void(const CvFold&)>& on_fold = {});

std::string format_mean_std(double mean, double stddev);

}  // namespace survfuse
