#include "survfuse/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "survfuse/error.hpp"
#include "survfuse/eval.hpp"

namespace survfuse {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (c.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (c.accumulation_steps < 1)
    throw ConfigError("accumulation_steps must be >= 1");
  if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (c.alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (c.n_bins < 2) throw ConfigError("n_bins must be >= 2");
  if (!(c.eps_ot > 0.0)) throw ConfigError("eps_ot must be > 0");
  if (!(c.ot_tol > 0.0)) throw ConfigError("ot_tol must be > 0");
  if (c.ot_max_iter < 1) throw ConfigError("ot_max_iter must be >= 1");
  if (c.hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (c.heads < 1 || c.hidden_dim % c.heads != 0)
    throw ConfigError("heads must divide hidden_dim");
  if (c.vocab_size < 64) throw ConfigError("vocab_size must be >= 64");
  if (c.token_dim < 1) throw ConfigError("token_dim must be >= 1");
  if (c.race_vocab.empty()) throw ConfigError("race_vocab is empty");
}

ModelConfig make_model_config(const TrainConfig& c, const FeatureDims& dims) {
  ModelConfig m;
  m.dims.c_in = dims.c_in;
  m.dims.genomic_widths = dims.genomic_widths;
  m.dims.hidden_dim = c.hidden_dim;
  m.dims.vocab_size = c.vocab_size;
  m.dims.token_dim = c.token_dim;
  m.heads = c.heads;
  m.n_bins = c.n_bins;
  m.alpha = c.alpha;
  m.race_vocab = c.race_vocab;
  m.ablation = c.ablation;
  m.ot = {c.eps_ot, c.ot_tol, c.ot_max_iter};
  return m;
}

namespace {

Matrix round_float(const Matrix& m) { return m.cast<float>().cast<double>(); }

}  // namespace

void adam_step(ParamStore& params, AdamState& state, const AdamOptions& o) {
  // Shape checks first so a mismatch leaves everything untouched.
  for (const auto& [name, p] : params) {
    for (const auto* moments : {&state.m, &state.v}) {
      auto it = moments->find(name);
      if (it != moments->end() && (it->second.rows() != p.value.rows() ||
                                   it->second.cols() != p.value.cols()))
        throw SchemaError("optimizer moment for " + name + " has shape " +
                          std::to_string(it->second.rows()) + "x" +
                          std::to_string(it->second.cols()));
    }
    if (p.grad.size() != 0 && (p.grad.rows() != p.value.rows() ||
                               p.grad.cols() != p.value.cols()))
      throw SchemaError("gradient for " + name + " has the wrong shape");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  const double shrink = 1.0 - o.learning_rate * o.weight_decay;
  for (auto& [name, p] : params) {
    Matrix& m = state.m.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()))
                    .first->second;
    Matrix& v = state.v.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()))
                    .first->second;
    const Matrix g = p.grad.size() == 0
                         ? Matrix::Zero(p.value.rows(), p.value.cols())
                         : p.grad;
    m = round_float(o.beta1 * m + (1.0 - o.beta1) * g);
    v = round_float(o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g));
    const Matrix update =
        (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
    p.value = round_float((p.value - o.learning_rate * update) * shrink);
  }
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
  return Model(checkpoint.model_config, checkpoint.params);
}

std::vector<double> predict_risks(Model& model, const Cohort& cohort) {
  std::vector<double> risks;
  risks.reserve(cohort.size());
  for (const auto& p : cohort.patients) risks.push_back(model.predict_risk(p));
  return risks;
}

namespace {

double validation_cindex(Model& model, const Cohort& val) {
  if (val.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> risks = predict_risks(model, val);
  std::vector<SurvivalOutcome> outcomes;
  for (std::size_t i = 0; i < val.size(); ++i)
    outcomes.push_back({val.patients[i].survival_time, val.patients[i].censor,
                        risks[i]});
  try {
    return concordance_index(outcomes);
  } catch (const EvalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::string describe(const LossBreakdown& b) {
  std::ostringstream os;
  os << "L_m=" << b.multimodal;
  for (int i = 0; i < kUnimodalHeads; ++i)
    os << " L_u_" << kUnimodalNames[i] << '=' << b.unimodal[i];
  os << " L_cos_pg=" << b.cos_pg << " L_cos_pt=" << b.cos_pt
     << " L_total=" << b.total;
  return os.str();
}

void check_gradients(const ParamStore& params) {
  for (const auto& [name, p] : params)
    if (p.grad.size() != 0 && !p.grad.allFinite())
      throw NumericalError("non-finite gradient in " + name);
}

void add_scaled(LossBreakdown& acc, const LossBreakdown& b, double w) {
  acc.multimodal += w * b.multimodal;
  for (int i = 0; i < kUnimodalHeads; ++i) {
    acc.unimodal[i] += w * b.unimodal[i];
    acc.unimodal_disabled[i] = b.unimodal_disabled[i];
  }
  acc.cos_pg += w * b.cos_pg;
  acc.cos_pt += w * b.cos_pt;
  acc.total += w * b.total;
  acc.alpha = b.alpha;
  acc.cos_pg_disabled = b.cos_pg_disabled;
  acc.cos_pt_disabled = b.cos_pt_disabled;
}

Checkpoint snapshot(const Model& model, const TrainConfig& config,
                    const TimeBinSpec& bins, const AdamState& adam, int epochs,
                    std::optional<double> val) {
  Checkpoint c;
  c.model_config = model.config();
  c.train_config = config;
  c.bins = bins;
  c.params = model.params();
  c.params.zero_grad();
  c.adam = adam;
  c.epochs_completed = epochs;
  c.val_cindex = val;
  return c;
}

}  // namespace

TrainResult train(const Cohort& train_cohort, const Cohort& val_cohort,
                  const TrainConfig& config, const Checkpoint* resume,
                  const TrainHooks& hooks) {
  validate(config);
  if (train_cohort.size() == 0) throw ConfigError("training set is empty");

  TimeBinSpec bins = resume ? resume->bins
                            : compute_time_bins(train_cohort, config.n_bins);
  Cohort train_set = train_cohort;
  assign_bins(train_set, bins);

  const ModelConfig model_config = make_model_config(config, train_cohort.dims);
  Model model = resume ? Model(model_config, resume->params)
                       : Model(model_config, config.seed);
  AdamState adam = resume ? resume->adam : AdamState{};
  const int start_epoch = resume ? resume->epochs_completed : 0;
  const AdamOptions adam_options{config.learning_rate, config.weight_decay};

  TrainResult result;
  std::optional<double> initial_val;
  if (resume) initial_val = resume->val_cindex;
  result.last = snapshot(model, config, bins, adam, start_epoch, initial_val);
  result.best = result.last;
  double best_val = initial_val.value_or(-std::numeric_limits<double>::infinity());
  bool have_best = initial_val.has_value();

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    // Stateless per-epoch shuffle so resumed runs see the same order.
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(config.seed + 0x9e3779b97f4a7c15ULL * (epoch + 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int pending = 0;
    LossBreakdown step_acc{};
    model.params().zero_grad();

    auto flush = [&]() {
      if (pending == 0) return;
      const double inv = 1.0 / pending;
      for (auto& [name, p] : model.params()) p.grad *= inv;
      check_gradients(model.params());
      adam_step(model.params(), adam, adam_options);
      LossBreakdown mean{};
      add_scaled(mean, step_acc, inv);
      result.steps.push_back({adam.step, mean});
      if (hooks.on_step) hooks.on_step(result.steps.back());
      model.params().zero_grad();
      step_acc = LossBreakdown{};
      pending = 0;
    };

    for (std::size_t idx : order) {
      const PatientRecord& patient = train_set.patients[idx];
      ad::Graph g;
      const ForwardResult fwd = model.forward(g, patient);
      const LossResult loss = model.loss(fwd, *patient.bin, patient.censor);
      if (!std::isfinite(loss.breakdown.total))
        throw NumericalError("non-finite loss for patient " + patient.id +
                             ": " + describe(loss.breakdown));
      g.backward(loss.total);
      epoch_loss += loss.breakdown.total;
      add_scaled(step_acc, loss.breakdown, 1.0);
      if (++pending == config.accumulation_steps) flush();
    }
    flush();

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = epoch_loss / static_cast<double>(n);
    m.val_cindex = validation_cindex(model, val_cohort);
    result.metrics.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);

    std::optional<double> val;
    if (std::isfinite(m.val_cindex)) val = m.val_cindex;
    result.last = snapshot(model, config, bins, adam, epoch + 1, val);
    if (val && (!have_best || *val > best_val)) {
      best_val = *val;
      have_best = true;
      result.best = result.last;
    }
  }
  if (!have_best) result.best = result.last;
  return result;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace {

void record_probe(FiniteDiffReport& r, FiniteDiffProbe probe, double tol) {
  ++r.checked;
  r.mean_rel_error += probe.rel_error;
  if (r.checked == 1 || probe.rel_error > r.max_rel_error) {
    r.max_rel_error = probe.rel_error;
    r.worst = probe;
  }
  if (probe.rel_error > tol) r.failures.push_back(std::move(probe));
}

void finish(FiniteDiffReport& r, double tol,
            std::chrono::steady_clock::time_point start) {
  if (r.checked > 0) r.mean_rel_error /= r.checked;
  r.passed = r.checked > 0 && r.max_rel_error <= tol;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            start)
                  .count();
}

}  // namespace

FiniteDiffReport finite_diff_check(const std::function<double(const Vector&)>& f,
                                   const Vector& analytic_grad, const Vector& x,
                                   const FiniteDiffOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  if (analytic_grad.size() != x.size())
    throw SchemaError("gradient length does not match the point");
  FiniteDiffReport r;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + o.step;
    const double up = f(probe);
    probe(i) = x(i) - o.step;
    const double down = f(probe);
    probe(i) = x(i);
    FiniteDiffProbe p;
    p.tensor = "x";
    p.row = i;
    p.analytic = o.corrupt * analytic_grad(i);
    p.numeric = (up - down) / (2.0 * o.step);
    p.rel_error = relative_error(p.analytic, p.numeric);
    record_probe(r, std::move(p), o.tol);
  }
  finish(r, o.tol, start);
  return r;
}

FiniteDiffReport finite_diff_check(Model& model, const Cohort& instance,
                                   const FiniteDiffOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& p : instance.patients)
    if (!p.bin) throw SchemaError("patient " + p.id + " has no time bin");

  // Analytic pass; keep each patient's plans for the perturbed passes.
  std::vector<FrozenPlans> plans;
  model.params().zero_grad();
  for (const auto& p : instance.patients) {
    ad::Graph g;
    ForwardResult fwd = model.forward(g, p);
    g.backward(model.loss(fwd, *p.bin, p.censor).total);
    plans.push_back(fwd.plans);
  }
  std::map<std::string, Matrix, std::less<>> analytic;
  for (const auto& [name, p] : model.params())
    analytic[name] = p.grad.size() ? p.grad
                                   : Matrix::Zero(p.value.rows(), p.value.cols());

  auto objective = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < instance.size(); ++i) {
      const auto& p = instance.patients[i];
      ad::Graph g;
      ForwardResult fwd = model.forward(g, p, &plans[i]);
      total += model.loss(fwd, *p.bin, p.censor).breakdown.total;
    }
    return total;
  };

  FiniteDiffReport r;
  Rng rng(o.seed);
  for (auto& [name, param] : model.params()) {
    const Eigen::Index size = param.value.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(size));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (size > o.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(o.max_coords_per_tensor));
      std::sort(coords.begin(), coords.end());
    }
    for (Eigen::Index flat : coords) {
      const Eigen::Index row = flat / param.value.cols();
      const Eigen::Index col = flat % param.value.cols();
      double& w = param.value(row, col);
      const double saved = w;
      w = saved + o.step;
      const double up = objective();
      w = saved - o.step;
      const double down = objective();
      w = saved;
      FiniteDiffProbe p;
      p.tensor = name;
      p.row = row;
      p.col = col;
      p.analytic = o.corrupt * analytic[name](row, col);
      p.numeric = (up - down) / (2.0 * o.step);
      p.rel_error = relative_error(p.analytic, p.numeric);
      record_probe(r, std::move(p), o.tol);
    }
  }
  model.params().zero_grad();
  finish(r, o.tol, start);
  return r;
}

ToyInstance make_toy_instance(std::uint64_t seed) {
  GeneratorConfig gen;
  gen.n_patients = 3;
  gen.patches_min = 3;
  gen.patches_max = 8;
  gen.c_in = 12;
  gen.genomic_widths = {5, 6, 7, 4, 8, 3};
  gen.censor_rate = 0.0;
  gen.genomic_signal = 1.0;
  gen.patch_signal = 1.0;
  SyntheticCohort synth = generate_synthetic_cohort(gen, seed);

  ToyInstance toy;
  toy.cohort = std::move(synth.cohort);
  // One patient per bin, one of them censored.
  const int bins[] = {0, 1, 2};
  const int censor[] = {0, 1, 0};
  for (std::size_t i = 0; i < toy.cohort.size(); ++i) {
    toy.cohort.patients[i].bin = bins[i];
    toy.cohort.patients[i].censor = censor[i];
  }
  toy.cohort.patients[1].clinical.radiation = true;
  toy.cohort.patients[2].clinical.pharmaceutical = true;

  TrainConfig tc;
  tc.hidden_dim = 16;
  tc.heads = 4;
  tc.n_bins = 3;
  tc.vocab_size = 64;
  tc.token_dim = 8;
  toy.config = make_model_config(tc, toy.cohort.dims);
  return toy;
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f±%.3f", mean, stddev);
  return buf;
}

std::string CvResult::formatted() const { return format_mean_std(mean, stddev); }

CvResult run_cross_validation(const Cohort& cohort, int k, const TrainConfig& config,
                              const std::function<void(const CvFold&)>& on_fold) {
  if (k < 2) throw ConfigError("cross-validation needs k >= 2");
  const std::vector<Fold> folds = split_folds(cohort.size(), k, config.seed);
  CvResult res;
  for (int f = 0; f < k; ++f) {
    const Cohort tr = subset(cohort, folds[f].train);
    const Cohort va = subset(cohort, folds[f].val);
    const TrainResult run = train(tr, va, config);
    CvFold fold;
    fold.fold = f;
    fold.n_train = tr.size();
    fold.n_val = va.size();
    fold.best_epoch = run.best.epochs_completed;
    Model model = model_from_checkpoint(run.best);
    fold.val_cindex = validation_cindex(model, va);
    res.folds.push_back(fold);
    if (on_fold) on_fold(fold);
  }
  double sum = 0.0;
  int count = 0;
  for (const auto& f : res.folds)
    if (std::isfinite(f.val_cindex)) {
      sum += f.val_cindex;
      ++count;
    }
  if (count == 0) throw EvalError("no fold produced a C-index");
  res.mean = sum / count;
  double ss = 0.0;
  for (const auto& f : res.folds)
    if (std::isfinite(f.val_cindex))
      ss += (f.val_cindex - res.mean) * (f.val_cindex - res.mean);
  res.stddev = std::sqrt(ss / count);
  return res;
}

}  // namespace survfuse
