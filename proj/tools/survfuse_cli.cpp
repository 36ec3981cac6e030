// survfuse command-line driver: simulate, bins, train, eval, whatif, gradcheck.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "survfuse/cohort.hpp"
#include "survfuse/config.hpp"
#include "survfuse/error.hpp"
#include "survfuse/eval.hpp"
#include "survfuse/model.hpp"
#include "survfuse/runtime.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace survfuse;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kInput = 2, kEval = 3, kVerify = 4 };

// Flags for the registry keys of the given groups, bound to strings so that
// the config file can be applied before explicit flags.
class FlagSet {
 public:
  FlagSet(CLI::App* cmd, std::initializer_list<const char*> groups) : cmd_(cmd) {
    cmd->add_option("--config", config_file_, "flat JSON config file");
    for (const auto& key : config_keys()) {
      bool wanted = false;
      for (const char* g : groups) wanted = wanted || key.group == g;
      if (!wanted) continue;
      std::string names = "--" + kebab_case(key.name);
      for (const auto& a : key.aliases) names += ",--" + kebab_case(a);
      RunConfig defaults;
      auto* opt = cmd->add_option(names, values_[key.name], key.help);
      opt->default_str(key.get(defaults));
      options_[key.name] = opt;
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file_.empty()) apply_config_file(cfg, config_file_);
    for (const auto& [name, opt] : options_)
      if (opt->count() > 0) apply_setting(cfg, name, values_.at(name));
    return cfg;
  }

 private:
  CLI::App* cmd_;
  std::string config_file_;
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path.string());
  out << text;
}

fs::path make_out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create output directory " + dir.string());
  return dir;
}

Cohort require_cohort(const RunConfig& cfg) {
  if (cfg.cohort.empty()) throw ConfigError("--cohort is required");
  return load_cohort(cfg.cohort);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int cmd_simulate(const RunConfig& cfg) {
  const fs::path dir = make_out_dir(cfg);
  const SyntheticCohort synth = generate_synthetic_cohort(cfg.generator, cfg.train.seed);
  const fs::path manifest = save_cohort(synth.cohort, dir);
  std::ostringstream truth;
  truth << "id,true_risk\n";
  for (std::size_t i = 0; i < synth.cohort.size(); ++i)
    truth << synth.cohort.patients[i].id << ',' << fmt(synth.true_risk[i]) << '\n';
  write_text(dir / "truth.csv", truth.str());
  json gen = to_json(cfg.generator);
  gen["seed"] = cfg.train.seed;
  write_text(dir / "generator.json", gen.dump(2) + "\n");
  std::cout << "wrote " << synth.cohort.size() << " patients to " << manifest.string()
            << '\n';
  return kOk;
}

int cmd_bins(const RunConfig& cfg) {
  Cohort cohort = require_cohort(cfg);
  const TimeBinSpec spec = compute_time_bins(cohort, cfg.train.n_bins);
  assign_bins(cohort, spec);
  std::vector<int> total(spec.n_bins(), 0), events(spec.n_bins(), 0);
  for (const auto& p : cohort.patients) {
    ++total[*p.bin];
    if (p.censor == 0) ++events[*p.bin];
  }
  std::cout << "edges:";
  for (double e : spec.edges) std::cout << ' ' << fmt(e);
  std::cout << '\n';
  for (int b = 0; b < spec.n_bins(); ++b)
    std::cout << "bin " << b << ": " << total[b] << " patients, " << events[b]
              << " events\n";
  if (!cfg.out_dir.empty() && cfg.out_dir != ".") {
    const fs::path dir = make_out_dir(cfg);
    write_text(dir / "bins.json",
               json{{"edges", spec.edges}, {"patients", total}, {"events", events}}
                       .dump(2) +
                   "\n");
  }
  return kOk;
}

std::string losses_csv(const std::vector<StepLosses>& steps) {
  std::ostringstream os;
  os << "step,L_m,L_u_g,L_u_pg,L_u_p,L_u_pt,L_u_t,L_cos_pg,L_cos_pt,L_total\n";
  for (const auto& s : steps) {
    os << s.step << ',' << fmt(s.mean.multimodal);
    for (double u : s.mean.unimodal) os << ',' << fmt(u);
    os << ',' << fmt(s.mean.cos_pg) << ',' << fmt(s.mean.cos_pt) << ','
       << fmt(s.mean.total) << '\n';
  }
  return os.str();
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_loss,val_cindex\n";
  for (const auto& m : metrics)
    os << m.epoch << ',' << fmt(m.train_loss) << ','
       << (std::isfinite(m.val_cindex) ? fmt(m.val_cindex) : "nan") << '\n';
  return os.str();
}

int cmd_train(const RunConfig& cfg) {
  const Cohort cohort = require_cohort(cfg);
  const fs::path dir = make_out_dir(cfg);
  write_text(dir / "train_config.json", to_json(cfg.train).dump(2) + "\n");

  if (cfg.cv) {
    std::ostringstream rows;
    rows << "fold,n_train,n_val,val_cindex,best_epoch\n";
    const CvResult cv = run_cross_validation(
        cohort, cfg.folds, cfg.train, [&](const CvFold& f) {
          std::cerr << "fold " << f.fold << ": val C-index " << fmt(f.val_cindex)
                    << " (epoch " << f.best_epoch << ")\n";
          rows << f.fold << ',' << f.n_train << ',' << f.n_val << ','
               << fmt(f.val_cindex) << ',' << f.best_epoch << '\n';
        });
    write_text(dir / "cv.csv", rows.str());
    write_text(dir / "cv_summary.json",
               json{{"mean", cv.mean}, {"std", cv.stddev}, {"formatted", cv.formatted()},
                    {"folds", cfg.folds}}
                       .dump(2) +
                   "\n");
    std::cout << "C-index " << cv.formatted() << '\n';
    return kOk;
  }

  Cohort train_set = cohort, val_set;
  val_set.dims = cohort.dims;
  if (cfg.fold >= 0) {
    const auto folds = split_folds(cohort.size(), cfg.folds, cfg.train.seed);
    if (cfg.fold >= cfg.folds)
      throw ConfigError("--fold must be below --folds");
    train_set = subset(cohort, folds[cfg.fold].train);
    val_set = subset(cohort, folds[cfg.fold].val);
  }
  std::optional<Checkpoint> resume;
  if (!cfg.resume.empty()) {
    const ModelConfig want = make_model_config(cfg.train, cohort.dims);
    resume = load_checkpoint(cfg.resume, &want);
  }
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << ": train loss " << fmt(m.train_loss)
              << ", val C-index "
              << (std::isfinite(m.val_cindex) ? fmt(m.val_cindex) : "n/a") << '\n';
  };
  const TrainResult res =
      train(train_set, val_set, cfg.train, resume ? &*resume : nullptr, hooks);
  save_checkpoint(res.best, dir / "checkpoint");
  save_checkpoint(res.last, dir / "checkpoint_last");
  write_text(dir / "metrics.csv", metrics_csv(res.metrics));
  write_text(dir / "losses.csv", losses_csv(res.steps));
  std::cout << "trained " << res.last.epochs_completed << " epochs; checkpoint at "
            << (dir / "checkpoint").string() << '\n';
  return kOk;
}

std::pair<Checkpoint, Cohort> load_inputs(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Cohort cohort = require_cohort(cfg);
  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  // Rejects a cohort whose feature widths differ from the checkpoint's.
  if (!(cohort.dims.c_in == ck.model_config.dims.c_in &&
        cohort.dims.genomic_widths == ck.model_config.dims.genomic_widths))
    throw SchemaError("cohort feature dims do not match the checkpoint");
  return {std::move(ck), std::move(cohort)};
}

int cmd_eval(const RunConfig& cfg) {
  auto [ck, cohort] = load_inputs(cfg);
  const fs::path dir = make_out_dir(cfg);
  Model model = model_from_checkpoint(ck);
  const std::vector<double> risks = predict_risks(model, cohort);
  std::vector<SurvivalOutcome> outcomes;
  std::ostringstream rows;
  rows << "id,time,censor,risk\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& p = cohort.patients[i];
    outcomes.push_back({p.survival_time, p.censor, risks[i]});
    rows << p.id << ',' << fmt(p.survival_time) << ',' << p.censor << ','
         << fmt(risks[i]) << '\n';
  }
  write_text(dir / "risks.csv", rows.str());

  const ConcordanceResult c = concordance(outcomes);
  const RiskGroups groups = split_by_median_risk(outcomes);
  const auto low = select(outcomes, groups.low);
  const auto high = select(outcomes, groups.high);
  const KmCurve km_low = km_curve(low), km_high = km_curve(high);
  write_text(dir / "km_low.csv", km_to_csv(km_low));
  write_text(dir / "km_high.csv", km_to_csv(km_high));
  if (cfg.svg)
    write_text(dir / "km.svg", km_to_svg(km_low, km_high, "Kaplan-Meier by risk group"));
  const LogrankResult lr = logrank_test(low, high);

  const json report = {{"cindex", c.cindex},
                       {"logrank_chi2", lr.chi_square},
                       {"logrank_p", lr.p_value},
                       {"n", cohort.size()},
                       {"n_comparable_pairs", c.comparable},
                       {"n_low", groups.low.size()},
                       {"n_high", groups.high.size()},
                       {"risk_threshold", groups.threshold}};
  write_text(dir / "report.json", report.dump(2) + "\n");
  std::cout << "C-index " << fmt(c.cindex) << ", logrank chi2 " << fmt(lr.chi_square)
            << " (p = " << fmt(lr.p_value) << ")\n";
  return kOk;
}

int cmd_whatif(const RunConfig& cfg) {
  auto [ck, cohort] = load_inputs(cfg);
  const fs::path dir = make_out_dir(cfg);
  Model model = model_from_checkpoint(ck);
  std::ostringstream table, summary;
  table << "id,radiation,pharmaceutical,risk,is_actual,is_best,is_worst\n";
  summary << "id,actual,best,worst\n";
  std::vector<double> actual, best, worst;
  int protective = 0;
  for (const auto& p : cohort.patients) {
    const WhatIfTable t = treatment_whatif(p, model);
    for (int i = 0; i < 4; ++i) {
      const auto& r = t.rows[i];
      table << p.id << ',' << r.radiation << ',' << r.pharmaceutical << ','
            << fmt(r.risk) << ',' << (i == t.actual) << ',' << (i == t.best) << ','
            << (i == t.worst) << '\n';
    }
    actual.push_back(t.rows[t.actual].risk);
    best.push_back(t.rows[t.best].risk);
    worst.push_back(t.rows[t.worst].risk);
    summary << p.id << ',' << fmt(actual.back()) << ',' << fmt(best.back()) << ','
            << fmt(worst.back()) << '\n';
    if (t.rows[t.best].radiation && t.rows[t.best].pharmaceutical) ++protective;
  }
  write_text(dir / "whatif.csv", table.str());
  write_text(dir / "summary.csv", summary.str());
  auto fit = [](const std::vector<double>& v) {
    const GaussianFit g = fit_gaussian(v);
    return json{{"mean", g.mean}, {"std", g.stddev}};
  };
  write_text(dir / "summary_fit.json",
             json{{"actual", fit(actual)}, {"best", fit(best)}, {"worst", fit(worst)},
                  {"best_is_both_treatments", protective},
                  {"n", cohort.size()}}
                     .dump(2) +
                 "\n");
  std::cout << "what-if tables for " << cohort.size() << " patients; both treatments "
            << "best for " << protective << '\n';
  return kOk;
}

void print_report(const char* label, const FiniteDiffReport& r) {
  std::cout << label << ": " << r.checked << " coordinates, max rel. error "
            << fmt(r.max_rel_error) << " (" << r.worst.tensor << '[' << r.worst.row
            << ',' << r.worst.col << "]), mean " << fmt(r.mean_rel_error) << ", "
            << fmt(r.seconds) << " s -> " << (r.passed ? "PASS" : "FAIL") << '\n';
}

int cmd_gradcheck(const RunConfig& cfg) {
  ToyInstance toy = make_toy_instance(cfg.train.seed);
  Model model(toy.config, cfg.train.seed);
  FiniteDiffOptions o;
  o.step = cfg.fd_step;
  o.tol = cfg.fd_tol;
  o.max_coords_per_tensor = cfg.fd_samples;
  o.seed = cfg.train.seed;
  const FiniteDiffReport r = finite_diff_check(model, toy.cohort, o);
  print_report("gradient check", r);
  bool ok = r.passed;
  if (cfg.fd_self_test) {
    o.corrupt = 2.0;
    const FiniteDiffReport bad = finite_diff_check(model, toy.cohort, o);
    print_report("corrupted gradient (expected FAIL)", bad);
    ok = ok && !bad.passed;
  }
  return ok ? kOk : kVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal discrete-time survival fusion"};
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "write a synthetic cohort");
  FlagSet simulate_flags(simulate, {"generator", "common", "paths"});
  auto* bins = app.add_subcommand("bins", "show quantile time bins of a cohort");
  FlagSet bins_flags(bins, {"train", "paths"});
  auto* trainc = app.add_subcommand("train", "train a model or run cross-validation");
  FlagSet train_flags(trainc, {"train", "common", "paths"});
  auto* eval = app.add_subcommand("eval", "C-index, KM curves and logrank test");
  FlagSet eval_flags(eval, {"paths"});
  auto* whatif = app.add_subcommand("whatif", "treatment what-if sweep");
  FlagSet whatif_flags(whatif, {"paths"});
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  FlagSet gradcheck_flags(gradcheck, {"gradcheck", "common"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInput;
  }

  try {
    if (*simulate) return cmd_simulate(simulate_flags.resolve());
    if (*bins) return cmd_bins(bins_flags.resolve());
    if (*trainc) return cmd_train(train_flags.resolve());
    if (*eval) return cmd_eval(eval_flags.resolve());
    if (*whatif) return cmd_whatif(whatif_flags.resolve());
    if (*gradcheck) return cmd_gradcheck(gradcheck_flags.resolve());
  } catch (const EvalError& e) {
    std::cerr << "evaluation error: " << e.what() << '\n';
    return kEval;
  } catch (const IOError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kInput;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kInput;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kInput;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kInput;
  } catch (const EncodingError& e) {
    std::cerr << "encoding error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
