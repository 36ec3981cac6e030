#include "survfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "survfuse/error.hpp"

namespace survfuse {

using json = nlohmann::json;

namespace {

json ablation_json(const Ablation& a) {
  return {{"use_ot", a.use_ot},         {"use_dense", a.use_dense},
          {"use_bnll", a.use_bnll},     {"use_unify", a.use_unify},
          {"use_rod", a.use_rod},       {"use_demo", a.use_demo},
          {"use_treat", a.use_treat},   {"use_tensor", a.use_tensor}};
}

Ablation ablation_from_json(const json& j) {
  Ablation a;
  a.use_ot = j.at("use_ot").get<bool>();
  a.use_dense = j.at("use_dense").get<bool>();
  a.use_bnll = j.at("use_bnll").get<bool>();
  a.use_unify = j.at("use_unify").get<bool>();
  a.use_rod = j.at("use_rod").get<bool>();
  a.use_demo = j.at("use_demo").get<bool>();
  a.use_treat = j.at("use_treat").get<bool>();
  a.use_tensor = j.at("use_tensor").get<bool>();
  return a;
}

template <typename F>
auto schema_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"c_in", c.dims.c_in},
          {"genomic_widths", c.dims.genomic_widths},
          {"hidden_dim", c.dims.hidden_dim},
          {"vocab_size", c.dims.vocab_size},
          {"token_dim", c.dims.token_dim},
          {"heads", c.heads},
          {"n_bins", c.n_bins},
          {"alpha", c.alpha},
          {"race_vocab", c.race_vocab},
          {"ablation", ablation_json(c.ablation)},
          {"eps_ot", c.ot.eps},
          {"ot_tol", c.ot.tol},
          {"ot_max_iter", c.ot.max_iter}};
}

ModelConfig model_config_from_json(const json& j) {
  return schema_guard("model_config", [&] {
    ModelConfig c;
    c.dims.c_in = j.at("c_in").get<int>();
    c.dims.genomic_widths =
        j.at("genomic_widths").get<std::array<int, kGenomicGroups>>();
    c.dims.hidden_dim = j.at("hidden_dim").get<int>();
    c.dims.vocab_size = j.at("vocab_size").get<int>();
    c.dims.token_dim = j.at("token_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.n_bins = j.at("n_bins").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.race_vocab = j.at("race_vocab").get<std::vector<std::string>>();
    c.ablation = ablation_from_json(j.at("ablation"));
    c.ot.eps = j.at("eps_ot").get<double>();
    c.ot.tol = j.at("ot_tol").get<double>();
    c.ot.max_iter = j.at("ot_max_iter").get<int>();
    return c;
  });
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"accumulation_steps", c.accumulation_steps},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"alpha", c.alpha},
          {"n_bins", c.n_bins},
          {"eps_ot", c.eps_ot},
          {"ot_tol", c.ot_tol},
          {"ot_max_iter", c.ot_max_iter},
          {"hidden_dim", c.hidden_dim},
          {"heads", c.heads},
          {"vocab_size", c.vocab_size},
          {"token_dim", c.token_dim},
          {"race_vocab", c.race_vocab},
          {"ablation", ablation_json(c.ablation)}};
}

TrainConfig train_config_from_json(const json& j) {
  return schema_guard("train_config", [&] {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.accumulation_steps = j.at("accumulation_steps").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.alpha = j.at("alpha").get<double>();
    c.n_bins = j.at("n_bins").get<int>();
    c.eps_ot = j.at("eps_ot").get<double>();
    c.ot_tol = j.at("ot_tol").get<double>();
    c.ot_max_iter = j.at("ot_max_iter").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.token_dim = j.at("token_dim").get<int>();
    c.race_vocab = j.at("race_vocab").get<std::vector<std::string>>();
    c.ablation = ablation_from_json(j.at("ablation"));
    return c;
  });
}

json to_json(const GeneratorConfig& c) {
  return {{"n_patients", c.n_patients},
          {"patches_min", c.patches_min},
          {"patches_max", c.patches_max},
          {"c_in", c.c_in},
          {"genomic_widths", c.genomic_widths},
          {"genomic_weight", c.genomic_weight},
          {"patch_weight", c.patch_weight},
          {"treatment_weight", c.treatment_weight},
          {"age_weight", c.age_weight},
          {"genomic_signal", c.genomic_signal},
          {"patch_signal", c.patch_signal},
          {"censor_rate", c.censor_rate},
          {"base_rate", c.base_rate},
          {"race_vocab", c.race_vocab}};
}

std::string kebab_case(std::string_view snake) {
  std::string out(snake);
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " +
                    std::string(key) + " (expected " + expected + ")");
}

template <typename T>
T parse_number(std::string_view key, std::string_view s) {
  T out{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end || s.empty())
    bad_value(key, s, std::is_integral_v<T> ? "an integer" : "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, s, "a boolean");
}

std::vector<std::string> parse_list(std::string_view s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(s)};
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

std::string show(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

template <typename T, typename Access>
ConfigKey numeric(std::string name, std::vector<std::string> aliases,
                  std::string group, std::string help, Access access) {
  const std::string key = name;
  return {std::move(name), std::move(aliases), std::move(group), std::move(help),
          [access, key](RunConfig& c, std::string_view v) {
            access(c) = parse_number<T>(key, v);
          },
          [access](const RunConfig& c) {
            const T value = access(c);
            if constexpr (std::is_floating_point_v<T>)
              return show(value);
            else
              return std::to_string(value);
          }};
}

template <typename Access>
ConfigKey boolean(std::string name, std::string group, std::string help,
                  Access access) {
  const std::string key = name;
  return {std::move(name), {}, std::move(group), std::move(help),
          [access, key](RunConfig& c, std::string_view v) {
            access(c) = parse_bool(key, v);
          },
          [access](const RunConfig& c) {
            return std::string(access(c) ? "true"
                                                                 : "false");
          }};
}

template <typename Access>
ConfigKey text(std::string name, std::string group, std::string help,
               Access access) {
  return {std::move(name), {}, std::move(group), std::move(help),
          [access](RunConfig& c, std::string_view v) { access(c) = std::string(v); },
          [access](const RunConfig& c) {
            return access(c);
          }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  // Training and model settings.
  k.push_back(numeric<double>("learning_rate", {"lr"}, "train", "Adam learning rate",
                              [](auto& c) -> auto& { return c.train.learning_rate; }));
  k.push_back(numeric<double>("weight_decay", {}, "train", "decoupled weight decay",
                              [](auto& c) -> auto& { return c.train.weight_decay; }));
  k.push_back(numeric<int>("accumulation_steps", {"accum"}, "train",
                           "patients per optimizer step",
                           [](auto& c) -> auto& { return c.train.accumulation_steps; }));
  k.push_back(numeric<int>("epochs", {}, "train", "training epochs",
                           [](auto& c) -> auto& { return c.train.epochs; }));
  k.push_back(numeric<std::uint64_t>("seed", {}, "common", "random seed",
                                     [](auto& c) -> auto& { return c.train.seed; }));
  k.push_back(numeric<double>("alpha", {}, "train", "auxiliary loss weight",
                              [](auto& c) -> auto& { return c.train.alpha; }));
  k.push_back(numeric<int>("n_bins", {}, "train", "number of time bins",
                           [](auto& c) -> auto& { return c.train.n_bins; }));
  k.push_back(numeric<double>("eps_ot", {}, "train", "Sinkhorn entropic regularization",
                              [](auto& c) -> auto& { return c.train.eps_ot; }));
  k.push_back(numeric<double>("ot_tol", {}, "train", "Sinkhorn marginal tolerance",
                              [](auto& c) -> auto& { return c.train.ot_tol; }));
  k.push_back(numeric<int>("ot_max_iter", {}, "train", "Sinkhorn iteration cap",
                           [](auto& c) -> auto& { return c.train.ot_max_iter; }));
  k.push_back(numeric<int>("hidden_dim", {}, "train", "model width d",
                           [](auto& c) -> auto& { return c.train.hidden_dim; }));
  k.push_back(numeric<int>("heads", {}, "train", "attention heads",
                           [](auto& c) -> auto& { return c.train.heads; }));
  k.push_back(numeric<int>("vocab_size", {}, "train", "hashed text vocabulary size",
                           [](auto& c) -> auto& { return c.train.vocab_size; }));
  k.push_back(numeric<int>("token_dim", {}, "train", "token embedding width",
                           [](auto& c) -> auto& { return c.train.token_dim; }));
  k.push_back(boolean("use_ot", "train", "transport alignment (else co-attention)",
                      [](auto& c) -> auto& { return c.train.ablation.use_ot; }));
  k.push_back(boolean("use_dense", "train", "uni-modal supervision",
                      [](auto& c) -> auto& { return c.train.ablation.use_dense; }));
  k.push_back(boolean("use_bnll", "train", "balanced likelihood (else plain NLL)",
                      [](auto& c) -> auto& { return c.train.ablation.use_bnll; }));
  k.push_back(boolean("use_unify", "train", "unification blocks",
                      [](auto& c) -> auto& { return c.train.ablation.use_unify; }));
  k.push_back(boolean("use_rod", "train", "orthogonal decomposition",
                      [](auto& c) -> auto& { return c.train.ablation.use_rod; }));
  k.push_back(boolean("use_demo", "train", "demographic sentence and tensor slots",
                      [](auto& c) -> auto& { return c.train.ablation.use_demo; }));
  k.push_back(boolean("use_treat", "train", "treatment sentence and tensor slots",
                      [](auto& c) -> auto& { return c.train.ablation.use_treat; }));
  k.push_back(boolean("use_tensor", "train", "clinical tensor row",
                      [](auto& c) -> auto& { return c.train.ablation.use_tensor; }));
  k.push_back({"race_vocab", {}, "common", "ordered race vocabulary (comma list)",
               [](RunConfig& c, std::string_view v) {
                 auto items = parse_list(v);
                 if (items.empty()) throw ConfigError("race_vocab is empty");
                 c.train.race_vocab = items;
                 c.generator.race_vocab = items;
               },
               [](const RunConfig& c) { return join(c.train.race_vocab); }});
  k.push_back(numeric<int>("folds", {}, "train", "cross-validation folds",
                           [](auto& c) -> auto& { return c.folds; }));
  k.push_back(numeric<int>("fold", {}, "train",
                           "validation fold for a single run (-1: none)",
                           [](auto& c) -> auto& { return c.fold; }));
  k.push_back(boolean("cv", "train", "run k-fold cross-validation",
                      [](auto& c) -> auto& { return c.cv; }));
  k.push_back(text("resume", "train", "checkpoint directory to continue from",
                   [](auto& c) -> auto& { return c.resume; }));

  // Synthetic cohort generator.
  k.push_back(numeric<int>("n_patients", {"n"}, "generator", "cohort size",
                           [](auto& c) -> auto& { return c.generator.n_patients; }));
  k.push_back(numeric<int>("patches_min", {}, "generator", "fewest patches per bag",
                           [](auto& c) -> auto& { return c.generator.patches_min; }));
  k.push_back(numeric<int>("patches_max", {}, "generator", "most patches per bag",
                           [](auto& c) -> auto& { return c.generator.patches_max; }));
  k.push_back(numeric<int>("c_in", {}, "generator", "patch feature width",
                           [](auto& c) -> auto& { return c.generator.c_in; }));
  k.push_back({"genomic_widths", {}, "generator", "six group widths (comma list)",
               [](RunConfig& c, std::string_view v) {
                 const auto items = parse_list(v);
                 if (items.size() != kGenomicGroups)
                   throw ConfigError("genomic_widths needs 6 entries, got " +
                                     std::to_string(items.size()));
                 for (int i = 0; i < kGenomicGroups; ++i)
                   c.generator.genomic_widths[i] =
                       parse_number<int>("genomic_widths", items[i]);
               },
               [](const RunConfig& c) {
                 std::vector<std::string> items;
                 for (int w : c.generator.genomic_widths) items.push_back(std::to_string(w));
                 return join(items);
               }});
  k.push_back(numeric<double>("genomic_weight", {}, "generator", "risk per genomic latent unit",
                              [](auto& c) -> auto& { return c.generator.genomic_weight; }));
  k.push_back(numeric<double>("patch_weight", {}, "generator", "risk per patch latent unit",
                              [](auto& c) -> auto& { return c.generator.patch_weight; }));
  k.push_back(numeric<double>("treatment_weight", {}, "generator",
                              "risk reduction per applied treatment",
                              [](auto& c) -> auto& { return c.generator.treatment_weight; }));
  k.push_back(numeric<double>("age_weight", {}, "generator", "risk per 15 years over 60",
                              [](auto& c) -> auto& { return c.generator.age_weight; }));
  k.push_back(numeric<double>("genomic_signal", {}, "generator", "planted genomic amplitude",
                              [](auto& c) -> auto& { return c.generator.genomic_signal; }));
  k.push_back(numeric<double>("patch_signal", {}, "generator", "planted patch amplitude",
                              [](auto& c) -> auto& { return c.generator.patch_signal; }));
  k.push_back(numeric<double>("censor_rate", {}, "generator", "censoring probability",
                              [](auto& c) -> auto& { return c.generator.censor_rate; }));
  k.push_back(numeric<double>("base_rate", {}, "generator", "events per month at zero risk",
                              [](auto& c) -> auto& { return c.generator.base_rate; }));

  // Paths.
  k.push_back(text("cohort", "paths", "cohort manifest (JSON lines)",
                   [](auto& c) -> auto& { return c.cohort; }));
  k.push_back(text("out_dir", "paths", "output directory",
                   [](auto& c) -> auto& { return c.out_dir; }));
  k.push_back(text("checkpoint", "paths", "checkpoint directory",
                   [](auto& c) -> auto& { return c.checkpoint; }));
  k.push_back(boolean("svg", "paths", "also write a KM plot (eval)",
                      [](auto& c) -> auto& { return c.svg; }));

  // Gradient check.
  k.push_back(numeric<double>("fd_step", {"step"}, "gradcheck", "central difference step",
                              [](auto& c) -> auto& { return c.fd_step; }));
  k.push_back(numeric<double>("fd_tol", {"tol"}, "gradcheck", "max relative error",
                              [](auto& c) -> auto& { return c.fd_tol; }));
  k.push_back(numeric<int>("fd_samples", {"samples"}, "gradcheck",
                           "coordinates sampled per tensor",
                           [](auto& c) -> auto& { return c.fd_samples; }));
  k.push_back(boolean("fd_self_test", "gradcheck",
                      "also check that a doubled gradient is rejected",
                      [](auto& c) -> auto& { return c.fd_self_test; }));
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
    for (const auto& a : k.aliases)
      if (a == name) return &k;
  }
  return nullptr;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  k->set(config, value);
}

void apply_config_json(RunConfig& config, const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const ConfigKey* k = find_config_key(key);
    if (!k || k->name != key)
      throw ConfigError("unknown configuration key '" + key + "'");
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean() || value.is_number()) {
      text = value.dump();
    } else if (value.is_array()) {
      std::vector<std::string> items;
      for (const auto& item : value)
        items.push_back(item.is_string() ? item.get<std::string>() : item.dump());
      text = join(items);
    } else {
      throw ConfigError("configuration key '" + key + "' has an unsupported type");
    }
    k->set(config, text);
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  apply_config_json(config, j);
}

}  // namespace survfuse
