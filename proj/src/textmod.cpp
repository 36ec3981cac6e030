#include "survfuse/textmod.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "survfuse/error.hpp"

namespace survfuse {

std::string render_demographic_text(const ClinicalInfo& info) {
  const bool female = info.sex == Sex::kFemale;
  return std::string(female ? "She" : "He") + " is a " +
         std::to_string(info.age) + "-year-old " + info.race + " " +
         (female ? "woman." : "man.");
}

std::string render_treatment_text(const ClinicalInfo& info) {
  if (info.radiation && info.pharmaceutical)
    return "Radiation and pharmaceutical therapy are applied.";
  if (info.radiation) return "Radiation is applied.";
  if (info.pharmaceutical) return "Pharmaceutical therapy is applied.";
  return "No treatment is applied.";
}

std::array<double, kClinicalTensorWidth> tensorize_clinical(
    const ClinicalInfo& info, const std::vector<std::string>& race_vocab) {
  const auto it = std::find(race_vocab.begin(), race_vocab.end(), info.race);
  if (it == race_vocab.end()) {
    std::string list;
    for (const auto& r : race_vocab) list += (list.empty() ? "" : ", ") + r;
    throw SchemaError("unknown race '" + info.race + "'; vocabulary: [" + list +
                      "]");
  }
  const double race_index = static_cast<double>(it - race_vocab.begin());
  return {info.sex == Sex::kFemale ? 1.0 : 0.0, info.age / 100.0,
          race_index / static_cast<double>(race_vocab.size()),
          info.radiation ? 1.0 : 0.0, info.pharmaceutical ? 1.0 : 0.0};
}

TextBag make_text_bag(const ClinicalInfo& info,
                      const std::vector<std::string>& race_vocab) {
  return {render_demographic_text(info), render_treatment_text(info),
          tensorize_clinical(info, race_vocab)};
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<int> token_rows(std::string_view text, int vocab_size) {
  const auto tokens = tokenize(text);
  if (tokens.empty())
    throw EncodingError("text has no tokens: '" + std::string(text) + "'");
  std::vector<int> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens)
    rows.push_back(static_cast<int>(fnv1a64(t) %
                                    static_cast<std::uint64_t>(vocab_size)));
  return rows;
}

void TextEmbedder::init(ParamStore& params, int vocab_size, int token_dim,
                        int out_dim, Rng& rng) const {
  if (vocab_size < 64) throw ConfigError("vocab_size must be >= 64");
  params.add(table_name(), normal_matrix(vocab_size, token_dim, 1.0, rng));
  const double bound = 1.0 / std::sqrt(static_cast<double>(token_dim));
  params.add(weight_name(), uniform_matrix(token_dim, out_dim, bound, rng));
  params.add(bias_name(), uniform_matrix(1, out_dim, bound, rng));
}

ad::Var TextEmbedder::forward(ad::Graph& g, ParamStore& params,
                              std::string_view text) const {
  ad::Var table = g.parameter(params.at(table_name()));
  const auto rows = token_rows(text, static_cast<int>(table.rows()));
  ad::Var mean = ad::gather_mean(table, rows);
  return ad::add_row(ad::matmul(mean, g.parameter(params.at(weight_name()))),
                     g.parameter(params.at(bias_name())));
}

}  // namespace survfuse
