#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "survfuse/autodiff.hpp"
#include "survfuse/cohort.hpp"
#include "survfuse/params.hpp"

namespace survfuse {

inline constexpr int kClinicalTensorWidth = 5;

struct TextBag {
  std::string demo_text;
  std::string treat_text;
  std::array<double, kClinicalTensorWidth> clinical_tensor{};
};

// "He is a 70-year-old asian man." / "She is a 63-year-old white woman."
std::string render_demographic_text(const ClinicalInfo& info);

// One of four fixed sentences, depending on the two treatment flags.
std::string render_treatment_text(const ClinicalInfo& info);

// [sex (female = 1), age / 100, race_index / |vocab|, radiation, pharma].
std::array<double, kClinicalTensorWidth> tensorize_clinical(
    const ClinicalInfo& info, const std::vector<std::string>& race_vocab);

TextBag make_text_bag(const ClinicalInfo& info,
                      const std::vector<std::string>& race_vocab);

// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

// Lowercased alphanumeric runs of `text`.
std::vector<std::string> tokenize(std::string_view text);

// Token-table rows addressed by `text`; throws EncodingError when the
// text has no tokens.
std::vector<int> token_rows(std::string_view text, int vocab_size);

// Hashed bag-of-tokens embedder: mean of the token-table rows, then an
// affine projection to the model width.
class TextEmbedder {
 public:
  TextEmbedder() = default;
  explicit TextEmbedder(std::string prefix) : prefix_(std::move(prefix)) {}

  void init(ParamStore& params, int vocab_size, int token_dim, int out_dim,
            Rng& rng) const;
  ad::Var forward(ad::Graph& g, ParamStore& params,
                  std::string_view text) const;

  std::string table_name() const { return prefix_ + ".token_table"; }
  std::string weight_name() const { return prefix_ + ".proj.weight"; }
  std::string bias_name() const { return prefix_ + ".proj.bias"; }

 private:
  std::string prefix_ = "text";
};

}  // namespace survfuse
