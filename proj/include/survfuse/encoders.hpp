#pragma once

#include <array>
#include <string>
#include <vector>

#include "survfuse/autodiff.hpp"
#include "survfuse/cohort.hpp"
#include "survfuse/params.hpp"
#include "survfuse/textmod.hpp"

namespace survfuse {

enum class Activation { kLinear, kRelu, kLeakyRelu, kSelu };

ad::Var activate(const ad::Var& x, Activation act);

enum class InitScheme {
  kUniformFanIn,  // U(-1/sqrt(in), 1/sqrt(in)) for weight and bias
  kLecunNormal,   // N(0, 1/in) weights, zero bias; pairs with SELU
};

// x W + b with W stored in x out.
struct Linear {
  std::string prefix;
  int in = 0;
  int out = 0;

  void init(ParamStore& params, Rng& rng,
            InitScheme scheme = InitScheme::kUniformFanIn) const;
  ad::Var forward(ad::Graph& g, ParamStore& params, const ad::Var& x) const;
  std::string weight_name() const { return prefix + ".weight"; }
  std::string bias_name() const { return prefix + ".bias"; }
};

struct EncoderDims {
  int c_in = 1024;
  std::array<int, kGenomicGroups> genomic_widths{94, 334, 521, 468, 1496, 479};
  int hidden_dim = 256;
  int vocab_size = 256;
  int token_dim = 64;
};

// Which rows of the text feature stack are produced.
struct ClinicalRows {
  bool demo = true;
  bool treat = true;
  bool tensor = true;

  int count() const { return int(demo) + int(treat) + int(tensor); }
};

class EncoderSet {
 public:
  explicit EncoderSet(EncoderDims dims);

  void init(ParamStore& params, Rng& rng) const;

  // N_p x d, row order preserved.
  ad::Var encode_patches(ad::Graph& g, ParamStore& params,
                         const Matrix& bag) const;
  // 6 x d; row k comes from the k-th non-shared SNN.
  ad::Var encode_genomics(
      ad::Graph& g, ParamStore& params,
      const std::array<std::vector<double>, kGenomicGroups>& groups) const;
  // Rows [demo text, treatment text, clinical tensor], skipping disabled
  // rows. Throws SchemaError when every row is disabled.
  ad::Var encode_clinical(ad::Graph& g, ParamStore& params, const TextBag& bag,
                          ClinicalRows rows = {}) const;

  const EncoderDims& dims() const { return dims_; }

  // Patch projector activation; the linear mode exists for tests.
  Activation patch_activation = Activation::kLeakyRelu;

 private:
  EncoderDims dims_;
  Linear patch_proj_;
  std::array<Linear, kGenomicGroups> snn_fc1_;
  std::array<Linear, kGenomicGroups> snn_fc2_;
  Linear clinical_fc1_;
  Linear clinical_fc2_;
  TextEmbedder text_;
};

}  // namespace survfuse
