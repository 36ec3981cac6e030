#pragma once

#include <array>
#include <string>

#include "survfuse/autodiff.hpp"
#include "survfuse/encoders.hpp"
#include "survfuse/params.hpp"

namespace survfuse {

// Multi-head self-attention with residual + layer norm, followed by a
// two-layer feed-forward network (width 2d) with a residual:
//   y   = LN(x + MHA(x))
//   out = y + W2 relu(W1 y)
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(std::string prefix, int dim, int heads);

  void init(ParamStore& params, Rng& rng) const;
  ad::Var forward(ad::Graph& g, ParamStore& params,
                  const ad::Var& tokens) const;
  // Just the attention sublayer (before the residual).
  ad::Var attention(ad::Graph& g, ParamStore& params,
                    const ad::Var& tokens) const;

  const std::string& prefix() const { return prefix_; }
  int dim() const { return dim_; }
  int heads() const { return heads_; }

 private:
  std::string prefix_;
  int dim_ = 0;
  int heads_ = 1;
  Linear q_, k_, v_, o_, ff1_, ff2_;
};

// Transformer block over the token set, then the mean over tokens.
ad::Var intra_modal_transform(ad::Graph& g, ParamStore& params,
                              const AttentionBlock& block,
                              const ad::Var& tokens);

// Parameter-free scaled dot-product attention of `queries` over `keys`,
// used in place of transport alignment when it is ablated:
// softmax(Q K^T / sqrt(d)) K.
ad::Var co_attention(const ad::Var& queries, const ad::Var& keys);

struct RodState {
  ad::Var pooled_patch;  // projector(mean over patches)
  ad::Var f_po;          // modality-specific component
  ad::Var f_prime_p;     // pooled_patch + fusor(f_po)
  bool skipped_pg = false;  // conditioner norm below 1e-12
  bool skipped_pt = false;
};

inline constexpr double kDegenerateNorm = 1e-12;

// b - proj_{h_pg}(b) - proj_{h_pt}(b), dropping a term whose conditioner
// has norm below kDegenerateNorm.
ad::Var orthogonal_residual(const ad::Var& b, const ad::Var& h_pg,
                            const ad::Var& h_pt, bool* skipped_pg = nullptr,
                            bool* skipped_pt = nullptr);

struct RodModule {
  Linear projector;
  Linear fusor;

  explicit RodModule(int dim = 0);
  void init(ParamStore& params, Rng& rng) const;
  RodState forward(ad::Graph& g, ParamStore& params,
                   const ad::Var& patch_feats, const ad::Var& h_pg,
                   const ad::Var& h_pt) const;
};

inline constexpr int kFusedTokens = 5;

// Two stacked attention blocks over the five tokens (g, pg, p, pt, t).
class UnificationModule {
 public:
  UnificationModule() = default;
  UnificationModule(int dim, int heads);
  void init(ParamStore& params, Rng& rng) const;
  ad::Var forward(ad::Graph& g, ParamStore& params,
                  const ad::Var& five) const;

 private:
  std::array<AttentionBlock, 2> blocks_;
};

// Single linear layer + logistic: per-bin hazards in (0, 1).
struct HazardHead {
  Linear fc;
  void init(ParamStore& params, Rng& rng) const { fc.init(params, rng); }
  ad::Var forward(ad::Graph& g, ParamStore& params, const ad::Var& x) const;
};

// Concatenates the five unified vectors (1 x 5d) and applies the head.
ad::Var classify_multimodal(ad::Graph& g, ParamStore& params,
                            const HazardHead& head, const ad::Var& unified);
ad::Var classify_unimodal(ad::Graph& g, ParamStore& params,
                          const HazardHead& head, const ad::Var& vec);

}  // namespace survfuse
