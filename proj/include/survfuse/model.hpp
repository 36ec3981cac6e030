#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "survfuse/autodiff.hpp"
#include "survfuse/cohort.hpp"
#include "survfuse/encoders.hpp"
#include "survfuse/fusion.hpp"
#include "survfuse/objective.hpp"
#include "survfuse/ot_align.hpp"
#include "survfuse/params.hpp"
#include "survfuse/textmod.hpp"

namespace survfuse {

// Module and modality toggles. Disabling demo/treat removes the sentence
// from the text stack and zeroes the matching clinical-tensor slots.
struct Ablation {
  bool use_ot = true;
  bool use_dense = true;
  bool use_bnll = true;
  bool use_unify = true;
  bool use_rod = true;
  bool use_demo = true;
  bool use_treat = true;
  bool use_tensor = true;

  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  EncoderDims dims;
  int heads = 4;
  int n_bins = 4;
  double alpha = 0.1;
  std::vector<std::string> race_vocab{"white", "black", "asian", "other"};
  Ablation ablation;
  SinkhornOptions ot;
};

// Plans computed by an earlier pass, reused instead of re-solving.
struct FrozenPlans {
  std::optional<TransportPlan> pg;
  std::optional<TransportPlan> pt;
};

struct ForwardResult {
  ad::Var hazards;  // 1 x N_b from the multi-modal head
  // f'^X in order g, pg, p, pt, t and their unified counterparts.
  std::array<ad::Var, kFusedTokens> fused;
  ad::Var unified;
  std::array<ad::Var, kUnimodalHeads> unimodal_hazards;
  std::array<bool, kUnimodalHeads> unimodal_active{};
  std::optional<RodState> rod;
  ad::Var cos_pg, cos_pt;
  bool cos_pg_active = false;
  bool cos_pt_active = false;
  FrozenPlans plans;
  bool has_text = false;
  std::vector<std::string> warnings;
};

struct LossResult {
  ad::Var total;
  LossBreakdown breakdown;
};

class Model {
 public:
  // Fresh parameters drawn from `seed`, rounded to float precision.
  Model(ModelConfig config, std::uint64_t seed);
  // Adopts existing parameters; throws SchemaError unless names and shapes
  // match the configuration.
  Model(ModelConfig config, ParamStore params);

  ForwardResult forward(ad::Graph& g, const PatientRecord& patient,
                        const FrozenPlans* frozen = nullptr);
  LossResult loss(const ForwardResult& fwd, int bin, int censor) const;

  Vector predict_hazards(const PatientRecord& patient);
  double predict_risk(const PatientRecord& patient);

  // Text bag as seen by the model (ablated tensor slots zeroed).
  TextBag text_bag(const ClinicalInfo& info) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  EncoderSet& encoders() { return encoders_; }

 private:
  void build();
  void init(Rng& rng);

  ModelConfig config_;
  ParamStore params_;
  EncoderSet encoders_;
  std::array<AttentionBlock, 4> intra_;  // g, pg, pt, t
  RodModule rod_;
  UnificationModule unify_;
  HazardHead multi_head_;
  std::array<HazardHead, kUnimodalHeads> uni_heads_;
};

struct WhatIfRow {
  bool radiation = false;
  bool pharmaceutical = false;
  double risk = 0.0;
};

struct WhatIfTable {
  std::string patient_id;
  std::array<WhatIfRow, 4> rows;
  int actual = 0;
  int best = 0;   // argmin risk
  int worst = 0;  // argmax risk
};

// Re-runs the forward pass under each of the four treatment combinations.
WhatIfTable treatment_whatif(const PatientRecord& patient, Model& model);

}  // namespace survfuse
