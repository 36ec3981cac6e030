#include "survfuse/model.hpp"

#include <algorithm>
#include <cmath>

#include "survfuse/error.hpp"

namespace survfuse {

namespace {

constexpr std::array<const char*, 4> kIntraNames = {"g", "pg", "pt", "t"};

void check_config(const ModelConfig& c) {
  if (c.dims.hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (c.n_bins < 2) throw ConfigError("n_bins must be >= 2");
  if (c.race_vocab.empty()) throw ConfigError("race_vocab is empty");
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), encoders_(config_.dims) {
  check_config(config_);
  build();
  Rng rng(seed);
  init(rng);
  params_.round_to_float();
}

Model::Model(ModelConfig config, ParamStore params)
    : config_(std::move(config)), encoders_(config_.dims) {
  check_config(config_);
  build();
  // Compare against a reference layout.
  ParamStore reference;
  Rng rng(0);
  params_ = ParamStore{};
  init(rng);
  std::swap(reference, params_);
  if (reference.size() != params.size())
    throw SchemaError("parameter count " + std::to_string(params.size()) +
                      " does not match the model layout (" +
                      std::to_string(reference.size()) + ")");
  for (const auto& [name, p] : reference) {
    if (!params.contains(name)) throw SchemaError("missing parameter " + name);
    const Matrix& v = params.at(name).value;
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols())
      throw SchemaError("parameter " + name + " has shape " +
                        std::to_string(v.rows()) + "x" +
                        std::to_string(v.cols()) + ", expected " +
                        std::to_string(p.value.rows()) + "x" +
                        std::to_string(p.value.cols()));
  }
  params_ = std::move(params);
  params_.zero_grad();
}

void Model::build() {
  const int d = config_.dims.hidden_dim;
  for (int i = 0; i < 4; ++i)
    intra_[i] = AttentionBlock(std::string("intra.") + kIntraNames[i], d,
                               config_.heads);
  rod_ = RodModule(d);
  unify_ = UnificationModule(d, config_.heads);
  multi_head_.fc = {"head.multi", kFusedTokens * d, config_.n_bins};
  for (int i = 0; i < kUnimodalHeads; ++i)
    uni_heads_[i].fc = {std::string("head.uni.") + kUnimodalNames[i], d,
                        config_.n_bins};
}

void Model::init(Rng& rng) {
  encoders_.init(params_, rng);
  for (const auto& b : intra_) b.init(params_, rng);
  rod_.init(params_, rng);
  unify_.init(params_, rng);
  multi_head_.init(params_, rng);
  for (const auto& h : uni_heads_) h.init(params_, rng);
}

TextBag Model::text_bag(const ClinicalInfo& info) const {
  TextBag bag = make_text_bag(info, config_.race_vocab);
  if (!config_.ablation.use_demo)
    bag.clinical_tensor[0] = bag.clinical_tensor[1] = bag.clinical_tensor[2] = 0.0;
  if (!config_.ablation.use_treat)
    bag.clinical_tensor[3] = bag.clinical_tensor[4] = 0.0;
  return bag;
}

ForwardResult Model::forward(ad::Graph& g, const PatientRecord& patient,
                             const FrozenPlans* frozen) {
  const Ablation& ab = config_.ablation;
  const int d = config_.dims.hidden_dim;
  ForwardResult out;

  const ad::Var f_p =
      encoders_.encode_patches(g, params_, patient.wsi_bag.cast<double>());
  const ad::Var f_g = encoders_.encode_genomics(g, params_, patient.genomic_bag);

  const ClinicalRows rows{ab.use_demo, ab.use_treat, ab.use_tensor};
  out.has_text = rows.count() > 0;
  ad::Var f_t;
  if (out.has_text)
    f_t = encoders_.encode_clinical(g, params_, text_bag(patient.clinical), rows);

  auto interact = [&](const ad::Var& f_x,
                      const std::optional<TransportPlan>& reuse,
                      std::optional<TransportPlan>& slot) {
    if (!ab.use_ot) return co_attention(f_x, f_p);
    if (reuse) {
      slot = reuse;
    } else {
      slot = sinkhorn(cost_matrix(f_p.value(), f_x.value()), config_.ot);
    }
    return align(f_p, *slot);
  };

  const ad::Var f_pg =
      interact(f_g, frozen ? frozen->pg : std::nullopt, out.plans.pg);
  const ad::Var h_g = intra_modal_transform(g, params_, intra_[0], f_g);
  const ad::Var h_pg = intra_modal_transform(g, params_, intra_[1], f_pg);
  ad::Var h_pt, h_t;
  if (out.has_text) {
    const ad::Var f_pt =
        interact(f_t, frozen ? frozen->pt : std::nullopt, out.plans.pt);
    h_pt = intra_modal_transform(g, params_, intra_[2], f_pt);
    h_t = intra_modal_transform(g, params_, intra_[3], f_t);
  } else {
    h_pt = g.constant(Matrix::Zero(1, d));
    h_t = g.constant(Matrix::Zero(1, d));
  }

  ad::Var f_prime_p;
  if (ab.use_rod) {
    RodState rod = rod_.forward(g, params_, f_p, h_pg, h_pt);
    if (rod.skipped_pg)
      out.warnings.push_back("rod: histo-genomic conditioner is degenerate");
    if (rod.skipped_pt && out.has_text)
      out.warnings.push_back("rod: histo-text conditioner is degenerate");
    f_prime_p = rod.f_prime_p;
    bool degen = false;
    out.cos_pg = cosine_orthogonality_loss(rod.f_po, h_pg, &degen);
    out.cos_pg_active = true;
    if (degen) out.warnings.push_back("cosine loss (pg) is degenerate");
    if (out.has_text) {
      out.cos_pt = cosine_orthogonality_loss(rod.f_po, h_pt, &degen);
      out.cos_pt_active = true;
      if (degen) out.warnings.push_back("cosine loss (pt) is degenerate");
    }
    out.rod = std::move(rod);
  } else {
    f_prime_p = ad::leaky_relu(
        rod_.projector.forward(g, params_, ad::mean_rows(f_p)));
  }

  out.fused = {h_g, h_pg, f_prime_p, h_pt, h_t};
  const ad::Var five = ad::concat_rows(out.fused);
  out.unified = ab.use_unify ? unify_.forward(g, params_, five) : five;
  out.hazards = classify_multimodal(g, params_, multi_head_, out.unified);

  if (ab.use_dense) {
    for (int i = 0; i < kUnimodalHeads; ++i) {
      const bool text_token = i == 3 || i == 4;
      if (text_token && !out.has_text) continue;
      out.unimodal_hazards[i] =
          classify_unimodal(g, params_, uni_heads_[i], out.fused[i]);
      out.unimodal_active[i] = true;
    }
  }
  return out;
}

LossResult Model::loss(const ForwardResult& fwd, int bin, int censor) const {
  const SurvivalLoss kind =
      config_.ablation.use_bnll ? SurvivalLoss::kBalanced : SurvivalLoss::kNll;
  ad::Graph& g = *fwd.hazards.graph();

  LossTerms terms;
  const ad::Var l_m = survival_loss(fwd.hazards, bin, censor, kind);
  terms.multimodal = l_m.scalar();

  // Auxiliary sum in the same order total_loss() uses.
  ad::Var aux;
  auto accumulate = [&](const ad::Var& v) {
    aux = aux.valid() ? ad::add(aux, v) : v;
  };
  for (int i = 0; i < kUnimodalHeads; ++i) {
    if (!fwd.unimodal_active[i]) {
      terms.unimodal_disabled[i] = true;
      continue;
    }
    const ad::Var l_u = survival_loss(fwd.unimodal_hazards[i], bin, censor, kind);
    terms.unimodal[i] = l_u.scalar();
    accumulate(l_u);
  }
  terms.cos_pg_disabled = !fwd.cos_pg_active;
  if (fwd.cos_pg_active) {
    terms.cos_pg = fwd.cos_pg.scalar();
    accumulate(fwd.cos_pg);
  }
  terms.cos_pt_disabled = !fwd.cos_pt_active;
  if (fwd.cos_pt_active) {
    terms.cos_pt = fwd.cos_pt.scalar();
    accumulate(fwd.cos_pt);
  }

  LossResult res;
  res.breakdown = total_loss(terms, config_.alpha);
  res.total = aux.valid() ? ad::add(l_m, ad::scale(aux, config_.alpha)) : l_m;
  (void)g;
  return res;
}

Vector Model::predict_hazards(const PatientRecord& patient) {
  ad::Graph g;
  const ForwardResult fwd = forward(g, patient);
  return fwd.hazards.value().row(0).transpose();
}

double Model::predict_risk(const PatientRecord& patient) {
  return risk_score(predict_hazards(patient));
}

WhatIfTable treatment_whatif(const PatientRecord& patient, Model& model) {
  WhatIfTable table;
  table.patient_id = patient.id;
  PatientRecord variant = patient;
  for (int i = 0; i < 4; ++i) {
    const bool radiation = (i & 1) != 0;
    const bool pharma = (i & 2) != 0;
    variant.clinical.radiation = radiation;
    variant.clinical.pharmaceutical = pharma;
    table.rows[i] = {radiation, pharma, model.predict_risk(variant)};
    if (radiation == patient.clinical.radiation &&
        pharma == patient.clinical.pharmaceutical)
      table.actual = i;
  }
  for (int i = 1; i < 4; ++i) {
    if (table.rows[i].risk < table.rows[table.best].risk) table.best = i;
    if (table.rows[i].risk > table.rows[table.worst].risk) table.worst = i;
  }
  return table;
}

}  // namespace survfuse
