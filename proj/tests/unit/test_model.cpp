#include <doctest.h>

#include "survfuse/error.hpp"
#include "survfuse/model.hpp"
#include "survfuse/runtime.hpp"

using namespace survfuse;

namespace {

double risk_with(ModelConfig config, const PatientRecord& p, std::uint64_t seed = 4) {
  Model m(std::move(config), seed);
  return m.predict_risk(p);
}

}  // namespace

TEST_CASE("fresh models are deterministic in the seed") {
  const ToyInstance toy = make_toy_instance(1);
  const PatientRecord& p = toy.cohort.patients[0];
  Model a(toy.config, 4), b(toy.config, 4), c(toy.config, 5);
  const Vector ha = a.predict_hazards(p);
  CHECK(ha.size() == toy.config.n_bins);
  CHECK(ha == b.predict_hazards(p));
  CHECK(ha != c.predict_hazards(p));
  CHECK((ha.array() > 0.0).all());
  CHECK((ha.array() < 1.0).all());
  // Stored parameters are float-representable.
  for (const auto& [name, param] : a.params())
    CHECK(param.value == param.value.cast<float>().cast<double>());
}

TEST_CASE("forward exposes the five fused tokens and active heads") {
  const ToyInstance toy = make_toy_instance(2);
  Model m(toy.config, 3);
  ad::Graph g;
  const ForwardResult f = m.forward(g, toy.cohort.patients[1]);
  const int d = toy.config.dims.hidden_dim;
  CHECK(f.unified.value().rows() == 5);
  CHECK(f.unified.value().cols() == d);
  for (const auto& t : f.fused) CHECK(t.value().rows() == 1);
  for (bool active : f.unimodal_active) CHECK(active);
  CHECK(f.cos_pg_active);
  CHECK(f.cos_pt_active);
  CHECK(f.plans.pg.has_value());
  CHECK(f.plans.pt.has_value());
  const LossResult l = m.loss(f, 0, 0);
  CHECK(l.total.scalar() == doctest::Approx(l.breakdown.total).epsilon(1e-12));
}

TEST_CASE("ablation toggles change the prediction") {
  const ToyInstance toy = make_toy_instance(3);
  const PatientRecord& p = toy.cohort.patients[0];
  const double full = risk_with(toy.config, p);
  for (auto off : {&Ablation::use_ot, &Ablation::use_unify, &Ablation::use_rod,
                   &Ablation::use_demo, &Ablation::use_treat, &Ablation::use_tensor}) {
    ModelConfig c = toy.config;
    c.ablation.*off = false;
    CHECK(risk_with(c, p) != full);
  }
  // Dense supervision and the loss variant only act on the objective.
  ModelConfig no_dense = toy.config;
  no_dense.ablation.use_dense = false;
  no_dense.ablation.use_bnll = false;
  CHECK(risk_with(no_dense, p) == full);
  Model m(no_dense, 4);
  ad::Graph g;
  const ForwardResult f = m.forward(g, p);
  for (bool active : f.unimodal_active) CHECK_FALSE(active);
  const LossResult l = m.loss(f, 1, 0);
  CHECK(l.breakdown.multimodal == doctest::Approx(nll_loss(f.hazards.value().row(0).transpose(), 1, 0)));
}

TEST_CASE("no text rows leaves the text tokens empty") {
  const ToyInstance toy = make_toy_instance(3);
  ModelConfig c = toy.config;
  c.ablation.use_demo = c.ablation.use_treat = c.ablation.use_tensor = false;
  Model m(c, 4);
  ad::Graph g;
  const ForwardResult f = m.forward(g, toy.cohort.patients[0]);
  CHECK_FALSE(f.has_text);
  CHECK_FALSE(f.cos_pt_active);
  CHECK_FALSE(f.unimodal_active[3]);
  CHECK_FALSE(f.unimodal_active[4]);
  CHECK(f.fused[3].value().isZero(0.0));
  const LossResult l = m.loss(f, 0, 1);
  CHECK(l.breakdown.cos_pt_disabled);
  CHECK(l.breakdown.unimodal_disabled[4]);
}

TEST_CASE("ablated treatment text zeroes the tensor slots") {
  const ToyInstance toy = make_toy_instance(4);
  ModelConfig c = toy.config;
  c.ablation.use_treat = false;
  Model m(c, 1);
  ClinicalInfo info = toy.cohort.patients[0].clinical;
  info.radiation = info.pharmaceutical = true;
  const TextBag bag = m.text_bag(info);
  CHECK(bag.clinical_tensor[3] == 0.0);
  CHECK(bag.clinical_tensor[4] == 0.0);
  CHECK(bag.clinical_tensor[1] == info.age / 100.0);
}

TEST_CASE("what-if tables enumerate the four treatment combinations") {
  const ToyInstance toy = make_toy_instance(5);
  Model m(toy.config, 2);
  for (const PatientRecord& p : toy.cohort.patients) {
    const WhatIfTable t = treatment_whatif(p, m);
    CHECK(t.patient_id == p.id);
    for (int i = 0; i < 4; ++i) {
      CHECK(t.rows[i].radiation == bool(i & 1));
      CHECK(t.rows[i].pharmaceutical == bool(i & 2));
    }
    CHECK(t.actual == int(p.clinical.radiation) + 2 * int(p.clinical.pharmaceutical));
    CHECK(t.rows[t.actual].risk == doctest::Approx(m.predict_risk(p)).epsilon(1e-12));
    CHECK(t.rows[t.best].risk <= t.rows[t.actual].risk);
    CHECK(t.rows[t.actual].risk <= t.rows[t.worst].risk);
  }

  // A zero multi-modal head predicts 0.5 everywhere, so all risks tie.
  for (auto& [name, param] : m.params())
    if (name.rfind("head.multi", 0) == 0) param.value.setZero();
  const WhatIfTable flat = treatment_whatif(toy.cohort.patients[0], m);
  for (const auto& r : flat.rows) CHECK(r.risk == flat.rows[0].risk);
  CHECK(flat.best == 0);
  CHECK(flat.worst == 0);
}

TEST_CASE("adopting parameters validates names and shapes") {
  const ToyInstance toy = make_toy_instance(6);
  Model ref(toy.config, 8);
  Model copy(toy.config, ref.params());
  const PatientRecord& p = toy.cohort.patients[2];
  CHECK(copy.predict_hazards(p) == ref.predict_hazards(p));

  ParamStore missing;
  for (const auto& [name, param] : ref.params())
    if (name != "head.multi.weight") missing.add(name, param.value);
  CHECK_THROWS_AS(Model(toy.config, missing), SchemaError);

  ParamStore reshaped = ref.params();
  reshaped.at("patch_proj.bias").value = Matrix::Zero(1, 3);
  CHECK_THROWS_AS(Model(toy.config, reshaped), SchemaError);

  ModelConfig wider = toy.config;
  wider.dims.hidden_dim *= 2;
  CHECK_THROWS_AS(Model(wider, ref.params()), SchemaError);
}
