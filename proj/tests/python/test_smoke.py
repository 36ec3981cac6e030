import math

import numpy as np
import pytest

import survfuse as sf

SMALL = {
    "n_patients": 12,
    "c_in": 8,
    "genomic_widths": [3, 4, 3, 5, 2, 3],
    "patches_min": 3,
    "patches_max": 5,
}
TINY = {
    "hidden_dim": 8,
    "heads": 2,
    "token_dim": 4,
    "vocab_size": 64,
    "n_bins": 2,
    "accumulation_steps": 4,
    "learning_rate": 1e-3,
    "epochs": 1,
}


def test_losses_match_hand_values():
    h = np.full(3, 0.5)
    assert sf.nll_loss(h, 1, 0) == pytest.approx(1.386294, abs=1e-6)
    assert sf.bnll_loss(h, 1, 0, 3) == pytest.approx(2.079442, abs=1e-6)
    assert sf.risk_score(np.full(4, 0.5)) == pytest.approx(-0.9375)
    with pytest.raises(sf.SchemaError):
        sf.nll_loss(h, 3, 0)


def test_sinkhorn_marginals():
    rng = np.random.default_rng(0)
    cost = rng.uniform(0, 2, size=(3, 4))
    plan, iterations = sf.sinkhorn(cost)
    assert plan.shape == (3, 4)
    assert np.abs(plan.sum(axis=1) - 1 / 3).max() <= 1e-6
    assert np.abs(plan.sum(axis=0) - 1 / 4).max() <= 1e-6
    assert iterations >= 1
    with pytest.raises(sf.ConfigError):
        sf.sinkhorn(cost, eps=0.0)


def test_evaluation_functions():
    assert sf.concordance_index([2, 4, 6], [0, 0, 0], [0.9, 0.5, 0.1]) == 1.0
    km = sf.km_curve([1, 2, 3], [0, 0, 0])
    assert [s for _, s in km] == pytest.approx([2 / 3, 1 / 3, 0.0])
    r = sf.logrank_test([1, 3], [0, 0], [2, 4], [0, 0])
    assert r["chi2"] == pytest.approx(8 / 13)
    assert r["p"] == pytest.approx(math.erfc(math.sqrt(r["chi2"] / 2)), abs=1e-10)
    with pytest.raises(sf.EvalError):
        sf.concordance_index([1, 2], [1, 1], [0.0, 1.0])


def test_simulate_train_predict(tmp_path):
    cohort, truth = sf.simulate(SMALL, seed=3)
    assert len(cohort) == 12 and len(truth) == 12
    again, _ = sf.simulate(SMALL, seed=3)
    assert again.times == cohort.times

    manifest = cohort.save(tmp_path / "cohort")
    loaded = sf.load_cohort(manifest)
    assert loaded.ids == cohort.ids

    train_idx, val_idx = sf.split_folds(len(cohort), 3, 0)[0]
    ck = sf.train(cohort.subset(train_idx), cohort.subset(val_idx), TINY)
    assert ck.parameter_count > 0
    risks = sf.predict_risks(ck, cohort)
    assert len(risks) == 12 and all(math.isfinite(r) for r in risks)

    ck.save(tmp_path / "ck")
    back = sf.load_checkpoint(tmp_path / "ck")
    assert sf.predict_risks(back, cohort) == risks

    for table in sf.whatif(ck, cohort):
        rs = [row["risk"] for row in table["rows"]]
        assert len(rs) == 4
        assert rs[table["best"]] <= rs[table["actual"]] <= rs[table["worst"]]


def test_config_errors_surface():
    with pytest.raises(sf.ConfigError):
        sf.simulate({"no_such_key": 1})
    cohort, _ = sf.simulate(SMALL, seed=1)
    with pytest.raises(sf.ConfigError):
        sf.cross_validate(cohort, 1, TINY)


def test_gradcheck_and_self_test():
    good = sf.gradcheck(samples=4)
    assert good["passed"] and good["max_rel_error"] <= 1e-4
    assert not sf.gradcheck(samples=4, corrupt=2.0)["passed"]
