import json
import math
import re

import numpy as np
import pytest

from memsched.prior_predictor import (BEAGLE_EXPR, FEATURES, ConformalMap, ExprError, FeatureVector, Formula,
                                      Standardizer, conformal_quantile, conservative_prior, coverage, eval_batch,
                                      eval_expr, fit_conformal, formula_prior, gen_synthetic_beagle, load_formula,
                                      parse_expr, save_formula, to_text, true_ram)
from memsched.prior_predictor.expr import guarded_div

import oracles

X0 = [0.0] * 8


def at(**kw):
    x = list(X0)
    for k, v in kw.items():
        x[int(k[1:])] = v
    return x


# -- parser and evaluator ----------------------------------------------------

def test_spec_expressions():
    assert eval_expr(parse_expr("abs(x0) + 1"), at(x0=-2.0)) == 3.0
    assert eval_expr(parse_expr("log(exp(x1))"), at(x1=5.0)) == pytest.approx(5.0, abs=1e-12)
    assert eval_expr(parse_expr("sqrt(x2*x2+0.0)"), at(x2=-3.0)) == 3.0


def test_precedence_and_associativity():
    assert eval_expr(parse_expr("2 + 3 * 4"), X0) == 14.0
    assert eval_expr(parse_expr("8 - 3 - 2"), X0) == 3.0
    assert eval_expr(parse_expr("8 / 4 / 2"), X0) == 1.0
    assert eval_expr(parse_expr("-2 * 3"), X0) == -6.0
    assert eval_expr(parse_expr("(2 + 3) * 4"), X0) == 20.0
    assert eval_expr(parse_expr("1e-3 * 2.5E2"), X0) == pytest.approx(0.25)


@pytest.mark.parametrize("text, fragment, offset", [
    ("x0 + @", "unexpected character", 5),
    ("x9 + 1", "unknown identifier", 0),
    ("foo(x1)", "unknown function", 0),
    ("abs(x1, x2)", "exactly 1 argument", 6),
    ("x0 +", "end of input", 4),
    ("(x0", "expected ')'", 3),
    ("x0 x1", "unexpected 'x1'", 3),
])
def test_parse_errors_carry_offsets(text, fragment, offset):
    with pytest.raises(ExprError, match=re.escape(fragment)) as info:
        parse_expr(text)
    assert info.value.offset == offset


def test_size_limits():
    with pytest.raises(ExprError, match="depth"):
        parse_expr("(" * 80 + "x0" + ")" * 80, max_depth=64)
    with pytest.raises(ExprError, match="nodes"):
        parse_expr(" + ".join(["x0"] * 300), max_nodes=512)


def test_unbound_constant():
    with pytest.raises(ExprError, match="not bound"):
        eval_expr(parse_expr("c0 + x0"), X0)


def test_round_trip_corpus():
    rng = np.random.default_rng(0)
    corpus = [oracles.random_expression(rng) for _ in range(150)] + [BEAGLE_EXPR]
    for text in corpus:
        tree = parse_expr(text)
        assert parse_expr(to_text(tree)) == tree, text


def test_guards():
    assert guarded_div(1.0, 0.0) == 1e12
    assert guarded_div(-1.0, 1e-13) == -1e12
    assert guarded_div(1.0, -0.0) == -1e12
    assert guarded_div(0.0, 0.0) == 0.0
    assert eval_expr(parse_expr("log(x0)"), at(x0=0.0)) == math.log(1e-12)
    assert eval_expr(parse_expr("log(x0)"), at(x0=-math.e)) == pytest.approx(1.0)
    assert eval_expr(parse_expr("sqrt(x0)"), at(x0=-4.0)) == 2.0
    assert math.isfinite(eval_expr(parse_expr("exp(x0)"), at(x0=1e6)))
    assert math.isfinite(eval_expr(parse_expr("log1p(x0)"), at(x0=-1.0)))


def test_evaluation_is_total_and_deterministic():
    rng = np.random.default_rng(1)
    consts = {f"c{k}": float(v) for k, v in enumerate(rng.normal(size=6))}
    exprs = [parse_expr(oracles.random_expression(rng)) for _ in range(100)]
    for tree in exprs:
        for _ in range(5):
            x = (rng.normal(size=8) * 10 ** rng.uniform(-3, 3)).tolist()
            a = eval_expr(tree, x, consts)
            assert not math.isnan(a)
            assert a == eval_expr(tree, x, consts)


def test_batch_matches_scalar():
    rng = np.random.default_rng(2)
    consts = {f"c{k}": float(v) for k, v in enumerate(rng.normal(size=6))}
    Z = rng.normal(size=(50, 8)) * 3
    for text in [BEAGLE_EXPR] + [oracles.random_expression(rng) for _ in range(40)]:
        tree = parse_expr(text)
        batch = eval_batch(tree, Z, consts)
        scalar = np.array([eval_expr(tree, z, consts) for z in Z])
        np.testing.assert_allclose(batch, scalar, rtol=1e-12, atol=1e-12, equal_nan=False)


def test_beagle_collapses_without_scale():
    tree = parse_expr(BEAGLE_EXPR)
    rng = np.random.default_rng(3)
    consts = {f"c{k}": float(v) for k, v in enumerate(rng.normal(size=6))} | {"c0": 0.0, "c5": 2.75}
    for _ in range(20):
        assert eval_expr(tree, rng.normal(size=8).tolist(), consts) == 2.75


def test_beagle_matches_hand_coded():
    tree = parse_expr(BEAGLE_EXPR)
    rng = np.random.default_rng(4)
    for _ in range(200):
        c = rng.normal(size=6).tolist()
        x = rng.normal(size=8).tolist()
        got = eval_expr(tree, x, {f"c{k}": v for k, v in enumerate(c)})
        want = oracles.beagle_g(x, c)
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


# -- standardizer and conformal map --------------------------------------------

def std3():
    return Standardizer(mu_x=(1.0, 2.0, 3.0), sigma_x=(0.5, 2.0, 4.0), mu_y=10.0, sigma_y=3.0)


def test_standardizer_examples():
    s = std3()
    assert s.standardize(np.array([1.0, 2.0, 3.0])).tolist() == [0.0, 0.0, 0.0]
    assert s.inverse_label(0.0) == 10.0
    rng = np.random.default_rng(5)
    y = rng.normal(size=100) * 50
    assert np.max(np.abs(s.inverse_label(s.standardize_label(y)) - y)) < 1e-9
    with pytest.raises(ValueError):
        Standardizer(mu_x=(0.0,), sigma_x=(0.0,), mu_y=0.0, sigma_y=1.0)
    with pytest.raises(ValueError):
        Standardizer(mu_x=(0.0,), sigma_x=(1.0,), mu_y=0.0, sigma_y=-1.0)
    assert Standardizer.from_dict(s.to_dict()) == s


def test_standardizer_from_data_and_isometry():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(200, 3)) * [1, 5, 9] + [3, -2, 7]
    y = rng.normal(size=200) * 4 + 20
    s = Standardizer.from_data(X, y)
    Z = s.standardize(X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=0), 1, atol=1e-12)
    pred_std = rng.normal(size=50)
    r = np.corrcoef(pred_std, s.inverse_label(pred_std))[0, 1]
    assert r == pytest.approx(1.0, abs=1e-12)


def test_conformal_quantile_rank():
    v = list(range(1, 11))  # ceil(11 * 0.8) = 9
    assert conformal_quantile(v, 0.2) == 9
    assert conformal_quantile(v, 0.01) == 10


def test_conformal_map_interpolation_and_extrapolation():
    cmap = ConformalMap(((1.0, 2.0), (3.0, 6.0)), 0.2)
    assert cmap(0.0) == 2.0  # flat below
    assert cmap(2.0) == 4.0
    assert cmap(5.0) == 10.0  # last slope above
    with pytest.raises(ValueError):
        ConformalMap(((1.0, 2.0), (1.0, 3.0)), 0.2)
    with pytest.raises(ValueError):
        ConformalMap(((1.0, 3.0), (2.0, 2.0)), 0.2)
    assert ConformalMap.from_dict(cmap.to_dict()) == cmap


def test_zero_residual_pairs_give_identity():
    y = np.linspace(10, 100, 400)
    cmap = fit_conformal(np.column_stack([y, y]), 0.2)
    spread = (y[-1] - y[0]) / 16  # one bin width
    for v in np.linspace(15, 95, 20):
        assert abs(cmap(v) - v) <= spread


def test_heteroscedastic_coverage():
    rng = np.random.default_rng(7)

    def draw(n):
        y_hat = rng.uniform(1, 100, n)
        return y_hat, y_hat * (1 + np.abs(rng.normal(0, 0.1 * y_hat / 100)))

    cmap = fit_conformal(np.column_stack(draw(2000)), 0.2)
    y_hat, y = draw(20000)
    cov = float(np.mean(y <= cmap(y_hat)))
    assert 0.78 <= cov <= 0.88


def test_map_is_monotone():
    rng = np.random.default_rng(8)
    y_hat = rng.uniform(0, 50, 500)
    cmap = fit_conformal(np.column_stack([y_hat, y_hat + rng.normal(0, 10, 500)]), 0.2)
    grid = np.linspace(-20, 90, 1000)
    assert np.all(np.diff(cmap(grid)) >= 0)


def test_fit_conformal_errors():
    with pytest.raises(ValueError, match="insufficient calibration data"):
        fit_conformal([(1.0, 1.0)] * 19, 0.2)
    with pytest.raises(ValueError):
        fit_conformal([(1.0, 1.0)] * 30, 1.0)


# -- synthetic generator and the full pipeline --------------------------------

def fv(**kw):
    base = dict(Thr=1, Burn=3, Iter=12, Win=40, V=1e5, S=3e3, V_ref=1e6, S_ref=2500)
    return FeatureVector(**(base | kw))


def test_generator_range_endpoints():
    assert 5000 <= true_ram(fv(V=1e4, S=1e3)) <= 5500
    assert 750_000 <= true_ram(fv(V=1e7, S=1e4)) <= 800_000


def test_generator_monotone_and_seeded():
    vs = np.logspace(4, 7, 30)
    ys = [true_ram(fv(V=v)) for v in vs]
    assert all(b >= a for a, b in zip(ys, ys[1:]))
    for key in ("S", "V_ref", "S_ref"):
        lo, hi = {"S": (1e3, 1e4), "V_ref": (1e5, 1e7), "S_ref": (500, 2500)}[key]
        assert true_ram(fv(**{key: lo})) < true_ram(fv(**{key: hi}))
    a, b = gen_synthetic_beagle(50, 3), gen_synthetic_beagle(50, 3)
    assert a == b
    assert a != gen_synthetic_beagle(50, 4)
    clean = gen_synthetic_beagle(20, 3, noise=0.0)
    assert all(y == true_ram(x) for x, y in clean)
    with pytest.raises(ValueError):
        gen_synthetic_beagle(0, 1)


def test_feature_vector_parse():
    x = FeatureVector.parse("Thr=4,Burn=3,Iter=10,Win=20,V=1e5,S=2000,V_ref=1e6,S_ref=1000")
    assert x.Thr == 4 and x.V == 1e5
    for bad in ("Thr=4", "Thr=4,Thr=5,Burn=3,Iter=10,Win=20,V=1e5,S=2000,V_ref=1e6,S_ref=1000",
                "Bogus=1,Thr=4,Burn=3,Iter=10,Win=20,V=1e5,S=2000,V_ref=1e6,S_ref=1000"):
        with pytest.raises(ValueError):
            FeatureVector.parse(bad)
    with pytest.raises(ValueError):
        fv(V=0.5)
    assert len(FEATURES) == 8


def test_shipped_formula_loads_and_is_calibrated():
    formula = load_formula()
    assert formula.expression == BEAGLE_EXPR
    assert formula.conformal is not None and formula.conformal.alpha == 0.2
    x = fv()
    assert formula_prior(formula, x) >= 1.0
    raw = formula.raw_mb(x)
    assert raw == pytest.approx(formula.raw_mb_batch([x.as_array()])[0], rel=1e-12)


def test_identity_map_gives_raw_prediction():
    formula = load_formula()
    ident = ConformalMap.identity(-1e9, 1e9)
    x = fv(V=2e6)
    got = conservative_prior(formula.tree, formula.standardizer, ident, x, formula.constants)
    assert got == pytest.approx(max(formula.raw_mb(x), 1.0), rel=1e-12)


def test_prior_monotone_in_raw_prediction():
    formula = load_formula()
    xs = [x for x, _ in gen_synthetic_beagle(200, 9)]
    pairs = sorted((formula.raw_mb(x), formula_prior(formula, x)) for x in xs)
    assert all(b[1] >= a[1] for a, b in zip(pairs, pairs[1:]))


def test_shipped_formula_covers_fresh_data():
    assert coverage(load_formula(), gen_synthetic_beagle(2000, 101)) >= 0.77


def test_formula_file_round_trip(tmp_path):
    formula = load_formula()
    save_formula(formula, tmp_path / "f.json", header={"seed": 0})
    data = json.loads((tmp_path / "f.json").read_text())
    assert data["_config"] == {"seed": 0}
    assert set(data) >= {"expression", "constants", "standardizer", "conformal"}
    assert load_formula(tmp_path / "f.json") == formula
    with pytest.raises(ValueError, match="unbound"):
        Formula("c0 * x0 + c1", {"c0": 1.0}, formula.standardizer)
    with pytest.raises(ValueError, match="calibrate"):
        formula_prior(Formula(formula.expression, formula.constants, formula.standardizer), fv())
