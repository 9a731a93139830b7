import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zlab import fit_rate
from zlab.curves import CurveRow, ErrorCurve
from zlab.errors import ConfigError, InputError, InvariantError
from zlab.harness import (
    PRESETS,
    assertion_holds,
    compute_curve,
    csv_body,
    curve_to_csv,
    decode_matrix,
    encode_matrix,
    load_config,
    parse_config,
    preset,
    preset_data,
    random_instance,
    run_experiment,
    stream_rng,
    worker_count,
)

FAST_GRID = {"n": [8, 16, 32], "gamma": [1.0, 2.0, 4.0], "s": [1.0]}


def fast(name, **overrides):
    data = preset_data(name)
    data["grid"] = {**data.get("grid", {}), **FAST_GRID}
    data.update(overrides)
    return parse_config(data)


class TestMatrices:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_round_trip(self, d, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        assert np.array_equal(decode_matrix(encode_matrix(m)), m)


class TestConfig:
    def test_all_presets_parse(self):
        for name in PRESETS:
            assert preset(name).instance is not None

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("nope")

    def test_error_names_field(self):
        data = preset_data("zeno_projective")
        data["instance"]["dimension"] = 40
        with pytest.raises(ConfigError, match="instance.dimension"):
            parse_config(data)

    def test_extra_field_rejected(self):
        data = preset_data("zeno_projective")
        data["bogus"] = 1
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(data)

    def test_bad_schedule_row_names_field(self):
        data = preset_data("zeno_projective")
        data["instance"]["schedule"] = {"kind": "custom", "rows": {"2": [0.5, 0.6]}}
        with pytest.raises(ConfigError, match="instance.schedule.rows"):
            parse_config(data)

    def test_single_kick_only_for_zeno(self):
        with pytest.raises(ConfigError, match="single_kick"):
            parse_config({**preset_data("unitary_kick"), "kind": "bounds"})

    def test_dim_i_required(self):
        data = preset_data("zeno_projective")
        del data["instance"]["dim_I"]
        with pytest.raises(ConfigError, match="dim_I"):
            parse_config(data)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(preset_data("zeno_contraction")))
        assert load_config(path) == preset("zeno_contraction")

    def test_load_missing_and_malformed(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)


class TestRandom:
    def test_streams_reproducible_and_distinct(self):
        a = stream_rng(7, 0).normal(size=4)
        assert np.array_equal(a, stream_rng(7, 0).normal(size=4))
        assert not np.array_equal(a, stream_rng(7, 1).normal(size=4))
        assert not np.array_equal(a, stream_rng(8, 0).normal(size=4))

    @pytest.mark.parametrize("kind", ["zeno", "bounds", "ergodic", "adiabatic"])
    def test_instances_validate(self, kind):
        data = random_instance(kind, 3, 1)
        assert data == random_instance(kind, 3, 1)
        grid = {"n": [8, 16], "gamma": [1.0, 2.0], "s": [1.0]}
        curve = compute_curve(parse_config({"kind": kind, "instance": data, "grid": grid, "seed": 3}), workers=1)
        assert len(curve.rows) == 2

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            random_instance("selftest", 0, 0)

    def test_seed_changes_random_run(self):
        inst = {"dimension": 3, "dim_I": 1, "random": {"index": 0}}
        base = {"kind": "bounds", "instance": inst, "grid": {"n": [8], "s": [1.0]}}
        a = compute_curve(parse_config({**base, "seed": 1}), workers=1).rows[0].measured
        b = compute_curve(parse_config({**base, "seed": 2}), workers=1).rows[0].measured
        assert a != b


class TestRuns:
    @pytest.mark.parametrize("name", [p for p in PRESETS if p != "adiabatic_unitary"])
    def test_presets_run_dominated(self, name):
        outcome = run_experiment(fast(name), workers=1)
        assert "# assertion bound>=measured: true" in outcome.csv_text

    def test_violation_raises_after_writing(self, tmp_path):
        out = tmp_path / "adiabatic.csv"
        cfg = fast("adiabatic_unitary", grid={"gamma": [16.0, 64.0]})
        with pytest.raises(InvariantError):
            run_experiment(cfg, out=out, workers=1)
        assert "assertion bound>=measured: false" in out.read_text()

    def test_worker_count_independence(self):
        cfg = fast("zeno_contraction")
        texts = {tuple(csv_body(compute_curve(cfg, workers=w))) for w in (1, 2, 4)}
        assert len(texts) == 1

    def test_csv_layout(self):
        cfg = fast("zeno_projective")
        text = curve_to_csv(compute_curve(cfg, workers=1), cfg, timestamp="T0")
        lines = text.splitlines()
        assert lines[0] == "# generated T0"
        assert json.loads(lines[1][len("# config "):])["kind"] == "zeno"
        assert lines[2] == "control,measured,bound,s"
        assert len(lines) == 3 + 3 + 1

    def test_ergodic_run(self):
        curve = compute_curve(parse_config({"kind": "ergodic", "instance": random_instance("ergodic", 0, 0),
                                            "grid": {"n": [8, 64, 512]}}), workers=1)
        errs = [r.measured for r in curve.rows]
        assert errs[-1] < errs[0]

    def test_selftest_kind_needs_no_instance(self):
        assert parse_config({"kind": "selftest"}).instance is None


class TestWorkers:
    def test_env(self, monkeypatch):
        monkeypatch.setenv("ZLAB_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.delenv("ZLAB_THREADS")
        assert 1 <= worker_count() <= 4

    @pytest.mark.parametrize("raw", ["0", "two", "-1"])
    def test_bad_env(self, monkeypatch, raw):
        monkeypatch.setenv("ZLAB_THREADS", raw)
        with pytest.raises(ConfigError):
            worker_count()


class TestAssertion:
    def test_modes(self):
        assert assertion_holds(ErrorCurve.from_rows([CurveRow(1.0, 0.5)])) is None
        assert assertion_holds(ErrorCurve.from_rows([CurveRow(1.0, 0.5, 0.6)])) is True
        assert assertion_holds(ErrorCurve.from_rows([CurveRow(1.0, 0.5, 0.4)])) is False
        paired = CurveRow(1.0, 0.5, None, {"x_measured": 2.0, "x_bound": 1.0})
        assert assertion_holds(ErrorCurve.from_rows([paired])) is False
        lone = CurveRow(1.0, 0.5, None, {"x_bound": 0.1})
        assert assertion_holds(ErrorCurve.from_rows([lone])) is False


class TestFitRate:
    def test_synthetic_first_order(self):
        rows = [CurveRow(float(n), 3.0 / n) for n in (8, 16, 32, 64)]
        c, p, r2 = fit_rate(ErrorCurve.from_rows(rows))
        assert c == pytest.approx(3.0) and p == pytest.approx(1.0) and r2 == pytest.approx(1.0)

    def test_flat(self):
        rows = [CurveRow(float(n), 0.2) for n in (8, 16, 32)]
        _, p, _ = fit_rate(ErrorCurve.from_rows(rows))
        assert p == pytest.approx(0.0, abs=1e-12)

    def test_too_few_rows(self):
        rows = [CurveRow(8.0, 1e-15), CurveRow(16.0, 0.1), CurveRow(32.0, 0.05)]
        with pytest.raises(InputError):
            fit_rate(ErrorCurve.from_rows(rows))

    def test_curve_validation(self):
        with pytest.raises(InputError):
            ErrorCurve((CurveRow(2.0, 0.1), CurveRow(1.0, 0.1)))
        with pytest.raises(InputError):
            ErrorCurve((CurveRow(1.0, -0.1),))
