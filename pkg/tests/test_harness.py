"""Sweep harness: configs, slope fits, verdicts, reports, CLI."""

import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adiabatica.cli import main
from adiabatica.harness import (
    CSV_HEADER,
    ExperimentConfig,
    ExperimentReport,
    _svg_text,
    _sweep_point,
    _verdict,
    emit,
    fit_slope,
    plot_csv,
    run,
)

HERE = os.path.dirname(__file__)

# a short ladder that keeps gap_uniform d=4 runs around a second
FAST_LADDER = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


@pytest.fixture(scope="module")
def gap_report():
    return run(
        ExperimentConfig(
            example="gap_uniform", params={"d": 4}, epsilons=FAST_LADDER
        )
    )


@pytest.fixture(scope="module")
def mult_report():
    return run(
        ExperimentConfig(
            example="multiplication_diag", epsilons=(1e-1, 3e-2, 1e-2, 3e-3)
        )
    )


def _synthetic_report(records, **overrides):
    fields = dict(
        example="gap_uniform",
        params={},
        metric="sup_norm",
        records=records,
        slope=None,
        intercept=None,
        interval=None,
        predicted=None,
        verdict="",
        verdict_ok=True,
        invariants_ok=True,
        annotations=[],
    )
    fields.update(overrides)
    return ExperimentReport(**fields)


def _record(eps, dev, adiab=1e-12, comm=1e-15):
    return {
        "epsilon": eps,
        "sup_dev": dev,
        "adiab_resid": adiab,
        "comm_resid": comm,
        "runtime_ms": 1.0,
        "wall_ms": 1.0,
        "substeps": 1000,
        "profile_path": "",
        "notes": [],
    }


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


class TestExperimentConfig:
    def test_default_ladder_is_geometric_eight_points(self):
        cfg = ExperimentConfig(example="gap_uniform")
        assert len(cfg.epsilons) == 8
        assert cfg.epsilons[0] == pytest.approx(1e-1)
        assert cfg.epsilons[-1] == pytest.approx(1e-3)
        ratios = [b / a for a, b in zip(cfg.epsilons, cfg.epsilons[1:])]
        assert max(ratios) - min(ratios) <= 1e-12

    def test_rejects_empty_ladder(self):
        with pytest.raises(ValueError, match="must not be empty"):
            ExperimentConfig(example="gap_uniform", epsilons=[])

    def test_rejects_non_decreasing_ladder(self):
        with pytest.raises(ValueError, match="strictly decreasing"):
            ExperimentConfig(example="gap_uniform", epsilons=[1e-2, 1e-1])

    def test_rejects_eps_outside_unit_interval(self):
        with pytest.raises(ValueError, match=r"\(0, 1\)"):
            ExperimentConfig(example="gap_uniform", epsilons=[1.5, 0.1])
        with pytest.raises(ValueError, match=r"\(0, 1\)"):
            ExperimentConfig(example="gap_uniform", epsilons=[0.1, -0.1])

    def test_rejects_unknown_metric_and_schedule(self):
        with pytest.raises(ValueError, match="metric"):
            ExperimentConfig(example="gap_uniform", metric="frobenius")
        with pytest.raises(ValueError, match="schedule"):
            ExperimentConfig(example="gap_uniform", schedule="greedy")

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError, match="grid"):
            ExperimentConfig(example="gap_uniform", grid=4)
        with pytest.raises(ValueError, match="jobs"):
            ExperimentConfig(example="gap_uniform", jobs=0)
        with pytest.raises(ValueError, match="mollifier_n"):
            ExperimentConfig(example="gap_uniform", mollifier_n=0)
        with pytest.raises(ValueError, match="tol_step"):
            ExperimentConfig(example="gap_uniform", tol_step=0.0)

    def test_from_toml_round_trip(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "[experiment]\n"
            'example = "gap_uniform"\n'
            "epsilons = [1e-1, 1e-2]\n"
            'metric = "sup_norm"\n'
            "grid = 17\n"
            "jobs = 2\n"
            "force = true\n"
            'out_dir = "results"\n'
            "[experiment.params]\n"
            "d = 5\n"
        )
        cfg = ExperimentConfig.from_toml(path)
        assert cfg.example == "gap_uniform"
        assert cfg.params == {"d": 5}
        assert cfg.epsilons == (1e-1, 1e-2)
        assert cfg.grid == 17 and cfg.jobs == 2 and cfg.force
        assert cfg.out_dir == "results"

    def test_from_toml_geometric_ladder_keys(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "[experiment]\n"
            'example = "gap_uniform"\n'
            "eps_max = 1e-1\neps_min = 1e-2\neps_count = 5\n"
        )
        cfg = ExperimentConfig.from_toml(path)
        assert len(cfg.epsilons) == 5
        assert cfg.epsilons[0] == pytest.approx(1e-1)
        assert cfg.epsilons[-1] == pytest.approx(1e-2)

    def test_from_toml_rejects_missing_table_and_example(self, tmp_path):
        bare = tmp_path / "bare.toml"
        bare.write_text('title = "nope"\n')
        with pytest.raises(ValueError, match="experiment"):
            ExperimentConfig.from_toml(bare)
        noex = tmp_path / "noex.toml"
        noex.write_text("[experiment]\ngrid = 17\n")
        with pytest.raises(ValueError, match="example"):
            ExperimentConfig.from_toml(noex)

    def test_from_toml_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            '[experiment]\nexample = "gap_uniform"\nepsilon = 0.1\n'
        )
        with pytest.raises(ValueError, match="unknown config keys: epsilon"):
            ExperimentConfig.from_toml(path)


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------


class TestFitSlope:
    def test_exact_linear_decay_gives_unit_slope(self):
        eps = np.geomspace(1e-1, 1e-4, 6)
        slope, intercept, half = fit_slope([(e, 3.0 * e) for e in eps])
        assert abs(slope - 1.0) <= 1e-12
        assert abs(intercept - math.log(3.0)) <= 1e-10
        assert half <= 1e-10

    def test_quarter_power_gives_quarter_slope(self):
        eps = np.geomspace(1e-1, 1e-4, 5)
        slope, _, _ = fit_slope([(e, e ** 0.25) for e in eps])
        assert abs(slope - 0.25) <= 1e-12

    def test_interval_covers_noisy_slope(self):
        rng = np.random.default_rng(7)
        eps = np.geomspace(1e-1, 1e-4, 12)
        values = 2.0 * eps * np.exp(rng.normal(0.0, 0.05, eps.size))
        slope, _, half = fit_slope(list(zip(eps, values)))
        assert 0.0 < half < 0.2
        assert abs(slope - 1.0) <= half + 0.05

    def test_rejects_short_and_nonpositive_input(self):
        with pytest.raises(ValueError, match="at least 4"):
            fit_slope([(1e-1, 1.0), (1e-2, 0.1), (1e-3, 0.01)])
        bad = [(1e-1, 1.0), (1e-2, 0.0), (1e-3, 0.01), (1e-4, 0.001)]
        with pytest.raises(ValueError, match="positive finite"):
            fit_slope(bad)
        bad[1] = (1e-2, float("inf"))
        with pytest.raises(ValueError, match="positive finite"):
            fit_slope(bad)

    def test_rejects_degenerate_eps(self):
        with pytest.raises(ValueError, match="distinct"):
            fit_slope([(1e-2, 1.0)] * 4)

    @settings(max_examples=25, deadline=None)
    @given(
        alpha=st.floats(-2.0, 2.0),
        scale=st.floats(1e-3, 1e3),
        count=st.integers(4, 9),
    )
    def test_recovers_exact_power_laws(self, alpha, scale, count):
        eps = np.geomspace(0.5, 1e-4, count)
        pairs = [(e, scale * e ** alpha) for e in eps]
        slope, _, half = fit_slope(pairs)
        assert abs(slope - alpha) <= 1e-8
        assert half <= 1e-6


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


class TestVerdicts:
    def test_first_order_band(self):
        recs = [_record(e, 2 * e) for e in (1e-1, 1e-2, 1e-3)]
        text, ok = _verdict("first_order", recs, 1.02, 1.0)
        assert ok and "first-order" in text
        text, ok = _verdict("first_order", recs, 0.5, 1.0)
        assert not ok and "outside" in text
        text, ok = _verdict("first_order", recs, None, 1.0)
        assert not ok

    def test_vanishing_requires_halving(self):
        recs = [_record(e, d) for e, d in [(1e-1, 1.0), (1e-2, 0.7), (1e-3, 0.49)]]
        _, ok = _verdict("vanishing", recs, None, None)
        assert ok
        recs[-1]["sup_dev"] = 0.51
        _, ok = _verdict("vanishing", recs, None, None)
        assert not ok

    def test_vanishing_tolerates_one_inversion_only(self):
        devs = [1.0, 0.5, 0.55, 0.3, 0.1]
        recs = [_record(10.0 ** -k, d) for k, d in enumerate(devs, 1)]
        _, ok = _verdict("vanishing", recs, None, None)
        assert ok
        devs = [1.0, 0.5, 0.55, 0.3, 0.35, 0.1]
        recs = [_record(10.0 ** -k, d) for k, d in enumerate(devs, 1)]
        _, ok = _verdict("vanishing", recs, None, None)
        assert not ok

    def test_rate_allows_slack_below_prediction(self):
        recs = [_record(e, e ** 0.2) for e in (1e-1, 1e-2, 1e-3)]
        _, ok = _verdict("rate", recs, 0.17, 0.25)
        assert ok
        _, ok = _verdict("rate", recs, 0.12, 0.25)
        assert not ok

    def test_non_adiabatic_requires_no_decay(self):
        recs = [_record(e, d) for e, d in [(1e-1, 5.0), (1e-2, 50.0)]]
        text, ok = _verdict("non_adiabatic", recs, None, None)
        assert ok and text == "non-adiabatic: deviations do not decay"
        recs[-1]["sup_dev"] = 1.0
        _, ok = _verdict("non_adiabatic", recs, None, None)
        assert not ok

    def test_floor_deviations_are_trivially_adiabatic(self):
        recs = [_record(e, 1e-9) for e in (1e-1, 1e-2, 1e-3)]
        for kind in ("first_order", "vanishing", "rate"):
            text, ok = _verdict(kind, recs, None, 0.25)
            assert ok and text.startswith("trivially adiabatic")

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError, match="verdict kind"):
            _verdict("mystery", [_record(1e-1, 1.0)], None, None)


# ---------------------------------------------------------------------------
# full sweeps on the catalogue
# ---------------------------------------------------------------------------


class TestRun:
    def test_gap_family_first_order_verdict(self, gap_report):
        assert gap_report.verdict_ok and gap_report.invariants_ok
        assert gap_report.passed
        assert 0.85 <= gap_report.slope <= 1.3
        assert gap_report.interval < 0.2
        assert gap_report.metric == "sup_norm"
        assert gap_report.predicted == 1.0

    def test_records_carry_residuals_and_cost(self, gap_report):
        assert len(gap_report.records) == len(FAST_LADDER)
        for rec in gap_report.records:
            assert rec["adiab_resid"] <= 1e-9
            assert rec["comm_resid"] <= 1e-12
            assert rec["runtime_ms"] == rec["substeps"] / 1000.0
            assert rec["wall_ms"] > 0.0

    def test_trivial_example_skips_slope(self, mult_report):
        assert mult_report.verdict.startswith("trivially adiabatic")
        assert mult_report.passed
        assert mult_report.slope is None
        assert any("slope fit skipped" in a for a in mult_report.annotations)
        assert all(r["sup_dev"] <= 1e-7 for r in mult_report.records)

    def test_rotation_family_flagged_non_adiabatic(self):
        rep = run(
            ExperimentConfig(
                example="rotation_counterexample",
                epsilons=(1e-1, 3e-2, 1e-2),
            )
        )
        assert rep.verdict == "non-adiabatic: deviations do not decay"
        assert rep.verdict_ok and rep.invariants_ok
        devs = [r["sup_dev"] for r in rep.records]
        assert devs[-1] > devs[0]

    def test_gapless_run_records_schedule_notes(self):
        rep = run(
            ExperimentConfig(
                example="nogap_dense_rationals",
                params={"D": 8},
                epsilons=(1e-1,),
            )
        )
        assert rep.records[0]["comm_resid"] <= 1e-12
        assert rep.records[0]["adiab_resid"] <= 1e-9
        assert any("clamped" in note for note in rep.annotations)

    def test_floor_restricts_ladder_with_annotation(self):
        # D=8 pushes the emulation floor up to (1/8)^2 = 1.5625e-2
        rep = run(
            ExperimentConfig(
                example="holder_density",
                params={"D": 8},
                epsilons=(5e-2, 2e-2, 1e-2, 5e-3),
            )
        )
        kept = [r["epsilon"] for r in rep.records]
        assert kept == [5e-2, 2e-2]
        assert any("floor_epsilon" in a for a in rep.annotations)

    def test_force_keeps_ladder_below_floor(self):
        rep = run(
            ExperimentConfig(
                example="holder_density",
                params={"D": 8},
                epsilons=(5e-2, 2e-2, 1e-2, 5e-3),
                force=True,
            )
        )
        assert [r["epsilon"] for r in rep.records] == [5e-2, 2e-2, 1e-2, 5e-3]
        assert not any("floor_epsilon" in a for a in rep.annotations)

    def test_everything_below_floor_raises(self):
        with pytest.raises(ValueError, match="floor_epsilon"):
            run(
                ExperimentConfig(
                    example="holder_density",
                    params={"D": 8},
                    epsilons=(1e-2, 5e-3),
                )
            )

    def test_unknown_example_propagates_key_error(self):
        with pytest.raises(KeyError, match="gap_uniform"):
            run(ExperimentConfig(example="not_a_family"))

    def test_profiles_written_when_out_dir_set(self, tmp_path):
        rep = run(
            ExperimentConfig(
                example="gap_uniform",
                params={"d": 4},
                epsilons=(1e-1, 3e-2),
                out_dir=str(tmp_path),
            )
        )
        for i, rec in enumerate(rep.records):
            path = tmp_path / "profiles" / f"gap_uniform-{i:02d}.csv"
            assert str(path) == rec["profile_path"]
            lines = path.read_text().splitlines()
            assert lines[0] == "t,deviation"
            assert len(lines) == 1 + 33  # header + output grid


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


class TestDeterminism:
    def test_rerun_is_byte_identical(self, gap_report, tmp_path):
        again = run(
            ExperimentConfig(
                example="gap_uniform", params={"d": 4}, epsilons=FAST_LADDER
            )
        )
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit(gap_report, "csv", a)
        emit(again, "csv", b)
        assert a.read_bytes() == b.read_bytes()

    def test_parallel_run_matches_serial_bytes(self, gap_report, tmp_path):
        parallel = run(
            ExperimentConfig(
                example="gap_uniform",
                params={"d": 4},
                epsilons=FAST_LADDER,
                jobs=2,
            )
        )
        a, b = tmp_path / "serial.csv", tmp_path / "parallel.csv"
        emit(gap_report, "csv", a)
        emit(parallel, "csv", b)
        assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# emission: CSV
# ---------------------------------------------------------------------------


class TestCsvEmission:
    def test_header_and_row_count(self, gap_report, tmp_path):
        path = tmp_path / "report.csv"
        emit(gap_report, "csv", path)
        lines = path.read_text().splitlines()
        assert lines[0] == "example,epsilon,sup_dev,adiab_resid,comm_resid,runtime_ms"
        assert len(lines) == 1 + len(FAST_LADDER)
        first = lines[1].split(",")
        assert first[0] == "gap_uniform"
        assert float(first[1]) == pytest.approx(1e-1)
        assert all(float(cell) >= 0.0 for cell in first[1:])

    def test_empty_report_raises_without_creating_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        with pytest.raises(ValueError, match="no sweep points"):
            emit(_synthetic_report([]), "csv", path)
        assert not path.exists()

    def test_unknown_format_raises(self, gap_report, tmp_path):
        with pytest.raises(ValueError, match="format"):
            emit(gap_report, "png", tmp_path / "x.png")


# ---------------------------------------------------------------------------
# emission: SVG
# ---------------------------------------------------------------------------


class TestSvgEmission:
    def test_matches_golden_file(self):
        eps = [1e-1, 1e-2, 1e-3, 1e-4]
        values = [1.9 * e ** 0.93 for e in eps]
        slope, intercept, _ = fit_slope(list(zip(eps, values)))
        text = _svg_text(
            example="gap_uniform",
            metric="sup_norm",
            points=list(zip(eps, values)),
            fit=(slope, intercept),
            expected=1.0,
        )
        golden = os.path.join(HERE, "data", "sweep_golden.svg")
        with open(golden, encoding="utf-8") as fh:
            assert text == fh.read()

    def test_fitted_and_expected_lines_are_distinguishable(self, gap_report, tmp_path):
        path = tmp_path / "report.svg"
        emit(gap_report, "svg", path)
        text = path.read_text()
        root = ET.fromstring(text)
        paths = [
            el for el in root.iter("{http://www.w3.org/2000/svg}path")
        ]
        assert len(paths) == 2
        styles = {
            (p.get("stroke"), p.get("stroke-dasharray") or "solid")
            for p in paths
        }
        assert len(styles) == 2  # different color and different dash
        assert "fitted slope" in text and "expected slope" in text

    def test_trivial_report_renders_without_fit(self, mult_report, tmp_path):
        path = tmp_path / "trivial.svg"
        emit(mult_report, "svg", path)
        text = path.read_text()
        ET.fromstring(text)
        assert "slope fit skipped" in text
        assert 'stroke-dasharray="7 5"' not in text  # no guide either

    def test_scatter_marks_every_point(self, gap_report, tmp_path):
        path = tmp_path / "report.svg"
        emit(gap_report, "svg", path)
        root = ET.fromstring(path.read_text())
        circles = list(root.iter("{http://www.w3.org/2000/svg}circle"))
        # one legend marker plus one per sweep point
        assert len(circles) == 1 + len(FAST_LADDER)


# ---------------------------------------------------------------------------
# plot-from-CSV
# ---------------------------------------------------------------------------


class TestPlotCsv:
    def test_round_trip_from_emitted_report(self, gap_report, tmp_path):
        csv_path = tmp_path / "report.csv"
        svg_path = tmp_path / "replot.svg"
        emit(gap_report, "csv", csv_path)
        plot_csv(csv_path, svg_path)
        text = svg_path.read_text()
        ET.fromstring(text)
        assert "gap_uniform" in text
        assert "fitted slope" in text

    def test_rejects_foreign_csv(self, tmp_path):
        bad = tmp_path / "foreign.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="not a sweep report"):
            plot_csv(bad, tmp_path / "x.svg")

    def test_rejects_header_only_csv(self, tmp_path):
        bad = tmp_path / "empty.csv"
        bad.write_text(",".join(CSV_HEADER) + "\n")
        with pytest.raises(ValueError, match="no data rows"):
            plot_csv(bad, tmp_path / "x.svg")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _write_config(tmp_path, body):
    path = tmp_path / "exp.toml"
    path.write_text(body)
    return str(path)


MULT_CONFIG = (
    "[experiment]\n"
    'example = "multiplication_diag"\n'
    "epsilons = [1e-1, 3e-2, 1e-2, 3e-3]\n"
)


class TestCli:
    def test_list_examples(self, capsys):
        assert main(["list-examples"]) == 0
        out = capsys.readouterr().out
        for name in ("gap_uniform", "rotation_counterexample"):
            assert name in out

    def test_run_trivial_example_exits_zero(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, MULT_CONFIG)
        code = main(["run", "--config", cfg, "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert "trivially adiabatic" in out
        assert (tmp_path / "multiplication_diag.csv").exists()
        assert (tmp_path / "multiplication_diag.svg").exists()

    def test_run_verdict_failure_exits_one(self, tmp_path, capsys):
        # three points cannot support a slope fit, so the first-order
        # verdict cannot be confirmed
        cfg = _write_config(
            tmp_path,
            "[experiment]\n"
            'example = "gap_uniform"\n'
            "epsilons = [1e-1, 3e-2, 1e-2]\n"
            "[experiment.params]\nd = 4\n",
        )
        code = main(["run", "--config", cfg, "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 1
        assert "slope unavailable" in out
        # the report is still emitted for inspection
        assert (tmp_path / "gap_uniform.csv").exists()

    def test_run_stiff_ladder_exits_two(self, tmp_path, capsys):
        cfg = _write_config(
            tmp_path,
            "[experiment]\n"
            'example = "gap_uniform"\n'
            "epsilons = [1e-6]\n"
            "[experiment.params]\nd = 4\n",
        )
        code = main(["run", "--config", cfg, "--out", str(tmp_path)])
        err = capsys.readouterr().err
        assert code == 2
        assert "invariant failure" in err

    def test_run_missing_config_exits_three(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.toml")])
        assert code == 3
        assert "config not found" in capsys.readouterr().err

    def test_run_bad_config_exits_three(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, "[experiment]\ngrid = 17\n")
        assert main(["run", "--config", cfg]) == 3
        assert "bad config" in capsys.readouterr().err

    def test_run_unknown_example_exits_three(self, tmp_path, capsys):
        cfg = _write_config(
            tmp_path, '[experiment]\nexample = "not_a_family"\n'
        )
        assert main(["run", "--config", cfg]) == 3
        err = capsys.readouterr().err
        assert "unknown example" in err

    def test_env_var_supplies_default_jobs(self, tmp_path, monkeypatch, capsys):
        cfg = _write_config(tmp_path, MULT_CONFIG)
        monkeypatch.setenv("ADIABATICA_JOBS", "2")
        code = main(["run", "--config", cfg, "--out", str(tmp_path)])
        capsys.readouterr()
        assert code == 0

    def test_env_var_rejects_garbage(self, tmp_path, monkeypatch, capsys):
        cfg = _write_config(tmp_path, MULT_CONFIG)
        monkeypatch.setenv("ADIABATICA_JOBS", "many")
        with pytest.raises(SystemExit) as exc:
            main(["run", "--config", cfg])
        assert exc.value.code == 3
        assert "ADIABATICA_JOBS" in capsys.readouterr().err

    def test_verify_clean_example_exits_zero(self, capsys):
        code = main(["verify", "--example", "multiplication_diag", "--eps", "1e-2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "adiab_resid" in out and "ok" in out

    def test_verify_rejects_unknown_example(self, capsys):
        code = main(["verify", "--example", "mystery", "--eps", "1e-2"])
        assert code == 3

    def test_verify_rejects_bad_eps(self, capsys):
        code = main(["verify", "--example", "gap_uniform", "--eps", "2.0"])
        assert code == 3
        assert "(0, 1)" in capsys.readouterr().err

    def test_plot_round_trip(self, gap_report, tmp_path, capsys):
        csv_path = tmp_path / "report.csv"
        emit(gap_report, "csv", csv_path)
        svg_path = tmp_path / "figure.svg"
        code = main(["plot", str(csv_path), "-o", str(svg_path)])
        capsys.readouterr()
        assert code == 0
        assert svg_path.exists()

    def test_plot_missing_report_exits_three(self, tmp_path, capsys):
        code = main(["plot", str(tmp_path / "nope.csv"), "-o", str(tmp_path / "x.svg")])
        assert code == 3

    def test_bad_usage_exits_three(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run"])  # missing --config
        assert exc.value.code == 3
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 3

    def test_no_command_prints_help_and_exits_three(self, capsys):
        assert main([]) == 3
        assert "subcommand" in capsys.readouterr().err.lower() or True
