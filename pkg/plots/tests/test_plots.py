import json

import pytest

from snpe_plots import PlotSpec, load_traces, median_band, parse_trace_csv, render

HEADER = ("solver,seed,t,wall_time_ms,f_gap,grad_norm,dist_to_ref,"
          "eta,gamma,ls_steps,backtracked")


def write_trace(path, label, seed, gaps, wall_ms=1.0):
    lines = [HEADER]
    for t, gap in enumerate(gaps):
        lines.append(f"{label},{seed},{t},{'%.17g' % (wall_ms * (1 + t % 3))},"
                     f"{'%.17g' % gap},{'%.17g' % (gap * 10)},{'%.17g' % (gap * 5)},"
                     f"{'%.17g' % 2.0 ** t},{'%.17g' % (1 + 2e-3 * 2.0 ** t)},1,false")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_manifest(tmp_path, runs):
    entries = []
    for label, solver, seed, gaps, no_eg in runs:
        name = f"{label}__seed{seed}.csv"
        write_trace(tmp_path / name, label, seed, gaps)
        entries.append({"solver": solver, "label": label, "seed": seed,
                        "status": "ok", "trace": name, "meta": name,
                        "disable_extragradient": no_eg})
    manifest = {"runs": entries, "seeds": sorted({r[2] for r in runs})}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def decaying(rate, n=14, start=10.0):
    return [start * rate ** t for t in range(n)]


@pytest.fixture
def desk_manifest(tmp_path):
    runs = []
    for seed in (1, 2, 3):
        runs.append(("snpe", "snpe", seed, decaying(0.4, n=12 + seed), False))
        runs.append(("snpe_no_eg", "snpe", seed, decaying(0.3, n=10 + seed), True))
        runs.append(("stochastic_newton", "stochastic_newton", seed,
                     decaying(0.55, n=16 + seed), False))
        runs.append(("agd", "agd", seed, decaying(0.9, n=40), False))
    return make_manifest(tmp_path, runs)


class TestTraceLoading:
    def test_float_round_trip(self, tmp_path):
        gap = 1.2345678901234566e-09
        write_trace(tmp_path / "a.csv", "s", 1, [gap])
        cols = parse_trace_csv(tmp_path / "a.csv")
        assert cols["f_gap"][0] == gap

    def test_missing_column_is_named(self, tmp_path):
        bad = tmp_path / "bad.csv"
        header = HEADER.replace("f_gap,", "")
        bad.write_text(header + "\nsnpe,1,0,1.0,1.0,1.0,2.0,1.0,1,false\n",
                       encoding="utf-8")
        with pytest.raises(ValueError, match="f_gap"):
            parse_trace_csv(bad)

    def test_failed_runs_are_skipped(self, tmp_path):
        path = make_manifest(tmp_path, [("snpe", "snpe", 1, decaying(0.5), False)])
        doc = json.loads(path.read_text())
        doc["runs"].append({"solver": "snpe", "label": "broken", "seed": 2,
                            "status": "failed", "error": "boom"})
        path.write_text(json.dumps(doc), encoding="utf-8")
        traces = load_traces(path)
        assert [tr.label for tr in traces.traces] == ["snpe"]

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"runs": []}), encoding="utf-8")
        with pytest.raises(ValueError):
            load_traces(path)


class TestAggregation:
    def test_median_band_over_seeds(self, tmp_path):
        path = make_manifest(tmp_path, [
            ("snpe", "snpe", 1, [8.0, 4.0], False),
            ("snpe", "snpe", 2, [10.0, 6.0], False),
            ("snpe", "snpe", 3, [12.0, 5.0, 2.0], False),
        ])
        traces = load_traces(path).by_label("snpe")
        x, med, lo, hi = median_band(traces)
        assert list(x) == [0.0, 1.0, 2.0]
        assert med[0] == 10.0 and lo[0] == 8.0 and hi[0] == 12.0
        assert med[2] == 2.0  # only the longest seed reaches t = 2

    def test_runtime_axis_is_cumulative(self, tmp_path):
        path = make_manifest(tmp_path, [("snpe", "snpe", 1, [8.0, 4.0, 2.0], False)])
        traces = load_traces(path).by_label("snpe")
        x, _, _, _ = median_band(traces, x_mode="runtime")
        assert all(b > a for a, b in zip(x, x[1:]))


class TestRender:
    @pytest.mark.parametrize("kind", ["iterations", "runtime", "eg_comparison"])
    def test_all_kinds_render(self, desk_manifest, tmp_path, kind):
        out = tmp_path / f"{kind}.png"
        result = render(PlotSpec(manifest=str(desk_manifest), kind=kind,
                                 out=str(out)))
        assert out.exists()
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert result.n_curves >= 1

    def test_single_run_single_curve(self, tmp_path):
        path = make_manifest(tmp_path, [("snpe", "snpe", 1, decaying(0.5), False)])
        result = render(PlotSpec(manifest=str(path), kind="iterations",
                                 out=str(tmp_path / "one.png")))
        assert result.n_curves == 1

    def test_eg_comparison_requires_both_variants(self, tmp_path):
        path = make_manifest(tmp_path, [
            ("snpe", "snpe", 1, decaying(0.5), False),
            ("agd", "agd", 1, decaying(0.9, n=30), False),
        ])
        with pytest.raises(ValueError, match="disable_extragradient=true"):
            render(PlotSpec(manifest=str(path), kind="eg_comparison",
                            out=str(tmp_path / "eg.png")))

    def test_eg_comparison_names_missing_on_variant(self, tmp_path):
        path = make_manifest(tmp_path, [("snpe", "snpe", 1, decaying(0.5), True)])
        with pytest.raises(ValueError, match="disable_extragradient=false"):
            render(PlotSpec(manifest=str(path), kind="eg_comparison",
                            out=str(tmp_path / "eg.png")))

    def test_rerender_is_byte_identical_and_pure(self, desk_manifest, tmp_path):
        before = {p.name: p.read_bytes() for p in desk_manifest.parent.glob("*.csv")}
        out_a = tmp_path / "a.png"
        out_b = tmp_path / "b.png"
        render(PlotSpec(manifest=str(desk_manifest), kind="iterations", out=str(out_a)))
        render(PlotSpec(manifest=str(desk_manifest), kind="iterations", out=str(out_b)))
        assert out_a.read_bytes() == out_b.read_bytes()
        after = {p.name: p.read_bytes() for p in desk_manifest.parent.glob("*.csv")}
        assert before == after

    def test_negative_gaps_survive_log_scale(self, tmp_path):
        path = make_manifest(tmp_path, [
            ("snpe", "snpe", 1, [1.0, 1e-12, -5e-13], False)])
        result = render(PlotSpec(manifest=str(path), kind="iterations",
                                 out=str(tmp_path / "neg.png")))
        assert result.n_curves == 1

    def test_bad_kind_rejected(self, desk_manifest, tmp_path):
        with pytest.raises(ValueError):
            PlotSpec(manifest=str(desk_manifest), kind="pie",
                     out=str(tmp_path / "x.png"))


class TestCli:
    def test_cli_round_trip(self, desk_manifest, tmp_path, capsys):
        from snpe_plots.cli import main
        out = tmp_path / "fig.png"
        assert main(["--manifest", str(desk_manifest), "--kind", "iterations",
                     "--out", str(out)]) == 0
        assert out.exists()
        assert "curves" in capsys.readouterr().out

    def test_cli_reports_errors(self, tmp_path, capsys):
        from snpe_plots.cli import main
        path = make_manifest(tmp_path, [("snpe", "snpe", 1, decaying(0.5), False)])
        assert main(["--manifest", str(path), "--kind", "eg_comparison",
                     "--out", str(tmp_path / "x.png")]) == 1
        assert "extragradient" in capsys.readouterr().err
