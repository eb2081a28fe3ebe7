"""Figure rendering from run and sweep outputs."""

import numpy as np
import pytest

from flowrl.report import load_metrics, render_run, render_sweep


class TestLoadMetrics:
    def test_flow_run_parses(self, tiny_flow_run):
        cfg, outdir, _ = tiny_flow_run
        meta, columns, data = load_metrics(outdir / "metrics.csv")
        assert meta["agent"] == "flow"
        assert meta["env"] == "toy3"
        assert meta["seed"] == "0"
        assert "schema" in meta
        assert data.shape == (cfg.online_steps // cfg.log_interval, len(columns))
        assert columns[0] == "step"
        steps = data[:, 0]
        assert list(steps) == [20.0, 40.0, 60.0]

    def test_rejects_other_files(self, tmp_path):
        p = tmp_path / "notes.csv"
        p.write_text("step,return\n1,2\n")
        with pytest.raises(ValueError, match="not a metrics file"):
            load_metrics(p)

    def test_headers_only_gives_empty_table(self, tmp_path):
        p = tmp_path / "metrics.csv"
        p.write_text("# flowrl-metrics schema=1 agent=flow env=toy3 seed=0\na,b,c\n")
        _, columns, data = load_metrics(p)
        assert columns == ["a", "b", "c"]
        assert data.shape == (0, 3)


class TestRenderRun:
    def test_flow_figures(self, tiny_flow_run):
        _, outdir, _ = tiny_flow_run
        written = render_run(outdir)
        assert [p.name for p in written] == [
            "learning_curve.png", "losses.png", "goal_visits.png",
        ]
        for p in written:
            assert p.stat().st_size > 1000

    def test_dqn_figures(self, tiny_dqn_run):
        _, outdir, _ = tiny_dqn_run
        written = render_run(outdir)
        assert len(written) == 3
        assert all(p.exists() for p in written)


class TestRenderSweep:
    def test_ablation_figure(self, tmp_path):
        rows = [
            ("alpha", 0.1, 0, 9.5, 2, 1.0),
            ("alpha", 0.1, 1, 9.7, 2, 1.0),
            ("alpha", 1.0, 0, 8.0, 1, 0.9),
            ("alpha", 1.0, 1, 8.4, 1, 0.95),
        ]
        with open(tmp_path / "sweep.csv", "w") as fh:
            fh.write("# flowrl-sweep schema=1 axis=alpha\n")
            fh.write("axis,value,seed,mean_return,distinct_goals,goal_rate\n")
            for r in rows:
                fh.write(",".join(str(x) for x in r) + "\n")
        written = render_sweep(tmp_path)
        assert written == [tmp_path / "ablation.png"]
        assert written[0].stat().st_size > 1000

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "sweep.csv").write_text("axis,value\nalpha,0.1\n")
        with pytest.raises(ValueError, match="not a sweep file"):
            render_sweep(tmp_path)

    def test_rejects_empty_sweep(self, tmp_path):
        (tmp_path / "sweep.csv").write_text(
            "# flowrl-sweep schema=1 axis=alpha\n"
            "axis,value,seed,mean_return,distinct_goals,goal_rate\n"
        )
        with pytest.raises(ValueError, match="holds no rows"):
            render_sweep(tmp_path)


def test_figures_numeric_content_stable(tiny_flow_run):
    # rendering twice must not mutate or depend on prior figure state
    _, outdir, _ = tiny_flow_run
    first = render_run(outdir)
    sizes = [p.stat().st_size for p in first]
    second = render_run(outdir)
    assert [p.stat().st_size for p in second] == sizes


def test_sweep_metadata_preserved(tiny_flow_run):
    _, outdir, _ = tiny_flow_run
    meta, _, data = load_metrics(outdir / "metrics.csv")
    # visit counters are cumulative, so each column must be nondecreasing
    _, columns, _ = load_metrics(outdir / "metrics.csv")
    for name in columns:
        if name.startswith("visits_"):
            col = data[:, columns.index(name)]
            assert np.all(np.diff(col) >= 0)
