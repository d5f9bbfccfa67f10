import json
import random

import pytest

from opeforge.batch import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    BatchPlan,
    read_rows,
    rows_to_csv,
    run_batch,
    summarize,
    summary_csv,
)
from opeforge.errors import SpecError
from opeforge.loop import OUTCOME_CLASSES


def row(pct, cls, proposer="p", mode="whole_code", status="success", **fails):
    r = {"proposer": proposer, "mode": mode, "status": status, "pct": "" if pct is None else repr(pct), "class": cls}
    for k in ("syntax_code_error", "file_corruption", "infrastructure", "runtime_incompat"):
        r[f"fail_{k}"] = fails.get(k, 0)
    return r


def write_plan(tmp_path, spec_text, **overrides):
    (tmp_path / "a.spec").write_text(spec_text)
    (tmp_path / "b.spec").write_text(spec_text.replace("data.seed = 0", "data.seed = 1"))
    plan = {
        "scenarios": ["a.spec", "b.spec"],
        "modes": ["agent_applies"],
        "proposers": [{"kind": "random_perturb", "seed": 1}],
        "repeats": 3,
        "iterations": 2,
        "workroot": "runs",
    }
    plan.update(overrides)
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return path


class TestSummary:
    def test_hand_group(self):
        rows = [row(5.0, "positive"), row(10.0, "positive"), row(-3.0, "negative"), row(0.0, "zero")]
        (g,) = summarize(rows)
        assert g.avg_improvement == 7.5
        assert g.median_improvement == 7.5
        assert g.distribution["positive"] == 0.5
        assert g.success_rate == 1.0

    def test_no_positives_gives_empty_fields(self):
        (g,) = summarize([row(0.0, "zero"), row(None, "failed", status="failed", infrastructure=1)])
        assert g.avg_improvement is None and g.median_improvement is None
        line = summary_csv([g]).splitlines()[1].split(",")
        header = summary_csv([g]).splitlines()[0].split(",")
        fields = dict(zip(header, line))
        assert fields["avg_improvement"] == "" and fields["median_improvement"] == ""
        assert fields["fail_infrastructure"] == "1"
        assert fields["success_rate"] == "0.5"

    def test_minimize_improvements_use_magnitude(self):
        (g,) = summarize([row(-45.5, "positive"), row(-10.0, "positive")])
        assert g.avg_improvement == 27.75

    def test_forty_run_oracle(self):
        rng = random.Random(40)
        rows = []
        for _ in range(40):
            cls = rng.choice(OUTCOME_CLASSES)
            pct = {"positive": rng.uniform(0.1, 500), "zero": 0.0, "negative": -rng.uniform(0.1, 500),
                   "extreme": 1e5, "failed": None}[cls]
            rows.append(row(pct, cls, proposer=rng.choice(["llm", "random"]), mode=rng.choice(["whole_code", "manual_patch"]),
                            status="failed" if cls == "failed" else "success",
                            runtime_incompat=rng.randint(0, 2)))
        rows = read_rows(rows_to_csv(rows))
        summaries = {(g.proposer, g.mode): g for g in summarize(rows)}
        groups = {}
        for r in rows:
            groups.setdefault((r["proposer"], r["mode"]), []).append(r)
        assert set(groups) == set(summaries)
        for key, members in groups.items():
            g = summaries[key]
            n = len(members)
            gains = sorted(abs(float(r["pct"])) for r in members if r["class"] == "positive")
            if gains:
                mid = len(gains) // 2
                median = gains[mid] if len(gains) % 2 else (gains[mid - 1] + gains[mid]) / 2
                assert g.avg_improvement == pytest.approx(sum(gains) / len(gains), rel=1e-12)
                assert g.median_improvement == pytest.approx(median, rel=1e-12)
            else:
                assert g.avg_improvement is None
            for c in OUTCOME_CLASSES:
                assert g.distribution[c] == sum(r["class"] == c for r in members) / n
            assert abs(sum(g.distribution.values()) - 1.0) <= 1e-9
            assert g.failures["runtime_incompat"] == sum(int(r["fail_runtime_incompat"]) for r in members)
            assert g.runs == n

    def test_summary_header(self):
        assert summary_csv([]).strip() == ",".join(SUMMARY_COLUMNS)


class TestPlan:
    def test_count_and_rows(self, tmp_path, default_spec_text):
        plan = BatchPlan.load(write_plan(tmp_path, default_spec_text))
        assert plan.total_runs == 6
        rows = run_batch(plan)
        assert len(rows) == 6
        assert [r["run"] for r in rows] == list(range(6))
        assert all(r["status"] == "success" for r in rows)
        assert rows_to_csv(rows).splitlines()[0] == ",".join(RUN_COLUMNS)

    def test_deterministic_up_to_runtime(self, tmp_path, default_spec_text):
        def strip(rows):
            return [{k: v for k, v in r.items() if k != "runtime"} for r in rows]

        p1 = tmp_path / "one"
        p2 = tmp_path / "two"
        p1.mkdir()
        p2.mkdir()
        a = run_batch(BatchPlan.load(write_plan(p1, default_spec_text)))
        b = run_batch(BatchPlan.load(write_plan(p2, default_spec_text, jobs=3)))
        assert strip(a) == strip(b)

    def test_failures_do_not_abort(self, tmp_path, default_spec_text):
        path = write_plan(tmp_path, default_spec_text, repeats=1)
        (tmp_path / "b.spec").write_text("reward_model.gamma = 1\n")
        rows = run_batch(BatchPlan.load(path))
        assert [r["status"] for r in rows] == ["success", "failed"]
        assert rows[1]["failure_class"] == "syntax_code_error"
        assert rows[1]["class"] == "failed"

    def test_missing_scenario_is_recorded(self, tmp_path, default_spec_text):
        path = write_plan(tmp_path, default_spec_text, repeats=1, scenarios=["a.spec", "missing.spec"])
        rows = run_batch(BatchPlan.load(path))
        assert rows[1]["status"] == "failed"

    @pytest.mark.parametrize("bad", [{"repeats": 0}, {"modes": ["telepathy"]}, {"colour": "red"}, {"scenarios": []}])
    def test_invalid_plans(self, tmp_path, default_spec_text, bad):
        with pytest.raises((SpecError, ValueError)):
            BatchPlan.load(write_plan(tmp_path, default_spec_text, **bad))

    def test_per_run_seeds(self, tmp_path, default_spec_text):
        seen = []

        def factory(binding, seed):
            seen.append(seed)
            from opeforge.proposers import NullProposer
            return NullProposer()

        plan = BatchPlan.load(write_plan(tmp_path, default_spec_text, base_seed=10))
        run_batch(plan, factory)
        assert seen == [11, 12, 13] * 2
