from __future__ import annotations

import csv
import io
import json

import pytest

from conftest import FIXTURES, summ_rows, write_jsonl
from gptscore import cli
from gptscore.datasets import load
from gptscore.scoring import ScoreRecord, read_records, write_records
from gptscore.prompt import Direction, Setting

DIAG_ASPECTS = ["INT", "ENG", "SPE", "COR", "REL", "UND", "SEM", "FLU"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def fixture_args(fixture, *extra):
    return ["--backend", "fixture", "--fixture", fixture, "--model", "fx", *extra]


def dialogue_rows(n=14, systems=3):
    rows = []
    for i in range(n):
        outputs = []
        for j in range(systems):
            base = (i * 5 + j * 7) % 11
            scores = {a: float((base + k * j) % 6) for k, a in enumerate(DIAG_ASPECTS)}
            outputs.append({"system_id": f"bot{j}", "text": f"AI: reply {j} to {i}", "human_scores": scores})
        rows.append({"sample_id": f"c{i}", "task": "DiagTurn", "source": f"Human: message {i}", "outputs": outputs})
    return rows


@pytest.fixture
def summ(tmp_path):
    return write_jsonl(tmp_path / "summ.jsonl", summ_rows(2, 3, ("COH",)))


def test_score_writes_records_and_reports_cache(tmp_path, summ, synthetic_fixture, capsys):
    out = tmp_path / "scores.jsonl"
    args = ["score", "--dataset", summ, "--aspect", "COH", "--out", out, "--cache-dir", tmp_path / "cache",
            *fixture_args(synthetic_fixture)]
    code, stdout, _ = run(capsys, *args)
    assert code == 0
    assert len(out.read_text().splitlines()) == 6
    assert "wrote 6 records" in stdout and "cache_hit_rate=0.0%" in stdout
    first = out.read_bytes()
    code, stdout, _ = run(capsys, *args)
    assert code == 0 and "cache_hit_rate=100.0%" in stdout and "requests=0" in stdout
    assert out.read_bytes() == first


def test_idm_k0_file_equals_ist(tmp_path, summ, synthetic_fixture, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, "score", "--dataset", summ, "--aspect", "COH", "--out", a, "--setting", "ist", *fixture_args(synthetic_fixture))
    run(capsys, "score", "--dataset", summ, "--aspect", "COH", "--out", b, "--setting", "idm", "--k", "0",
        *fixture_args(synthetic_fixture))
    assert a.read_bytes() == b.read_bytes()


def test_config_file_with_flag_override(tmp_path, summ, synthetic_fixture, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "dataset": str(summ), "aspects": ["COH"], "setting": "val", "out": str(tmp_path / "c.jsonl"),
        "backend": {"kind": "fixture", "fixture": str(synthetic_fixture), "model": "from-config"},
    }))
    code, _, _ = run(capsys, "score", "--config", config, "--model", "from-flag")
    assert code == 0
    recs = read_records(tmp_path / "c.jsonl")
    assert {r.model_id for r in recs} == {"from-flag"}
    assert {r.setting for r in recs} == {Setting.VAL}


def test_rouge_metric(tmp_path, summ, capsys):
    out = tmp_path / "r.jsonl"
    code, _, _ = run(capsys, "score", "--dataset", summ, "--aspect", "COH", "--metric", "rouge1", "--out", out)
    assert code == 0
    assert {r.model_id for r in read_records(out)} == {"rouge1"}


def test_k_without_idm_is_usage_error(tmp_path, summ, synthetic_fixture, capsys):
    code, _, err = run(capsys, "score", "--dataset", summ, "--k", "2", "--out", tmp_path / "x", *fixture_args(synthetic_fixture))
    assert code == 2 and "idm" in err


def test_argparse_usage_error(capsys):
    assert run(capsys, "score", "--setting", "bogus")[0] == 2
    assert run(capsys)[0] == 2


def test_backend_error_exit_code(tmp_path, summ, capsys):
    code, _, err = run(capsys, "score", "--dataset", summ, "--aspect", "COH", "--out", tmp_path / "x",
                       "--backend", "http", "--endpoint", "http://127.0.0.1:9", "--max-attempts", "1", "--model", "m")
    assert code == 4 and "backend error" in err


def test_data_error_exit_code(tmp_path, synthetic_fixture, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"sample_id": "a", "task": "Summ", "source": "s"}\n')
    code, _, err = run(capsys, "score", "--dataset", bad, "--out", tmp_path / "x", *fixture_args(synthetic_fixture))
    assert code == 3 and "line 1" in err and "outputs" in err


def _records_from_human(ds, aspect, sign=1.0):
    return [
        ScoreRecord(s.sample_id, o.system_id, aspect, Direction.SRC_TO_HYPO, Setting.IST, 0, sign * o.human_scores[aspect], 1, "h")
        for s in ds.samples for o in s.outputs
    ]


@pytest.mark.parametrize("sign, want", [(1.0, 1.0), (-1.0, -1.0)])
def test_metaeval_identity(tmp_path, sign, want, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", summ_rows(4, 4, ("COH",)))
    ds = load(path)
    write_records(_records_from_human(ds, "COH", sign), tmp_path / "s.jsonl")
    code, stdout, _ = run(capsys, "metaeval", "--scores", tmp_path / "s.jsonl", "--dataset", path,
                          "--out-json", tmp_path / "r.json", "--out-csv", tmp_path / "r.csv")
    assert code == 0
    report = json.loads((tmp_path / "r.json").read_text())["reports"][0]
    assert report["value"] == pytest.approx(want)
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert list(rows[0]) == cli.METAEVAL_CSV_COLUMNS
    assert rows[0]["model"] == "h" and rows[0]["setting"] == "IST" and rows[0]["strategy"] == "SampleLevel"


def test_metaeval_unmatched_ids(tmp_path, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", summ_rows(2, 2, ("COH",)))
    recs = _records_from_human(load(path), "COH")
    recs.append(ScoreRecord("ghost", "sysX", "COH", Direction.SRC_TO_HYPO, Setting.IST, 0, -1.0, 1))
    write_records(recs, tmp_path / "s.jsonl")
    code, _, err = run(capsys, "metaeval", "--scores", tmp_path / "s.jsonl", "--dataset", path)
    assert code == 3 and "ghost/sysX" in err


def test_metaeval_roundtrip_counts(tmp_path, synthetic_fixture, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", summ_rows(3, 3, ("COH",)))
    run(capsys, "score", "--dataset", path, "--aspect", "COH", "--out", tmp_path / "s.jsonl", *fixture_args(synthetic_fixture))
    run(capsys, "metaeval", "--scores", tmp_path / "s.jsonl", "--dataset", path, "--out-json", tmp_path / "r.json")
    report = json.loads((tmp_path / "r.json").read_text())["reports"][0]
    assert report["joined"] + report["unscored"] == 9


def test_ablate_demos_default_grid(tmp_path, synthetic_fixture, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", dialogue_rows())
    args = ["ablate-demos", "--dataset", path, "--aspect", "INT", "--out", tmp_path / "k.csv", *fixture_args(synthetic_fixture)]
    assert run(capsys, *args)[0] == 0
    first = (tmp_path / "k.csv").read_bytes()
    rows = list(csv.DictReader(io.StringIO(first.decode())))
    assert [int(r["k"]) for r in rows] == [0, 1, 2, 4, 8, 12]
    assert len({r["value"] for r in rows}) > 1  # demonstrations change the scores
    assert run(capsys, *args)[0] == 0
    assert (tmp_path / "k.csv").read_bytes() == first


def test_ablate_demos_checks_pool_before_calls(tmp_path, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", dialogue_rows(n=5))
    code, _, err = run(capsys, "ablate-demos", "--dataset", path, "--aspect", "INT", "--backend", "http",
                       "--endpoint", "http://127.0.0.1:9", "--model", "m")
    assert code == 2 and "k=12" in err


def test_compose_aspects(tmp_path, synthetic_fixture, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", dialogue_rows())
    golden = json.loads((FIXTURES / "compose" / "int_chain.json").read_text())
    code, _, _ = run(capsys, "compose-aspects", "--dataset", path, "--target", "INT",
                     "--extras", ",".join(golden["extras_order"]), "--out", tmp_path / "c.csv",
                     "--order-out", tmp_path / "o.csv", *fixture_args(synthetic_fixture))
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "c.csv").open()))
    assert [int(r["x"]) for r in rows] == list(range(1, 9))
    assert [r["definition"] for r in rows] == golden["expected"]
    order = [float(r["spearman"]) for r in csv.DictReader((tmp_path / "o.csv").open())]
    assert order == sorted(order, reverse=True)


def test_compose_default_extras_follow_aspect_order(tmp_path, synthetic_fixture, capsys):
    path = write_jsonl(tmp_path / "d.jsonl", dialogue_rows())
    run(capsys, "compose-aspects", "--dataset", path, "--target", "INT", "--out", tmp_path / "c.csv",
        "--order-out", tmp_path / "o.csv", *fixture_args(synthetic_fixture))
    order = [r["aspect"] for r in csv.DictReader((tmp_path / "o.csv").open())]
    rows = list(csv.DictReader((tmp_path / "c.csv").open()))
    assert rows[-1]["aspects"].split()[1:] == order


def _separated_scores(tmp_path, n=50):
    rows = summ_rows(n, 4, ("COH",))
    import numpy as np

    rng = np.random.default_rng(0)
    for row in rows:
        for out in row["outputs"]:
            out["human_scores"]["COH"] = float(rng.normal())
    path = write_jsonl(tmp_path / "d.jsonl", rows)
    ds = load(path)
    write_records(_records_from_human(ds, "COH"), tmp_path / "a.jsonl")
    noise = np.random.default_rng(1)
    write_records(
        [ScoreRecord(r.sample_id, r.system_id, "COH", r.direction, r.setting, 0, float(noise.normal()), 1)
         for r in _records_from_human(ds, "COH")],
        tmp_path / "b.jsonl",
    )
    return path


def test_significance(tmp_path, capsys):
    path = _separated_scores(tmp_path)
    code, stdout, _ = run(capsys, "significance", "--scores-a", tmp_path / "a.jsonl", "--scores-b", tmp_path / "b.jsonl",
                          "--dataset", path, "--out", tmp_path / "sig.json")
    assert code == 0
    res = json.loads((tmp_path / "sig.json").read_text())
    assert res["significant"] and res["p_value"] < 0.01
    code, stdout, _ = run(capsys, "significance", "--scores-a", tmp_path / "a.jsonl", "--scores-b", tmp_path / "a.jsonl",
                          "--dataset", path)
    assert code == 0 and json.loads(stdout)["significant"] is False


def test_significance_zero_resamples(tmp_path, capsys):
    path = _separated_scores(tmp_path, n=5)
    code, _, _ = run(capsys, "significance", "--scores-a", tmp_path / "a.jsonl", "--scores-b", tmp_path / "b.jsonl",
                     "--dataset", path, "-B", "0")
    assert code == 2


def test_report_markdown(tmp_path, capsys):
    _separated_scores(tmp_path, n=30)
    # VAL = noise, IST = human copy (beats VAL), IDM = human copy (beats VAL, ties IST)
    recs_b = read_records(tmp_path / "b.jsonl")
    recs_a = read_records(tmp_path / "a.jsonl")
    write_records([ScoreRecord(r.sample_id, r.system_id, r.aspect, r.direction, Setting.VAL, 0, r.value, 1, "m")
                   for r in recs_b], tmp_path / "val.jsonl")
    write_records([ScoreRecord(r.sample_id, r.system_id, r.aspect, r.direction, Setting.IDM, 2, r.value, 1, "m")
                   for r in recs_a], tmp_path / "idm.jsonl")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "dataset": "d.jsonl", "kind": "Spearman", "resamples": 200, "seed": 0,
        "runs": [
            {"model": "m", "aspect": "COH", "setting": "VAL", "scores": "val.jsonl"},
            {"model": "m", "aspect": "COH", "setting": "IST", "scores": "a.jsonl"},
            {"model": "m", "aspect": "COH", "setting": "IDM", "scores": "idm.jsonl"},
        ],
    }))
    code, stdout, _ = run(capsys, "report", "--manifest", manifest, "--out", tmp_path / "report.md")
    assert code == 0
    lines = (tmp_path / "report.md").read_text().splitlines()
    assert lines[0] == "| Model | COH VAL | COH IST | COH IDM |"
    cells = [c.strip() for c in lines[2].strip("|").split("|")]
    assert cells[0] == "m"
    assert "<sup>" not in cells[1]
    assert cells[2].endswith("<sup>†</sup>") and cells[2].startswith("100.0")
    assert cells[3].endswith("<sup>†</sup>")  # identical to IST, so no ‡


def test_cache_commands(tmp_path, summ, synthetic_fixture, capsys):
    cache = tmp_path / "cache"
    run(capsys, "score", "--dataset", summ, "--aspect", "COH", "--out", tmp_path / "s.jsonl", "--cache-dir", cache,
        *fixture_args(synthetic_fixture))
    code, stdout, _ = run(capsys, "cache", "stats", "--cache-dir", cache)
    assert code == 0 and json.loads(stdout)["entries"] == 6
    code, stdout, _ = run(capsys, "cache", "clear", "--cache-dir", cache)
    assert json.loads(stdout) == {"removed": 6}
    assert json.loads(run(capsys, "cache", "stats", "--cache-dir", cache)[1])["entries"] == 0
