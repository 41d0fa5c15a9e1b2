from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gptscore import _kernels_py  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def _implementations():
    impls = [pytest.param(_kernels_py, id="python")]
    try:
        from gptscore import _kernels
    except ImportError:
        impls.append(pytest.param(None, id="cython", marks=pytest.mark.skip(reason="extension not built")))
    else:
        impls.append(pytest.param(_kernels, id="cython"))
    return impls


def pytest_generate_tests(metafunc):
    if "kernel_impl" in metafunc.fixturenames:
        metafunc.parametrize("kernel_impl", _implementations())


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def summ_rows(n_samples: int, n_outputs: int, aspects=("COH",), with_ref=True):
    """Summarisation records with human scores that vary across outputs."""
    rows = []
    for i in range(n_samples):
        outputs = []
        for j in range(n_outputs):
            outputs.append(
                {
                    "system_id": f"sys{j}",
                    "text": f"summary {i} from system {j} " + "word " * (j + 1),
                    "human_scores": {a: float((i * 7 + j * 3 + k) % 5 + j) for k, a in enumerate(aspects)},
                }
            )
        row = {"sample_id": f"s{i}", "task": "Summ", "source": f"Source document number {i}.", "outputs": outputs}
        if with_ref:
            row["references"] = [f"reference summary {i}"]
        rows.append(row)
    return rows


@pytest.fixture
def summ_dataset(tmp_path):
    return write_jsonl(tmp_path / "summ.jsonl", summ_rows(4, 3, ("COH", "FLU")))


@pytest.fixture
def synthetic_fixture(tmp_path):
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps({"fallback": "synthetic", "responses": []}), encoding="utf-8")
    return path


# ----------------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _ACCEPTANCE[number] = (verdict, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{verdict}] {number:>2}. {title}")
