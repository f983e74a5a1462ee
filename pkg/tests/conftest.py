import json

import pytest

from dispred.pipeline import RunConfig

# Small enough that a full pipeline run takes about a second.
SMALL = {
    "sim": {"n_samples": 600, "n_variants": 80, "n_causal": 10},
    "train": {"epochs": 4, "n2": 2, "batch_size": 128, "z_d_dim": 8, "z_a_dim": 8},
    "baselines": ["lasso", "prs"],
    "nn": {"epochs": 5},
    "adv": {"epochs": 3},
    "window": 40,
    "stride": 10,
}


@pytest.fixture
def small_dict():
    return json.loads(json.dumps(SMALL))


@pytest.fixture
def small_config(small_dict):
    return RunConfig.from_dict(small_dict)


@pytest.fixture
def small_config_file(tmp_path, small_dict):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(small_dict))
    return path


# Acceptance outcomes, printed as one line per criterion at the end of the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
