import pytest
import yaml

TINY_RUN = {
    "seed": 3,
    "synth": {"size": 32, "n_samples": 20},
    "classifier": {"base_width": 4, "depth": 2, "epochs": 1, "batch_size": 8},
    "gan": {"ngf": 4, "n_res": 1, "ndf": 4, "disc_layers": 1, "pretrain_epochs": 1, "main_epochs": 1,
            "batch_size": 4, "train_subset": 8},
    "attribution": {"save_overlays": 2},
    "occlusion": {"patch_size": 8, "stride": 8},
    "evaluation": {"max_images": 3},
}


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_RUN))
    return path


ACCEPTANCE = pytest.StashKey[dict]()
CRITERIA = ("A1", "A2", "A3", "A4", "A5", "A6", "A7")


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """``criterion(name, passed, detail)`` records one acceptance line for the terminal summary."""
    results = request.config.stash[ACCEPTANCE]

    def record(name, passed, detail):
        results[name] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in CRITERIA:
        if name not in results:
            terminalreporter.write_line(f"{name} FAIL: no result recorded (deselected or errored)")
            continue
        passed, detail = results[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
