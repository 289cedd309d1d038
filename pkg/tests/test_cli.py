"""End-to-end runs of the command line."""

import json

import pytest

from src.fixtures import make_fixtures
from src.main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, THREADS_ENV, run


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    return make_fixtures(tmp_path_factory.mktemp("fixtures"))


@pytest.fixture(autouse=True)
def _no_thread_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)


def _ppm_files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.ppm"))}


class TestUsage:
    def test_help(self):
        assert run(["--help"]) == EXIT_OK

    def test_missing_command(self):
        assert run([]) == EXIT_USAGE

    def test_unknown_flag(self, fixtures, tmp_path):
        assert run(["render", "--scene", str(fixtures["two_layer"]), "--bogus", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_bad_mode(self, fixtures, tmp_path):
        assert run(["render", "--scene", str(fixtures["two_layer"]), "--mode", "additive"]) == EXIT_USAGE

    def test_zero_threads(self, fixtures, tmp_path):
        argv = ["render", "--scene", str(fixtures["two_layer"]), "--threads", "0", "--out", str(tmp_path)]
        assert run(argv) == EXIT_USAGE

    def test_bad_thread_env(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "many")
        assert run(["render", "--scene", str(fixtures["two_layer"]), "--out", str(tmp_path)]) == EXIT_USAGE

    def test_edit_requires_config(self, tmp_path):
        assert run(["edit", "--out", str(tmp_path)]) == EXIT_USAGE


class TestFailures:
    def test_missing_scene(self, tmp_path):
        assert run(["render", "--scene", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == EXIT_FAILURE

    def test_malformed_scene(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"version": "wabe-splat/1"}')
        assert run(["render", "--scene", str(path), "--out", str(tmp_path / "out")]) == EXIT_FAILURE

    def test_zero_quaternion_scene(self, fixtures, tmp_path):
        doc = json.loads(fixtures["two_layer"].read_text())
        doc["gaussians"][0]["rotation"] = [0, 0, 0, 0]
        path = tmp_path / "zero.json"
        path.write_text(json.dumps(doc))
        assert run(["render", "--scene", str(path), "--out", str(tmp_path / "out")]) == EXIT_FAILURE
        assert not list((tmp_path / "out").glob("*.ppm"))


class TestRender:
    def test_writes_every_frame(self, fixtures, tmp_path):
        assert run(["render", "--scene", str(fixtures["flap"]), "--out", str(tmp_path), "--png"]) == EXIT_OK
        files = _ppm_files(tmp_path)
        assert len(files) == 16
        assert "render_v1_t007.ppm" in files
        assert (tmp_path / "render_v0_t000.png").exists()
        assert files["render_v0_t000.ppm"].startswith(b"P6\n64 64\n255\n")

    def test_zero_beta_matches_standard(self, fixtures, tmp_path):
        scene = str(fixtures["two_layer"])
        assert run(["render", "--scene", scene, "--out", str(tmp_path / "std")]) == EXIT_OK
        assert run(["render", "--scene", scene, "--mode", "wabe", "--beta", "0",
                    "--out", str(tmp_path / "w0")]) == EXIT_OK
        assert _ppm_files(tmp_path / "std") == _ppm_files(tmp_path / "w0")

    def test_thread_count_does_not_change_bytes(self, fixtures, tmp_path, monkeypatch):
        scene = str(fixtures["flap"])
        assert run(["render", "--scene", scene, "--mode", "wabe", "--out", str(tmp_path / "one")]) == EXIT_OK
        monkeypatch.setenv(THREADS_ENV, "4")
        assert run(["render", "--scene", scene, "--mode", "wabe", "--out", str(tmp_path / "four")]) == EXIT_OK
        assert _ppm_files(tmp_path / "one") == _ppm_files(tmp_path / "four")

    def test_animate_with_own_timeline(self, fixtures, tmp_path):
        flap = str(fixtures["flap"])
        assert run(["render", "--scene", flap, "--out", str(tmp_path / "render")]) == EXIT_OK
        assert run(["animate", "--scene", flap, "--driver", flap, "--out", str(tmp_path / "animate")]) == EXIT_OK
        assert _ppm_files(tmp_path / "render") == _ppm_files(tmp_path / "animate")

    def test_animate_rejects_incompatible_driver(self, fixtures, tmp_path):
        argv = ["animate", "--scene", str(fixtures["two_layer"]), "--driver", str(fixtures["flap"]),
                "--out", str(tmp_path)]
        assert run(argv) == EXIT_FAILURE


class TestCommands:
    def test_gradcheck_passes_on_random_scene(self, fixtures, tmp_path):
        assert run(["gradcheck", "--scene", str(fixtures["random5"]), "--out", str(tmp_path)]) == EXIT_OK
        report = json.loads((tmp_path / "gradcheck_report.json").read_text())
        assert [(r["mode"].split("(")[0], r["policy"]) for r in report["reports"]] == \
            [("standard", "n/a"), ("wabe", "detached"), ("wabe", "full")]

    def test_eval_self_reference(self, fixtures, tmp_path):
        target = str(fixtures["fit_target"])
        assert run(["eval", "--scene", target, "--reference", target, "--out", str(tmp_path)]) == EXIT_OK
        report = json.loads((tmp_path / "eval_report.json").read_text())
        assert report["psnr"] == 99.0

    def test_fit_writes_reports(self, fixtures, tmp_path):
        argv = ["fit", "--scene", str(fixtures["fit_init"]), "--target", str(fixtures["fit_target"]),
                "--iterations", "2", "--out", str(tmp_path)]
        assert run(argv) == EXIT_OK
        assert (tmp_path / "final.json").exists()
        assert (tmp_path / "eval_report.json").exists()
        assert len((tmp_path / "metrics.jsonl").read_text().splitlines()) == 2

    def test_edit_is_deterministic(self, fixtures, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            argv = ["edit", "--config", str(fixtures["flap_edit"]), "--iterations", "2", "--seed", "3",
                    "--out", str(out)]
            assert run(argv) == EXIT_OK
            outputs.append((out / "final.json").read_bytes())
        assert outputs[0] == outputs[1]

    def test_make_fixtures(self, tmp_path):
        assert run(["make-fixtures", "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "flap_jitter.json").exists()
        assert run(["render", "--scene", str(tmp_path / "random5.json"), "--out", str(tmp_path / "r")]) == EXIT_OK
