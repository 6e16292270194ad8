import json

import numpy as np
import pytest

from kinvec import __version__
from kinvec.cli import main
from kinvec.config import ConfigError, load, parse_text
from kinvec.scenario import read_series, write_series

FREE = """
name = free
dimension = 1
x_range = -3 3
v_range = -5.5 5.5
x_points = 41
v_points = 41
data_width_x = 0.5
dt = 4
t_end = 40
monitors = decay, bardos_degond, conservation
words = id, dx1
fit_window = 4 40
"""

VP = """
name = vp
dimension = 1
solver = vlasov_poisson
x_range = -24 24
v_range = -4 4
x_points = 128
v_points = 64
data_width_x = 2.0
data_width_v = 0.8
data_amplitude = 1e-2
dt = 0.1
t_end = 1
every = 5
monitors = mass, energy, conservation, weighted
words = id, dx1
"""


def write_cfg(tmp_path, text, **extra):
    lines = [text] + [f"{k} = {v}" for k, v in extra.items()]
    lines.append(f"output_dir = {tmp_path / 'out'}")
    path = tmp_path / "scenario.cfg"
    path.write_text("\n".join(lines) + "\n")
    return path


def summary(tmp_path, name="summary.json"):
    return json.loads((tmp_path / "out" / name).read_text())


class TestParse:
    def test_defaults_and_types(self):
        cfg = parse_text(FREE)
        assert cfg.solver == "free_exact" and cfg.mu == 1 and cfg.x_range == (-3.0, 3.0)
        assert cfg.words == ("id", "dx1") and len(cfg.word_list()[0]) == 0
        assert cfg.output_path.name == "free"

    def test_comments_and_bools(self):
        cfg = parse_text(VP + "force = off  # streaming only\n")
        assert cfg.force is False

    @pytest.mark.parametrize(
        "extra, match",
        [
            ("colour = red", "unknown key"),
            ("name = twice", "duplicate"),
            ("N = two", "bad value"),
            ("data_center = 1 2", "bad value"),
            ("force = maybe", "bad value"),
            ("just text", "key = value"),
            ("mu = 2", "mu"),
            ("delta = 1.5", "delta"),
            ("times = 3, 1", "increasing"),
        ],
    )
    def test_errors(self, extra, match):
        with pytest.raises(ConfigError, match=match):
            parse_text(FREE + extra + "\n")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing required key 'dt'"):
            parse_text(FREE.replace("dt = 4\n", ""))

    def test_bad_word_is_rejected(self):
        with pytest.raises(ValueError):
            parse_text(FREE.replace("words = id, dx1", "words = dx7")).word_list()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load(tmp_path / "nope.cfg")

    def test_relative_output_uses_config_dir(self, tmp_path):
        path = tmp_path / "a.cfg"
        path.write_text(FREE)
        assert load(path).output_path == tmp_path / "out" / "free"


class TestSeriesFiles:
    def test_round_trip(self, tmp_path):
        rows = [[0.0, 1.0 / 3.0, None], [1.5, 2e-300, 4.0]]
        write_series(tmp_path / "s.csv", rows)
        np.testing.assert_array_equal(read_series(tmp_path / "s.csv"), [[0.0, 1.0 / 3.0], [1.5, 2e-300]])
        assert (tmp_path / "s.csv").read_text().splitlines()[1] == "0.0,0.3333333333333333,"

    def test_rejects_missing_columns(self, tmp_path):
        (tmp_path / "s.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_series(tmp_path / "s.csv")


class TestRun:
    def test_free_success(self, tmp_path, capsys):
        assert main(["run", str(write_cfg(tmp_path, FREE))]) == 0
        s = summary(tmp_path)
        assert s["status"] == "ok" and s["exit_code"] == 0
        assert all(v["passed"] for v in s["invariants"].values())
        assert s["fits"]["decay_id"]["slope"] == pytest.approx(-1, abs=0.05)
        assert "decay_dx1.csv" in s["files"] and "PASS decay_rate" in capsys.readouterr().out

    def test_vp_success(self, tmp_path):
        assert main(["run", str(write_cfg(tmp_path, VP))]) == 0
        s = summary(tmp_path)
        assert set(s["invariants"]) == {"mass_drift", "conservation_inequality", "weighted_inequality"}
        energy = read_series(tmp_path / "out" / "energy.csv")
        assert np.max(np.abs(energy[:, 1] - energy[0, 1])) < 1e-4 * abs(energy[0, 1])

    @pytest.mark.parametrize("text", [FREE, VP], ids=["free", "vp"])
    def test_zero_data(self, tmp_path, text):
        assert main(["run", str(write_cfg(tmp_path, text, data="zero"))]) == 0
        for name in summary(tmp_path)["files"]:
            assert not np.any(read_series(tmp_path / "out" / name)[:, 1])

    def test_verify_writes_only_summary(self, tmp_path):
        assert main(["verify", str(write_cfg(tmp_path, VP))]) == 0
        out = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert out == ["verify.json"]
        assert "energy" not in json.dumps(summary(tmp_path, "verify.json")["files"])

    def test_abort_keeps_partial_outputs(self, tmp_path, capsys):
        # a discontinuous box overshoots below zero on the first cubic shift
        assert main(["run", str(write_cfg(tmp_path, VP, data="box"))]) == 3
        s = summary(tmp_path)
        assert s["status"] == "aborted" and "negativity" in s["message"]
        assert read_series(tmp_path / "out" / "mass.csv").shape[0] >= 1
        assert "abort:" in capsys.readouterr().err

    def test_invariant_failure(self, tmp_path, capsys):
        # before the dispersive regime the sup of the density barely moves
        text = FREE.replace("fit_window = 4 40", "fit_window = 0.05 0.5")
        path = write_cfg(tmp_path, text, times="0.05, 0.1, 0.2, 0.3, 0.4, 0.5")
        assert main(["run", str(path)]) == 4
        s = summary(tmp_path)
        assert s["status"] == "invariant_failure" and not s["invariants"]["decay_rate"]["passed"]
        assert "FAIL decay_rate" in capsys.readouterr().out

    def test_parse_error_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(FREE + "bogus = 1\n")
        assert main(["run", str(path)]) == 2
        assert main(["verify", str(tmp_path / "missing.cfg")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_deterministic_bytes(self, tmp_path):
        outputs = []
        for k in range(2):
            d = tmp_path / str(k)
            d.mkdir()
            assert main(["run", str(write_cfg(d, VP))]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted((d / "out").glob("*.csv"))})
        assert outputs[0] == outputs[1] and outputs[0]

    @pytest.mark.parametrize("value, code", [("2", 0), ("0", 2), ("many", 2)])
    def test_thread_env(self, tmp_path, monkeypatch, value, code):
        monkeypatch.setenv("KINVEC_NUM_THREADS", value)
        assert main(["verify", str(write_cfg(tmp_path, FREE))]) == code


class TestFitVerb:
    def test_json_output(self, tmp_path, capsys):
        t = np.linspace(1, 20, 20)
        write_series(tmp_path / "d.csv", np.column_stack([t, 5 * t**-1.5]))
        assert main(["fit", str(tmp_path / "d.csv"), "--window", "2", "20"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["slope"] == pytest.approx(-1.5) and out["t_min"] == 2.0

    @pytest.mark.parametrize("content", [None, "x,y\n1,2\n", "t,value\n1,oops\n"])
    def test_bad_input(self, tmp_path, content):
        path = tmp_path / "d.csv"
        if content is not None:
            path.write_text(content)
        assert main(["fit", str(path), "--window", "1", "2"]) == 2

    def test_too_few_points_in_window(self, tmp_path):
        write_series(tmp_path / "d.csv", [[1.0, 1.0], [2.0, 0.5]])
        assert main(["fit", str(tmp_path / "d.csv"), "--window", "1", "2"]) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0 and __version__ in capsys.readouterr().out


def test_missing_verb_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
