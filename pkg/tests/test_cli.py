import io

import pytest

from doorsom.canny import CannyConfig
from doorsom.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, main
from doorsom.doorfeat import FeatureConfig
from doorsom.imgcore import GrayImage, read_pnm, write_pnm
from doorsom.linefit import LineConfig
from doorsom.pipeline import save_model
from doorsom.som import TrainSchedule
from doorsom.synthcorpus import SceneSpec, render_scene

from conftest import door_spec


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(map(str, argv)), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def model_file(tmp_path, small_model):
    path = tmp_path / "model.som"
    save_model(path, small_model)
    return path


class TestUsage:
    def test_no_command(self):
        code, _, err = run()
        assert code == EXIT_USAGE
        assert "usage:" in err

    def test_unknown_flag_named(self):
        code, _, err = run("detect", "--bogus", "1")
        assert code == EXIT_USAGE
        assert "unrecognized arguments: --bogus" in err

    def test_missing_required(self):
        code, _, err = run("train", "--corpus", "x")
        assert code == EXIT_USAGE
        assert "--out" in err

    def test_bad_value(self):
        code, _, err = run("synth", "--out", "x", "--n", "many")
        assert code == EXIT_USAGE

    def test_help(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "synth" in capsys.readouterr().out

    @pytest.mark.parametrize("cls,flags", [
        (CannyConfig, {"--sigma": "sigma", "--canny-lo": "lo", "--canny-hi": "hi"}),
        (LineConfig, {"--dev-tol": "dev_tol", "--angle-tol": "angle_tol", "--gap-tol": "gap_tol",
                      "--min-len": "min_len", "--lateral-tol": "lateral_tol"}),
        (FeatureConfig, {"--vertical-tol": "vertical_tol_deg", "--horizon-frac": "horizon_frac",
                         "--w-min": "w_min", "--w-max": "w_max", "--columns": "n_columns",
                         "--window": "window", "--bins": "bins", "--min-post-frac": "min_post_frac"}),
        (TrainSchedule, {"--eta0": "eta0_order", "--eta-conv": "eta_conv", "--sigma0": "sigma0",
                         "--tau2": "tau2", "--iters": "total_iters", "--order-frac": "order_frac"}),
    ])
    def test_help_defaults_match_config(self, cls, flags):
        parser = build_parser()
        train = parser._subparsers._group_actions[0].choices["train"]
        actions = {a.option_strings[0]: a for a in train._actions if a.option_strings}
        defaults = cls()
        for flag, name in flags.items():
            assert actions[flag].default == getattr(defaults, name)
        lines = train.format_help().splitlines()
        for flag, name in flags.items():
            k = next(i for i, ln in enumerate(lines) if ln.strip().startswith(flag + " "))
            entry = lines[k] if "default:" in lines[k] else lines[k + 1]  # long flags wrap
            assert entry.rstrip().endswith(f"default: {getattr(defaults, name)}")


class TestRuntime:
    def test_missing_model(self, tmp_path):
        img = tmp_path / "a.pgm"
        write_pnm(img, render_scene(SceneSpec())[0])
        code, _, err = run("detect", "--model", tmp_path / "nope.som", "--image", img)
        assert code == EXIT_RUNTIME
        assert "detect" in err

    def test_corrupt_model(self, tmp_path):
        bad = tmp_path / "bad.som"
        bad.write_bytes(b"NOTAMODEL" * 4)
        img = tmp_path / "a.pgm"
        write_pnm(img, render_scene(SceneSpec())[0])
        code, _, err = run("detect", "--model", bad, "--image", img)
        assert code == EXIT_RUNTIME
        assert "magic" in err

    def test_bad_image(self, tmp_path, model_file):
        img = tmp_path / "a.pgm"
        img.write_bytes(b"P5\n4 4\n255\n\x00")
        code, _, err = run("detect", "--model", model_file, "--image", img)
        assert code == EXIT_RUNTIME
        assert "truncated" in err


class TestCommands:
    def test_detect_blank_wall(self, tmp_path, model_file):
        img = tmp_path / "wall.pgm"
        write_pnm(img, render_scene(SceneSpec())[0])
        code, out, _ = run("detect", "--model", model_file, "--image", img)
        assert code == EXIT_OK
        assert out == ""

    def test_detect_door_outputs(self, tmp_path, model_file):
        img = tmp_path / "door.pgm"
        write_pnm(img, render_scene(door_spec())[0])
        code, out, _ = run("detect", "--model", model_file, "--image", img,
                           "--overlay", tmp_path / "o.ppm", "--lines", tmp_path / "l.pgm")
        assert code == EXIT_OK
        fields = out.split()
        assert len(fields) == 5 and fields[0] in ("0", "1")
        assert read_pnm(tmp_path / "o.ppm").data.shape == (240, 320, 3)
        assert set(read_pnm(tmp_path / "l.pgm").data.ravel().tolist()) <= {0, 255}

    def test_synth_train_eval_bench(self, tmp_path):
        corpus = tmp_path / "corpus"
        code, out, _ = run("synth", "--out", corpus, "--n", 4, "--seed", 3)
        assert code == EXIT_OK and "12 images" in out
        model = tmp_path / "m.som"
        code, out, err = run("train", "--corpus", corpus, "--out", model, "--seed", 1,
                             "--iters", 800, "--curve", tmp_path / "curve.txt")
        assert code == EXIT_OK, err
        assert out.startswith("images 12 ")
        assert (tmp_path / "curve.txt").read_text().startswith("iteration ")
        code, out, _ = run("eval", "--model", model, "--corpus", corpus, "--log", tmp_path / "log.txt")
        assert code == EXIT_OK
        lines = out.splitlines()
        assert [ln.split()[0] for ln in lines[1:]] == ["Day", "Night", "Shadow"]
        assert len((tmp_path / "log.txt").read_text().splitlines()) == 13
        img = corpus / "day" / "0000.pgm"
        code, out, _ = run("bench", "--model", model, "--image", img, "--classify-reps", 10,
                           "--step-reps", 5, "--train-reps", 1, "--stage-reps", 1)
        assert code == EXIT_OK
        assert "Pattern Classification Time" in out

    def test_train_flags_reach_model(self, tmp_path):
        corpus = tmp_path / "c"
        run("synth", "--out", corpus, "--n", 3, "--seed", 3)
        model = tmp_path / "m.som"
        code, _, err = run("train", "--corpus", corpus, "--out", model, "--rows", 4, "--cols", 5,
                           "--iters", 300, "--sigma", 1.2)
        assert code == EXIT_OK, err
        from doorsom.pipeline import read_model
        m = read_model(model)
        assert (m.lattice.rows, m.lattice.cols) == (4, 5)
        assert m.canny_cfg.sigma == 1.2 and m.schedule.total_iters == 300

    def test_train_empty_corpus(self, tmp_path):
        (tmp_path / "empty").mkdir()
        code, _, err = run("train", "--corpus", tmp_path / "empty", "--out", tmp_path / "m")
        assert code == EXIT_RUNTIME
        assert "no images" in err
