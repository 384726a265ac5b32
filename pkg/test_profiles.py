import json

import pytest

from rstools.errors import ParameterError
from rstools.profiles import ProfileStore, read_config_file, merge_settings, normalize_key


def test_save_and_load_profile(tmp_path):
    store = ProfileStore(str(tmp_path / "profiles"))
    path = store.save_profile("cir", {"sigma": "cir:2,1,0.5,1", "mean-duration": 0.001})
    with open(path) as f:
        assert json.load(f) == {"sigma": "cir:2,1,0.5,1", "mean_duration": 0.001}
    assert store.load_profile("cir") == {"sigma": "cir:2,1,0.5,1", "mean_duration": 0.001}


def test_profile_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RSCLT_PROFILE_DIR", str(tmp_path))
    (tmp_path / "quick.json").write_text('{"reps": 10}')
    assert ProfileStore().load_profile("quick") == {"reps": 10}


def test_missing_or_invalid_profile(tmp_path):
    store = ProfileStore(str(tmp_path))
    with pytest.raises(ParameterError):
        store.load_profile("absent")
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(ParameterError):
        store.load_profile("broken")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ParameterError):
        store.load_profile("list")


def test_read_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# experiment\nscheme = gamma\n\n--shape=2   # per draw\nn=500,1000\n")
    assert read_config_file(str(path)) == {"scheme": "gamma", "shape": "2", "n": "500,1000"}


@pytest.mark.parametrize("text", ["scheme gamma\n", "=3\n"])
def test_malformed_config_line(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text("seed=1\n" + text)
    with pytest.raises(ParameterError) as info:
        read_config_file(str(path))
    assert "line 2" in str(info.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ParameterError):
        read_config_file(str(tmp_path / "absent.cfg"))


def test_merge_precedence():
    merged = merge_settings({"reps": 200, "seed": 42, "f": "x^2"}, {"reps": 50}, {"seed": "7"},
                            {"reps": 9, "f": None})
    assert merged == {"reps": 9, "seed": "7", "f": "x^2"}


def test_normalize_key():
    assert normalize_key("--Mean-Duration ") == "mean_duration"
