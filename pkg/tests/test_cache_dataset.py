from pathlib import Path

import numpy as np
import pytest

from nimo.data import Setting, Split, load_dataset
from scripts.cache_dataset import cache_setting, cache_settings, main


def test_cache_setting_writes_split_dataset(tmp_path: Path) -> None:
    manifest = cache_setting(Setting.REG1, tmp_path, seed=2, counts=(20, 5, 5))
    assert manifest == tmp_path / "reg1_seed2" / "manifest.json"
    dataset = load_dataset(manifest.parent)
    assert [dataset.count(part) for part in (Split.TRAIN, Split.VAL, Split.TEST)] == [20, 5, 5]
    assert np.array_equal(dataset.truth, [3.0, -2.0, 2.0, 0.0, 0.0])


def test_cache_settings_skips_unknown_names(tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
    written, errors = cache_settings(["reg_toy", "reg9", "cls1"], tmp_path, seeds=[0, 1], counts=(10, 5, 5))
    assert (written, errors) == (4, 1)
    assert "reg9" in caplog.text
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cls1_seed0", "cls1_seed1", "reg_toy_seed0", "reg_toy_seed1"]


def test_main_reports_failures(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["reg_toy", "--out", str(tmp_path)]) == 0
    assert "Written: 1, Errors: 0" in capsys.readouterr().out
    assert main(["nope", "--out", str(tmp_path)]) == 1
