import json

import numpy as np
import pytest

from metasurf import data
from metasurf.config import TrainConfig
from metasurf.errors import ConfigError, FormatError
from metasurf.oracle import simulate
from metasurf.pattern import validate_pattern


def test_single_record_file_size(tmp_path):
    path = tmp_path / "one.msds"
    data.write_dataset(path, data.generate_dataset(1, seed=3))
    assert path.stat().st_size == 9 + 1424


def test_header_and_code_bytes():
    ds = data.Dataset(np.tile([0.0, 0.5, 1.0, 1.0], (1, 32, 8)), np.zeros((1, 100)))
    raw = data.encode(ds)
    assert raw[:4] == b"MSDS" and raw[4] == 1
    assert int.from_bytes(raw[5:9], "little") == 1
    assert raw[9:13] == bytes([0, 1, 2, 2])


def test_round_trip_is_byte_identical(tmp_path):
    ds = data.generate_dataset(20, seed=0)
    a, b = tmp_path / "a.msds", tmp_path / "b.msds"
    data.write_dataset(a, ds)
    data.write_dataset(b, data.read_dataset(a))
    assert a.read_bytes() == b.read_bytes()


def test_same_seed_same_bytes():
    assert data.encode(data.generate_dataset(10, 7)) == data.encode(data.generate_dataset(10, 7))
    assert data.encode(data.generate_dataset(10, 7)) != data.encode(data.generate_dataset(10, 8))


def test_read_back_matches_fresh_simulation(tmp_path):
    path = tmp_path / "d.msds"
    data.write_dataset(path, data.generate_dataset(50, seed=1))
    ds = data.read_dataset(path)
    for p in ds.patterns:
        validate_pattern(p)
    np.testing.assert_array_equal(ds.responses, simulate(ds.patterns).astype(np.float32))


def test_corrupt_files(tmp_path):
    raw = data.encode(data.generate_dataset(2, 0))
    with pytest.raises(FormatError, match="magic"):
        data.decode(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="version"):
        data.decode(raw[:4] + b"\x07" + raw[5:])
    with pytest.raises(FormatError):
        data.decode(raw[:-1])
    bad = bytearray(raw)
    bad[9] = 5
    with pytest.raises(FormatError):
        data.decode(bytes(bad))


def test_unwritable_path_names_path(tmp_path):
    target = tmp_path / "missing" / "x.msds"
    with pytest.raises(OSError, match="missing"):
        data.write_dataset(target, data.generate_dataset(1, 0))


def test_split_fraction():
    train, test = data.generate_dataset(50, 0).split(0.9)
    assert (len(train), len(test)) == (45, 5)
    with pytest.raises(ConfigError):
        data.generate_dataset(5, 0).split(1.0)


def test_config_json_round_trip(tmp_path):
    cfg = TrainConfig(lam=3.0, gan_steps=10)
    path = tmp_path / "c.json"
    cfg.save(path)
    assert TrainConfig.load(path) == cfg
    path.write_text(json.dumps({"lam": 1.0, "lambda_typo": 2}))
    with pytest.raises(ConfigError, match="lambda_typo"):
        TrainConfig.load(path)
    with pytest.raises(ConfigError):
        TrainConfig(split=1.5)
    with pytest.raises(ConfigError):
        TrainConfig(samples=0)
    seeded = cfg.with_seed(9)
    assert (seeded.data_seed, seeded.surrogate_seed, seeded.gan_seed, seeded.sa_seed) == (9, 9, 9, 9)


def test_config_defaults_follow_training_table():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.beta1, cfg.beta2) == (2e-4, 0.5, 0.999)
    assert cfg.n_critic == 6 and cfg.split == 0.9
    x = cfg.xgan_config()
    assert x.labels.real == -1.0 and x.labels.fake == 1.0 and x.labels.generator == 1.0
