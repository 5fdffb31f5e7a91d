import pytest

from voltdrop.config import Experiment, ExperimentConfig, KEYS, config_items, load_config, parse_config
from voltdrop.errors import ConfigError
from voltdrop.workload import Pattern, Sequence


def test_empty_config_is_defaults():
    assert parse_config("") == ExperimentConfig()
    assert parse_config("# only a comment\n\n") == ExperimentConfig()


def test_values_parse():
    cfg = parse_config("""
experiment = sequence
wl.sequence = waw      # case does not matter
wl.req_size = 16K
ftl.cache_bytes = 8M
ftl.cache_enabled = off
wl.pattern = sequential
""")
    assert cfg.experiment is Experiment.SEQUENCE
    assert cfg.wl_sequence is Sequence.WAW
    assert cfg.wl_req_size == 16 * 1024
    assert cfg.ftl_cache_bytes == 8 << 20
    assert cfg.ftl_cache_enabled is False
    assert cfg.wl_pattern is Pattern.SEQUENTIAL


@pytest.mark.parametrize("text, line, fragment", [
    ("wl.write_pct = 150", 1, "<= 100"),
    ("\n\nbogus.key = 1", 3, "unknown key"),
    ("wl.iops = 0", 1, "> 0"),
    ("wl.req_size = 6K", 1, "4KiB multiple"),
    ("wl.req_size = 2M", 1, "4KiB multiple"),
    ("experiment = nope", 1, "expected one of"),
    ("wl.seed = 1\nwl.seed = 2", 2, "duplicate"),
    ("just words", 1, "key = value"),
    ("power.t_unavailable_ms = 950", 1, "t_unavailable < t_zero_loaded"),
    ("experiment = sequence\nwl.write_pct = 0", 2, "write_pct"),
])
def test_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_items_round_trip():
    cfg = parse_config("wl.write_pct = 80\nwl.pattern = sequential\nexperiment = wss")
    text = "\n".join(f"{k} = {v}" for k, v in config_items(cfg).items()
                     if not (k == "wl.req_size" and v == "uniform"))
    assert parse_config(text) == cfg
    assert set(config_items(cfg)) == set(KEYS)


@pytest.mark.parametrize("scale", [0.01, 0.5, 1.0])
def test_scaling(scale):
    cfg = ExperimentConfig()
    run = cfg.run_config(scale)
    assert run.workload.n_requests == round(cfg.wl_n_requests * scale)
    assert run.n_faults == round(cfg.faults_count * scale)
    assert run.workload.wss <= cfg.wl_wss_bytes
    assert cfg.run_config(scale, fixed_wss=True).workload.wss == cfg.wl_wss_bytes


def test_working_set_must_fit():
    cfg = parse_config("flash.blocks = 64\nflash.pages_per_block = 64\nwl.wss_bytes = 15M")
    with pytest.raises(ConfigError, match="does not fit"):
        cfg.run_config(1.0)
