import pytest

from driftwatch.config import MINUTE_NS, Config, ConfigError, load_config, parse_config_text


def test_defaults():
    cfg = Config()
    assert cfg.decay_beta == 0.95
    assert cfg.gamma == 0.5
    assert cfg.delta == 0.7
    assert cfg.window_ns == 15 * MINUTE_NS
    assert cfg.sigma_k == 2.0
    assert cfg.encoding_dim == 139
    assert cfg.whitelist == ("libc.so", "libm.so", "ld.so", "libdl")


def test_parse_text_with_comments_lists_and_aliases():
    vals = parse_config_text(
        "# comment\n"
        "beta = 0.9\n"
        "window_minutes = 5  # trailing\n"
        "whitelist = libc.so, libz.so\n"
        "use_pseudo_edges = off\n"
        "pool_capacity = none\n"
    )
    assert vals == {
        "decay_beta": 0.9,
        "window_ns": 5 * MINUTE_NS,
        "whitelist": ("libc.so", "libz.so"),
        "use_pseudo_edges": False,
        "pool_capacity": None,
    }


def test_precedence_default_file_env_flag(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("delta = 0.5\ngamma = 0.4\nk_hop = 2\n")
    env = {"DRIFTWATCH_GAMMA": "0.3", "DRIFTWATCH_K_HOP": "3"}
    cfg = load_config(path, overrides={"k_hop": "5"}, environ=env)
    assert cfg.delta == 0.5  # file over default
    assert cfg.gamma == 0.3  # env over file
    assert cfg.k_hop == 5  # flag over env
    assert cfg.decay_beta == 0.95  # default


@pytest.mark.parametrize("text", [
    "nonsense = 1",
    "beta = 0",
    "hash_dim = 4",
    "attention = dot",
    "strict_max = maybe",
    "k_hop = x",
    "no equals sign",
])
def test_invalid_config_rejected(text):
    with pytest.raises(ConfigError):
        Config(**parse_config_text(text))


def test_dict_round_trip():
    cfg = Config(gamma=0.25, whitelist=("a", "b"), pool_capacity=7)
    assert Config.from_dict(cfg.to_dict()) == cfg
