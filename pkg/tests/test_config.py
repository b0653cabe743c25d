import pytest

from sagwave.config import KNOWN_KEYS, ConfigError, parse_config_text
from sagwave.simulator import PerturbationSpec, Ring, Scenario, Stretch


def test_empty_text_is_the_default_ring():
    cfg = parse_config_text("# nothing set\n\n")
    assert cfg.scenario == Scenario()
    assert cfg.scenario.topology == Ring(1000.0)


def test_values_and_comments():
    cfg = parse_config_text("""
        topology = ring   # inline comment
        n_vehicles = 40
        idm.v0 = 30
        perturb.T_rel_sigma = 0
        detectors.positions_m = 10, 20
    """)
    sc = cfg.scenario
    assert sc.n_vehicles == 40 and sc.base_params.v0 == 30.0
    assert sc.perturbation == PerturbationSpec(T_rel_sigma=0.0)
    assert sc.detector_positions == (10.0, 20.0)


def test_stretch_departures():
    cfg = parse_config_text("topology = stretch\nn_vehicles = 3\ndeparture_headway_s = 4\n")
    assert cfg.scenario.topology == Stretch(2000.0)
    assert cfg.scenario.departures == (0.0, 4.0, 8.0)
    explicit = parse_config_text("topology = stretch\ndepartures_s = 0, 1.5, 9\n")
    assert explicit.scenario.departures == (0.0, 1.5, 9.0)


@pytest.mark.parametrize("text,line,key", [
    ("n_vehicles = 50\nspeed = 3\n", 2, "speed"),
    ("idm.v0 = 30\nidm.v0 = 31\n", 2, "idm.v0"),
    ("\n\nn_vehicles = many\n", 3, "n_vehicles"),
    ("idm.T = -1\n", 1, "idm.T"),
    ("topology = torus\n", 1, "topology"),
])
def test_errors_carry_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    assert exc.value.line == line and exc.value.key == key
    assert key in str(exc.value) and f"line {line}" in str(exc.value)


def test_missing_equals_sign():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("topology ring\n")


def test_resolved_lists_every_idm_and_perturbation_key():
    resolved = parse_config_text("").resolved()
    assert {k for k in KNOWN_KEYS if k.startswith(("idm.", "perturb."))} <= set(resolved)
