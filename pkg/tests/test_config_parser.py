"""Tests du parseur de configuration clé = valeur"""

from pathlib import Path

import numpy as np
import pytest

from src.infrastructure.config_parser import load_config, parse_config, parse_flow
from src.models.data_contracts import (
    ConfigParseError,
    FlowPreset,
    FlowTraceError,
    ForceMode,
    RunStrategy,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.unit
class TestFlowValues:

    def test_presets(self):
        flow, preset, rate = parse_flow("uniaxial 0.05")
        assert preset == FlowPreset.UNIAXIAL and rate == 0.05
        assert np.allclose(np.diag(flow.a), [0.05, -0.025, -0.025])

        flow, preset, _ = parse_flow("shear 0.5")
        assert preset == FlowPreset.SHEAR and flow.a[0, 1] == 0.5

    def test_zero(self):
        flow, preset, rate = parse_flow("zero")
        assert preset == FlowPreset.ZERO and rate == 0.0 and flow.is_zero

    def test_custom_matrix(self):
        flow, preset, rate = parse_flow("0 1 0  0.5 0 0  0 0 0")
        assert preset == FlowPreset.CUSTOM
        assert rate == 1.0
        assert flow.a[1, 0] == 0.5

    def test_rounding_residual_is_projected(self):
        flow, preset, _ = parse_flow("0.1 0 0 0 -0.05 0 0 0 -0.05000000001")
        assert preset == FlowPreset.CUSTOM
        assert abs(np.trace(flow.a)) < 1e-15

    def test_compressible_flow_rejected(self):
        with pytest.raises(FlowTraceError) as excinfo:
            parse_flow("1 0 0 0 0 0 0 0 0", line_number=4)
        assert excinfo.value.line_number == 4

    @pytest.mark.parametrize("value", ["", "vortex 1.0", "shear", "zero 1", "shear fast", "1 2 3"])
    def test_malformed(self, value):
        with pytest.raises(ConfigParseError):
            parse_flow(value, line_number=1)


@pytest.mark.unit
class TestParseConfig:

    def test_empty_text_gives_defaults(self):
        config = parse_config("")
        assert config.flow_preset == FlowPreset.UNIAXIAL
        assert config.n_particles == 1728
        assert config.strategy == RunStrategy.BOTH
        assert config.resolved_policy == "generalized_kr"
        assert config.resolved_lattice == "kr_general"

    def test_values_and_comments(self):
        config = parse_config(
            "# commentaire\n"
            "\n"
            "flow = shear 0.5   # cisaillement\n"
            "box_side = 10\n"
            "n_particles = 800\n"
            "strategy = do\n"
            "force_mode = verification\n"
            "fallback_to_all_pairs = yes\n"
        )
        assert config.flow_preset == FlowPreset.SHEAR
        assert config.box_side == 10.0
        assert config.n_particles == 800
        assert config.strategy == RunStrategy.DYNAMIC_OFFSET
        assert config.force_mode == ForceMode.VERIFICATION
        assert config.fallback_to_all_pairs is True
        assert config.resolved_policy == "lees_edwards"
        assert config.resolved_lattice == "cubic"

    @pytest.mark.parametrize("token, expected", [("on", True), ("1", True), ("False", False), ("off", False)])
    def test_booleans(self, token, expected):
        assert parse_config(f"fallback_to_all_pairs = {token}").fallback_to_all_pairs is expected

    def test_invalid_boolean(self):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("seed = 3\nfallback_to_all_pairs = maybe")
        assert excinfo.value.line_number == 2

    def test_custom_flow_uses_reduction(self):
        config = parse_config("flow = 0 0.2 0 0 0 0 0 0 0")
        assert config.flow_preset == FlowPreset.CUSTOM
        assert config.resolved_policy == "reduction"

    def test_density_sets_box_side(self):
        config = parse_config("n_particles = 1000\ndensity = 0.125")
        assert config.resolved_box_side == pytest.approx(20.0)


@pytest.mark.unit
class TestParseErrors:

    def test_trace_error_reports_line(self):
        with pytest.raises(FlowTraceError) as excinfo:
            parse_config("n_steps = 10\n# flux\nflow = 0.1 0 0 0 0.1 0 0 0 0.1")
        assert excinfo.value.line_number == 3
        assert str(excinfo.value).startswith("line 3:")

    def test_unknown_key(self):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("n_steps = 10\ntemperatur = 1.0")
        assert excinfo.value.line_number == 2

    def test_duplicate_key(self):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("seed = 1\nseed = 2")
        assert excinfo.value.line_number == 2

    def test_missing_assignment(self):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("n_steps 10")
        assert excinfo.value.line_number == 1

    def test_empty_value(self):
        with pytest.raises(ConfigParseError):
            parse_config("output =")

    def test_box_side_and_density_exclusive(self):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("box_side = 10\ndensity = 0.8")
        assert excinfo.value.line_number == 2

    @pytest.mark.parametrize("text, line", [
        ("n_particles = -5", 1),
        ("seed = 1\nn_particles = many", 2),
        ("dt = 0", 1),
        ("seed = 1\nstrategy = verlet", 2),
        ("burn_in_fraction = 1.5", 1),
    ])
    def test_invalid_values_report_line(self, text, line):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config(text)
        assert excinfo.value.line_number == line

    def test_policy_mismatch_is_global(self):
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("flow = uniaxial 0.1\npolicy = lees_edwards")
        assert excinfo.value.line_number == 0
        assert not str(excinfo.value).startswith("line")


@pytest.mark.unit
class TestLoadConfig:

    def test_none_gives_defaults(self):
        assert load_config(None).n_steps == 10000

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigParseError):
            load_config(tmp_path / "absent.cfg")

    @pytest.mark.parametrize("name, preset, policy", [
        ("uniaxial.cfg", FlowPreset.UNIAXIAL, "generalized_kr"),
        ("shear.cfg", FlowPreset.SHEAR, "lees_edwards"),
        ("planar.cfg", FlowPreset.PLANAR_ELONGATION, "kr_planar"),
    ])
    def test_shipped_configs(self, name, preset, policy):
        config = load_config(CONFIG_DIR / name)
        assert config.flow_preset == preset
        assert config.resolved_policy == policy

    def test_uniaxial_config_values(self):
        config = load_config(CONFIG_DIR / "uniaxial.cfg")
        assert config.flow_rate == 0.05
        assert config.n_particles == 1728
        assert config.resolved_box_side == pytest.approx((1728 / 0.8) ** (1.0 / 3.0))
        assert config.burn_in_steps == 1000
