"""Config model tests: the reference scenario, validation coverage and the
config file round trip."""

import dataclasses

import pytest

from cfran.model import (
    BanditConfig,
    ConfigError,
    Mode,
    OruConfig,
    OruKind,
    SchedulerConfig,
    check,
    default_scenario,
    from_dict,
    load_config,
    save_config,
    to_dict,
    validate,
    with_mode,
    with_seed,
)


class TestDefaultScenario:
    def test_radio_unit_counts(self):
        cfg = default_scenario()
        orus = cfg.topology.orus
        assert len(orus) == 6
        assert sum(o.kind == OruKind.MACRO for o in orus) == 1
        assert sum(o.kind == OruKind.MICRO for o in orus) == 5

    def test_reference_parameters(self):
        cfg = default_scenario()
        macro = cfg.topology.orus[0]
        assert (macro.tx_power_dbm, macro.num_antennas, macro.antenna_height) == (46.0, 128, 45.0)
        for micro in cfg.topology.orus[1:]:
            assert (micro.tx_power_dbm, micro.num_antennas, micro.antenna_height) == (30.0, 32, 6.0)
        assert cfg.topology.num_rbs == 69
        assert cfg.total_slots == 1400
        assert cfg.epoch_slots == 50
        assert len(cfg.topology.users) == 40
        assert cfg.topology.carrier_freq_hz == 3.6e9

    def test_passes_validation(self):
        assert check(default_scenario()) == []

    def test_users_inside_area(self):
        cfg = default_scenario(seed=9)
        w, h = cfg.topology.area_m
        for u in cfg.topology.users:
            assert 0 <= u.position[0] <= w
            assert 0 <= u.position[1] <= h

    def test_seed_controls_user_placement(self):
        a = default_scenario(seed=1)
        b = default_scenario(seed=1)
        c = default_scenario(seed=2)
        assert a.topology.users == b.topology.users
        assert a.topology.users != c.topology.users
        assert a.topology.orus == c.topology.orus

    def test_with_seed_redraws_users_only(self):
        cfg = default_scenario(seed=1)
        moved = with_seed(cfg, 5)
        assert moved.seed == 5
        assert moved.topology.users != cfg.topology.users
        assert moved.topology.orus == cfg.topology.orus
        assert moved.topology.users == default_scenario(seed=5).topology.users


class TestValidate:
    def test_valid_config_returned_unchanged(self):
        cfg = default_scenario()
        assert validate(cfg) is cfg

    def test_idempotent(self):
        cfg = default_scenario()
        assert validate(validate(cfg)) == cfg

    def test_zero_antennas_names_offender(self):
        cfg = default_scenario()
        orus = list(cfg.topology.orus)
        orus[2] = dataclasses.replace(orus[2], num_antennas=0)
        bad = dataclasses.replace(
            cfg, topology=dataclasses.replace(cfg.topology, orus=tuple(orus))
        )
        with pytest.raises(ConfigError) as err:
            validate(bad)
        assert any("orus[2].num_antennas" in v for v in err.value.violations)

    def test_duplicate_user_ids_reported(self):
        cfg = default_scenario()
        users = list(cfg.topology.users)
        users[3] = dataclasses.replace(users[3], id=2)
        bad = dataclasses.replace(
            cfg, topology=dataclasses.replace(cfg.topology, users=tuple(users))
        )
        with pytest.raises(ConfigError) as err:
            validate(bad)
        assert any("duplicate ids [2]" in v for v in err.value.violations)

    def test_collects_every_violation(self):
        cfg = default_scenario()
        bad = dataclasses.replace(
            cfg,
            epoch_slots=0,
            bandit=BanditConfig(arms=(0.5, 0.5), alpha=1.5),
            scheduler=SchedulerConfig(max_users_per_rb=0),
        )
        violations = check(bad)
        assert len(violations) >= 4

    def test_cap_limited_by_antennas(self):
        cfg = dataclasses.replace(
            default_scenario(), scheduler=SchedulerConfig(max_users_per_rb=256)
        )
        assert any("max_users_per_rb" in v for v in check(cfg))

    def test_fixed_delta_mode_needs_delta(self):
        cfg = with_mode(default_scenario(), Mode.FIXED_DELTA)
        assert any("fixed_delta" in v for v in check(cfg))
        ok = with_mode(default_scenario(), Mode.FIXED_DELTA, 0.8)
        assert check(ok) == []

    def test_stray_fixed_delta_rejected(self):
        cfg = dataclasses.replace(default_scenario(), fixed_delta=0.5)
        assert any("fixed_delta" in v for v in check(cfg))


class TestSerialization:
    def test_round_trip_is_field_exact(self, tmp_path):
        cfg = default_scenario(seed=123)
        path = tmp_path / "scenario.yaml"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_round_trip_fixed_delta(self, tmp_path):
        cfg = with_mode(default_scenario(), Mode.FIXED_DELTA, 0.8)
        path = tmp_path / "scenario.yaml"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_unknown_keys_are_errors(self):
        data = to_dict(default_scenario())
        data["frobnicate"] = 1
        data["channel"]["mystery"] = 2
        with pytest.raises(ConfigError) as err:
            from_dict(data)
        joined = "\n".join(err.value.violations)
        assert "frobnicate" in joined and "mystery" in joined

    def test_missing_keys_are_errors(self):
        data = to_dict(default_scenario())
        del data["bandit"]["alpha"]
        with pytest.raises(ConfigError) as err:
            from_dict(data)
        assert any("bandit.alpha" in v for v in err.value.violations)

    def test_non_mapping_file_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- just\n- a list\n")
        with pytest.raises(ConfigError):
            load_config(path)


def test_oru_defaults_match_kind():
    macro = OruConfig(id=0, position=(0, 0), antenna_height=45.0, tx_power_dbm=46.0,
                      num_antennas=128, kind=OruKind.MACRO)
    assert macro.kind.value == "macro"
    assert default_scenario().num_epochs == 28
