import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from glyphfactor.config import COMMANDS, ConfigError, build_config, describe, load_config, parse_overrides
from glyphfactor.model import TrainConfig
from glyphfactor.report import BASELINE, Fragment, ReportError, emit_report, parse_report, render_table


# --- config --------------------------------------------------------------------------

@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_every_field_has_a_default(command):
    cfg = build_config(command, {})
    assert dataclasses.asdict(cfg)
    assert describe(command).count("\n") + 1 == len(dataclasses.fields(COMMANDS[command]))


def test_train_defaults_match_train_config():
    run = build_config("train", {})
    assert run.train_config() == TrainConfig()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        build_config("train", {"bogus": 1})


@pytest.mark.parametrize("key,value", [("epochs", "ten"), ("epochs", 2.5), ("recon", "maybe"), ("lr", True)])
def test_bad_types_rejected(key, value):
    with pytest.raises(ConfigError, match=key):
        build_config("train", {key: value})


def test_override_forms():
    raw = parse_overrides("train", ["--lambda-sign", "0.5", "--epochs=3", "--no-recon", "--sign-disc",
                                    "--out=a-b"])
    assert raw == {"lambda_sign": "0.5", "epochs": "3", "recon": False, "sign_disc": True, "out": "a-b"}
    cfg = build_config("train", raw)
    assert cfg.lambda_sign == 0.5 and cfg.epochs == 3 and cfg.recon is False


@pytest.mark.parametrize("tokens", [["epochs", "3"], ["--epochs"], ["--"]])
def test_malformed_overrides(tokens):
    with pytest.raises(ConfigError):
        parse_overrides("train", tokens)


def test_file_then_overrides_then_forced(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("epochs: 5\nlr: 0.01\nseed: 1\n")
    cfg = load_config("train", path, ["--lr", "0.5"], seed=9, out=None)
    assert (cfg.epochs, cfg.lr, cfg.seed, cfg.out) == (5, 0.5, 9, "run")


def test_list_fields(tmp_path):
    path = tmp_path / "r.yaml"
    path.write_text("scribes: [a, b]\n")
    assert load_config("reconstruct", path).scribes == ["a", "b"]
    assert load_config("reconstruct", None, ["--signs", "x, y"]).signs == ["x", "y"]


@pytest.mark.parametrize("text", ["[1, 2]\n", "a: [\n"])
def test_bad_yaml(tmp_path, text):
    path = tmp_path / "c.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config("train", path)


# --- report --------------------------------------------------------------------------

def test_report_roundtrip():
    frags = [
        Fragment("+Recon +Scribe +Sign", "f1", 0.25, {"fold_f1": [0.1, 0.4]}),
        Fragment("+Recon +Scribe +Sign", "qvec", 12.5),
        Fragment(BASELINE, "f1", 0.1),
    ]
    text = emit_report(frags, meta={"seed": 3, "average": "macro"})
    rep = parse_report(text)
    assert rep["meta"] == {"seed": 3, "average": "macro"}
    assert rep["metrics"]["+Recon_+Scribe_+Sign.f1"] == 0.25
    assert rep["metrics"]["+Recon_+Scribe_+Sign.f1.fold_f1"] == [0.1, 0.4]
    assert rep["metrics"]["+Recon_+Scribe_+Sign.qvec"] == 12.5
    assert rep["table"][0].split() == ["Model", "F1", "QVEC"]
    assert rep["table"][-1].split() == ["Most", "common", "0.100", "-"]


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=5))
def test_report_values_roundtrip_exactly(values):
    frags = [Fragment(f"m{i}", "f1", v) for i, v in enumerate(values)]
    metrics = parse_report(emit_report(frags))["metrics"]
    assert [metrics[f"m{i}.f1"] for i in range(len(values))] == values


def test_empty_report_rejected():
    with pytest.raises(ReportError):
        emit_report([])


def test_table_columns_align():
    lines = render_table([Fragment("short", "f1", 0.5), Fragment("a much longer name", "qvec", 3.0)]).splitlines()
    assert len({len(l) for l in lines}) == 1


def test_report_written_to_path(tmp_path):
    emit_report([Fragment("m", "qvec", 1.0)], tmp_path / "r.txt")
    assert parse_report(tmp_path / "r.txt")["metrics"]["m.qvec"] == 1.0
