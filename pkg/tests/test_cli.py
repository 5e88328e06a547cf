import copy
import json
from pathlib import Path

import pytest

from fermiflow.cli import CSV_HEADER, ConfigError, main, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

OPTIONAL = {
    "seed",
    "output",
    "surface.params.n",
    "surface.params.kappa",
    "surface.params.sampling",
    "flow.h",
    "flow.export_every",
    "checks.flow",
    "checks.steiner",
    "checks.steiner.tol",
    "checks.compare",
    "checks.rauch",
    "checks.rauch.kappa1",
    "checks.rauch.kappa2",
    "checks.rauch.r_max",
    "checks.rauch.h",
    "checks.existence",
    "checks.existence.eternal",
    "checks.volume-bound",
    "checks.volume-bound.observe",
    "checks.pinch",
    "checks.pinch.kappa_ref",
}


def _load(name):
    return json.loads((CONFIGS / name).read_text())


def _leaves(doc, prefix=()):
    for key, val in doc.items():
        yield prefix + (key,)
        if isinstance(val, dict):
            yield from _leaves(val, prefix + (key,))


def test_fixture_config_exit_zero(tmp_path):
    assert main(["all", "--config", str(CONFIGS / "fixture_all.json"), "--out", str(tmp_path), "--threads", "2"]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    expected = {"flow.csv", "steiner.csv", "compare.csv", "rauch.csv", "existence.csv", "volume-bound.csv", "pinch.csv", "summary.json"}
    assert expected <= names
    for p in tmp_path.glob("*.csv"):
        assert p.read_text().splitlines()[0] == CSV_HEADER
    lines = (tmp_path / "steiner.csv").read_text().splitlines()
    assert lines[1] == "r,flow_area,steiner_area,rel_diff"
    at_one = [row.split(",") for row in lines[2:] if row.startswith("1,")]
    assert len(at_one) == 1
    assert abs(float(at_one[0][1]) - float(at_one[0][2])) <= 1e-6 * float(at_one[0][2])
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["exit_status"] == 0 and summary["seed"] == 7
    assert all(v["verdict"] == "Holds" for v in summary["checks"].values())


def test_existence_only_config(tmp_path):
    assert main(["all", "--config", str(CONFIGS / "existence_only.json"), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "existence.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[2].startswith("d,")


def test_violated_config_exit_one(tmp_path):
    assert main(["compare", "--config", str(CONFIGS / "violated_compare.json"), "--out", str(tmp_path)]) == 1
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert any("ViolatedAt(" in r for r in rows)


def test_single_subcommand_writes_only_its_csv(tmp_path):
    assert main(["existence", "--config", str(CONFIGS / "fixture_all.json"), "--out", str(tmp_path), "--threads", "1"]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["existence.csv", "summary.json"]


def test_missing_subcommand_section(tmp_path, capsys):
    assert main(["steiner", "--config", str(CONFIGS / "existence_only.json"), "--out", str(tmp_path)]) == 2
    assert "checks.steiner" in capsys.readouterr().err


def test_field_deletion_fuzz(tmp_path):
    doc = _load("fixture_all.json")
    for path in _leaves(doc):
        broken = copy.deepcopy(doc)
        node = broken
        for key in path[:-1]:
            node = node[key]
        del node[path[-1]]
        dotted = ".".join(path)
        if dotted in OPTIONAL:
            parse_config(broken, CONFIGS, str(tmp_path), env={})
            continue
        with pytest.raises(ConfigError) as info:
            parse_config(broken, CONFIGS, str(tmp_path), env={})
        assert info.value.path.startswith(dotted), (dotted, str(info.value))


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"checks": {"existence": {"c_mu": 1,,}}}')
    assert main(["all", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "line 1, column" in capsys.readouterr().err
    doc = _load("fixture_all.json")
    doc["flow"]["h"] = -1
    cfg = tmp_path / "neg.json"
    cfg.write_text(json.dumps(doc))
    assert main(["flow", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "flow.h" in capsys.readouterr().err
    doc = _load("fixture_all.json")
    doc["checks"]["bogus"] = {}
    cfg.write_text(json.dumps(doc))
    assert main(["all", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert main(["all", "--config", str(tmp_path / "nope.json")]) == 2


def test_seed_env_override(tmp_path):
    doc = {
        "seed": 1,
        "ambient": {"kind": "pinched", "kappa": 0.5, "eps": 0.1},
        "surface": {"preset": "random", "params": {"n": 2, "points": 4, "curvature_scale": 0.3}},
        "flow": {"r_max": 0.2, "h": 0.01},
        "checks": {"flow": {}},
    }
    a = parse_config(doc, env={})
    b = parse_config(doc, env={"FERMI_FLOW_SEED": "99"})
    c = parse_config(doc, env={"FERMI_FLOW_SEED": "99"})
    assert a.seed == 1 and b.seed == 99
    assert (a.surface.lam != b.surface.lam).any()
    assert (b.surface.lam == c.surface.lam).all()
    assert b.ambient.seed == 99
    with pytest.raises(ConfigError):
        parse_config(doc, env={"FERMI_FLOW_SEED": "x"})


def test_surface_csv_input(tmp_path):
    from fermiflow.surface import round_sphere, write_surface_csv

    write_surface_csv(round_sphere(1.0, 2, 0.0, sampling=16), tmp_path / "s.csv")
    doc = {
        "ambient": {"kind": "space_form", "kappa": 0.0},
        "surface": {"csv": "s.csv"},
        "flow": {"r_max": 0.5, "h": 0.01},
        "checks": {"steiner": {}},
    }
    (tmp_path / "c.json").write_text(json.dumps(doc))
    assert main(["all", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0
    doc["surface"]["csv"] = "missing.csv"
    with pytest.raises(ConfigError) as info:
        parse_config(doc, tmp_path)
    assert info.value.path == "surface.csv"


def test_thread_count_byte_identical(tmp_path):
    cfg = str(CONFIGS / "fixture_all.json")
    assert main(["all", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["all", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    for p in (tmp_path / "a").glob("*.csv"):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
