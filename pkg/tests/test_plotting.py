import json

from driftlab.cli import main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def run(tmp_path, cfg, command, *flags):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / command
    return main([command, "--config", str(path), "--out", str(out), *flags]), out


def test_figures_only_with_flag(tmp_path):
    cfg = {"seed": 1, "model": {"walk": {"preset": "biased-reflected"}},
           "simulate": {"horizon": 100, "replications": 100, "r": 1, "p": 4}}
    _, out = run(tmp_path, cfg, "moments")
    assert not list(out.glob("*.png"))
    _, out = run(tmp_path, cfg, "moments", "--plots")
    assert (out / "moments.png").read_bytes().startswith(PNG_MAGIC)


def test_figures_for_each_command(tmp_path):
    net = {"species": ["S"], "reactions": [{"products": {"S": 1}, "rate": 1.0},
                                            {"reactants": {"S": 1}, "rate": 1.0}]}
    cfg = {"seed": 2, "model": {"brn": {"network": net, "x0": [0], "rho": 3}},
           "check": {"p": 3, "H": {"constant": [0.5]}, "region": {"box": [[3, 50]]}},
           "invariant": {"horizon": 2000, "box": [[0, 20]], "kappa": [1, 2, 4]}}
    assert run(tmp_path, cfg, "check", "--plots")[0] == 0
    assert run(tmp_path, cfg, "invariant", "--plots")[0] == 0
    ml = {"seed": 3, "model": {"martingale": {"name": "pm1"}},
          "martlab": {"p": 4, "n_grid": [8, 16, 32, 64], "replications": 2000}}
    assert run(tmp_path, ml, "martlab", "--plots")[0] == 0
    for name in ("check/brs_table.png", "invariant/measure.png", "invariant/tightness.png",
                 "martlab/fits_scaling.png"):
        assert (tmp_path / name).read_bytes().startswith(PNG_MAGIC), name
