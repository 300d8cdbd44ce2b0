"""Command-line entry point: ``driftlab {check,moments,invariant,martlab,simulate}``.

Exit codes: 0 pass, 1 usage or config error, 2 a hypothesis check failed,
3 a conclusion or fitted assertion failed.
"""

from __future__ import annotations

import argparse
import importlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .brn import (JumpChainModel, ReactionNetwork, check_brs, constant_H, invariant_from_jumpchain,
                  normalized_affine_H, simulate_ctmc)
from .config import ConfigError, load_config
from .ifs import check_prop_ifs, ifs_from_json
from .invariant import (ReducibleChainError, cesaro_estimate, model_kernel, stationarity_residual,
                        tightness_diagnostic, truncated_stationary_oracle)
from .martlab import DegenerateGeneratorError, fit_increment_scaling, fit_tau_tail, generator_from_json
from .model import Box, ModelError, ProcessModel, simulate_trajectory
from .rng import stream
from .stability import (HypothesisReport, check_drift, check_jump_bound, check_structural,
                        estimate_sup_moment, theorem_rate_bound)
from .walks import walk_preset

EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS, EXIT_CONCLUSION = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- output -----------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


class Run:
    """Resolved config plus the output directory; stamps every file it writes."""

    def __init__(self, cfg: dict, out: Path, workers: int | None, force: bool, plots: bool):
        self.cfg = cfg
        self.seed = cfg["seed"]
        self.out = out
        self.workers = workers
        self.force = force
        self.plots = plots
        self.written: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    @property
    def meta(self) -> dict:
        return {"config": self.cfg, "seed": self.seed, "tool_version": __version__}

    def json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        doc = dict(payload)
        doc.update(self.meta)
        path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n")
        self.written.append(path)
        return path

    def csv(self, name: str, writer) -> Path:
        """``writer(path)`` writes the table; a comment header with the run metadata is prepended."""
        path = self.out / name
        writer(path)
        body = path.read_text()
        head = "# " + json.dumps(_clean(self.meta), sort_keys=True, separators=(",", ":")) + "\n"
        path.write_text(head + body)
        self.written.append(path)
        return path

    def plot(self, fn, name: str, *args, **kwargs):
        if self.plots:
            self.written.append(fn(*args, self.out / name, **kwargs))


# -- model construction ---------------------------------------------------------------

def _H_from(spec: dict | None, dim: int):
    if spec is None:
        return None
    if "constant" in spec:
        v = spec["constant"]
        return constant_H(v * dim if len(v) == 1 and dim > 1 else v)
    a = spec["affine"]
    return normalized_affine_H(a["alpha"], a["beta"])


def build_model(cfg: dict):
    """Return ``(kind, model)``; martingale configs give an increment generator."""
    kind, spec = next(iter(cfg["model"].items()))
    if kind == "walk":
        return kind, walk_preset(spec["preset"], **spec.get("params", {}))
    if kind == "ifs":
        return kind, ifs_from_json(spec)
    if kind == "brn":
        net = ReactionNetwork.from_json(spec["network"])
        check = cfg.get("check", {})
        H = _H_from(spec.get("H", check.get("H")), net.n_species)
        rho = spec.get("rho", check.get("rho", 0.0))
        return kind, JumpChainModel(net, spec["x0"], H=H, rho=rho)
    if kind == "plugin":
        module, _, attr = spec["factory"].partition(":")
        try:
            factory = getattr(importlib.import_module(module), attr)
        except (ImportError, AttributeError) as exc:
            raise UsageError(f"/model/plugin/factory: cannot load {spec['factory']!r}: {exc}") from None
        model = factory(**spec.get("params", {}))
        if not isinstance(model, ProcessModel):
            raise UsageError("/model/plugin/factory: factory must return a ProcessModel")
        return kind, model
    return kind, generator_from_json(spec)


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise UsageError(f"/{where}/{key}: required for this command")
    return section[key]


def _region(model, spec: dict, seed: int) -> list:
    if "states" in spec:
        return [np.asarray(s) for s in spec["states"]]
    if "box" in spec:
        box = Box.from_bounds(spec["box"])
        pts = box.lattice_points()
        if getattr(model, "discrete", False):
            pts = [np.round(p).astype(np.int64) for p in pts]
        return pts
    rnd = spec["random"]
    box = Box.from_bounds(rnd["box"])
    rng = stream(seed, "region", 0)
    return list(rng.uniform(box.lo, box.hi, size=(rnd["count"], box.dim)))


# -- commands -----------------------------------------------------------------------------

def cmd_check(run: Run) -> int:
    kind, model = build_model(run.cfg)
    check = run.cfg.get("check", {})
    region_spec = _need(check, "region", "check")
    if kind == "brn":
        states = [tuple(int(v) for v in x) for x in _region(model, region_spec, run.seed)]
        H = _H_from(check.get("H"), model.net.n_species) or model._H
        rep = check_brs(model.net, H, check.get("rho", model.C.radius), _need(check, "p", "check"),
                        states, check.get("L"))
        run.json("report.json", {"command": "check", "kind": kind, "result": rep.to_dict()})
        run.csv("brs_table.csv", rep.to_csv)
        if run.plots:
            from .plotting import plot_brs_table
            run.plot(plot_brs_table, "brs_table.png", rep)
        return EXIT_OK if rep.ok else EXIT_HYPOTHESIS
    if kind == "ifs":
        pts = [x for x in _region(model, region_spec, run.seed) if not model.C.contains(x)]
        sample = [(x, y) for x in pts for y in range(model.modes)]
        rep = check_prop_ifs(model, sample)
        run.json("report.json", {"command": "check", "kind": kind, "result": rep.to_dict()})
        return EXIT_OK if rep.ok else EXIT_HYPOTHESIS
    if kind == "martingale":
        raise UsageError("/model: the check command needs a process model, not a martingale generator")
    pts = _region(model, region_spec, run.seed)
    off = [x for x in pts if not model.in_C(x)]
    if not off:
        raise UsageError("/check/region: no sampled state lies off C")
    on_spec = check.get("on_c") or (model.C.to_json() if isinstance(getattr(model, "C", None), Box) else None)
    if on_spec is None:
        raise UsageError("/check/on_c: required when C is not a box")
    on = [x for x in _region(model, on_spec, run.seed) if model.in_C(x)]
    n_range = check.get("n_range", [0])
    samples = check.get("samples", 10_000)
    rep = HypothesisReport(
        structural=check_structural(model, off, on, n_range),
        drift=check_drift(model, off, n_range, samples, check.get("tolerance"), seed=run.seed),
        jump=check_jump_bound(model, off, n_range, check.get("p", 3.0), samples, seed=run.seed),
    )
    run.json("report.json", {"command": "check", "kind": kind, "result": rep.to_dict()})
    return EXIT_OK if rep.ok else EXIT_HYPOTHESIS


def cmd_moments(run: Run) -> int:
    kind, model = build_model(run.cfg)
    if kind == "martingale":
        raise UsageError("/model: the moments command needs a process model")
    sim = run.cfg.get("simulate", {})
    r = _need(sim, "r", "simulate")
    p = _need(sim, "p", "simulate")
    variant = sim.get("variant", "conditional")
    bound = theorem_rate_bound(p, variant)
    if r >= bound and not run.force:
        raise UsageError(f"/simulate/r: r={r} is not below the admissible bound {bound} for p={p} "
                         f"({variant}); pass --force to run anyway")
    trace = estimate_sup_moment(model, r, _need(sim, "horizon", "simulate"),
                                _need(sim, "replications", "simulate"), run.seed, workers=run.workers,
                                exponent_tol=sim.get("exponent_tol", 0.1),
                                window_tol=sim.get("window_tol", 0.1))
    run.csv("moments.csv", trace.to_csv)
    run.json("verdict.json", {"command": "moments", "kind": kind, "rate_bound": bound,
                              "forced": bool(r >= bound), "result": trace.summary()})
    if run.plots:
        from .plotting import plot_moment_trace
        run.plot(plot_moment_trace, "moments.png", trace)
    return EXIT_OK if trace.verdict == "bounded" else EXIT_CONCLUSION


def cmd_invariant(run: Run) -> int:
    kind, model = build_model(run.cfg)
    if kind == "martingale":
        raise UsageError("/model: the invariant command needs a process model")
    inv = run.cfg.get("invariant", {})
    if not getattr(model, "discrete", False):
        raise UsageError("/model: continuous-state model; occupation measures need a discrete state space")
    mu = cesaro_estimate(model, _need(inv, "horizon", "invariant"), inv.get("replications", 1),
                         run.seed, workers=run.workers)
    mu.info["weak_feller_attested"] = bool(inv.get("weak_feller_attested", False))
    summary = {"command": "invariant", "kind": kind, "support_size": len(mu.support)}
    kernel = None
    try:
        if model.support(0, model.x0) is not None:
            kernel = model_kernel(model)
    except Exception:
        kernel = None
    if kernel is not None:
        summary["empirical_residual"] = stationarity_residual(mu, kernel)
    transfer = kind == "brn" and inv.get("transfer", True)
    code = EXIT_OK
    if "box" in inv:
        if kernel is None:
            raise UsageError("/invariant/box: the oracle needs a model with an exact one-step law")
        try:
            oracle = truncated_stationary_oracle(kernel, Box.from_bounds(inv["box"]),
                                                 inv.get("boundary", "reject"))
        except ReducibleChainError as exc:
            run.json("oracle.json", {"command": "invariant", "error": str(exc),
                                     "recurrent_classes": exc.classes})
            run.json("measure.json", {"command": "invariant", "measure": mu.to_json()})
            return EXIT_HYPOTHESIS
        summary["oracle_residual"] = oracle.info["residual"]
        summary["tv_empirical_oracle"] = mu.tv(oracle)
        payload = {"command": "invariant", "measure": oracle.to_json(), "tv_to_empirical": mu.tv(oracle)}
        if transfer:
            ctmc_oracle = invariant_from_jumpchain(oracle, model.net)
            payload["ctmc_measure"] = ctmc_oracle.to_json()
        run.json("oracle.json", payload)
        run.csv("oracle.csv", oracle.to_csv)
    mu_payload = {"command": "invariant", "measure": mu.to_json()}
    if transfer:
        ctmc = invariant_from_jumpchain(mu, model.net)
        mu_payload["ctmc_measure"] = ctmc.to_json()
        if "box" in inv:
            summary["tv_ctmc_empirical_oracle"] = ctmc.tv(ctmc_oracle)
    run.json("measure.json", mu_payload)
    run.csv("measure.csv", mu.to_csv)
    if "kappa" in inv:
        G = (lambda s: model.G(0, np.asarray(s)))
        rows = tightness_diagnostic(mu, G, inv["kappa"])
        summary["tightness"] = rows
        if run.plots:
            from .plotting import plot_tightness
            run.plot(plot_tightness, "tightness.png", rows)
    run.json("invariant.json", summary)
    if run.plots:
        from .plotting import plot_measure
        run.plot(plot_measure, "measure.png", mu, reference=oracle if "box" in inv else None)
    return code


def cmd_martlab(run: Run) -> int:
    kind, gen = build_model(run.cfg)
    if kind != "martingale":
        raise UsageError("/model: the martlab command needs a martingale generator")
    ml = run.cfg.get("martlab", {})
    p = _need(ml, "p", "martlab")
    fits = {}
    fit = fit_increment_scaling(gen, p, _need(ml, "n_grid", "martlab"), ml.get("replications", 10_000),
                                run.seed, r=ml.get("r", 1.0), tail_grid=ml.get("tail_grid"),
                                slack=ml.get("slack", 0.3), workers=run.workers)
    fits["scaling"] = fit
    if "tau_grid" in ml:
        fits["tau_tail"] = fit_tau_tail(gen, p, ml.get("tau_r", 1.0), ml["tau_grid"],
                                        ml.get("tau_replications", ml.get("replications", 10_000)),
                                        run.seed, slack=ml.get("tau_slack", 0.5), workers=run.workers)
    verdicts = [fit.passed, fit.tail.passed if fit.tail else None]
    if "tau_tail" in fits:
        verdicts.append(fits["tau_tail"].passed)
    run.json("fits.json", {"command": "martlab", "generator": gen.describe(),
                           "fits": {k: v.to_dict() for k, v in fits.items()}})
    for name, f in fits.items():
        run.csv(f"fits_{name}.csv", f.to_csv)
        if run.plots:
            from .plotting import plot_fit
            run.plot(plot_fit, f"fits_{name}.png", f, title=name)
    return EXIT_CONCLUSION if any(v is False for v in verdicts) else EXIT_OK


def cmd_simulate(run: Run) -> int:
    kind, model = build_model(run.cfg)
    if kind == "martingale":
        raise UsageError("/model: the simulate command needs a process model")
    sim = run.cfg.get("simulate", {})
    if kind == "brn" and "t_end" in sim:
        traj = simulate_ctmc(model.net, model.x0, sim["t_end"], run.seed)
    else:
        traj = simulate_trajectory(model, _need(sim, "horizon", "simulate"), run.seed)
    run.csv("trajectory.csv", lambda path: traj.to_csv(path, serialize=model.serialize_state))
    run.json("trajectory.json", {"command": "simulate", "kind": kind, "steps": len(traj) - 1,
                                 "final_state": model.serialize_state(traj.states[-1])})
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "moments": cmd_moments,
    "invariant": cmd_invariant,
    "martlab": cmd_martlab,
    "simulate": cmd_simulate,
}


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", metavar="PATH", **d, help="JSON run configuration")
    parser.add_argument("--seed", type=int, metavar="N", **d, help="override the config seed")
    parser.add_argument("--workers", type=int, metavar="N", **d,
                        help="worker threads (default: $DRIFTLAB_WORKERS or 1)")
    parser.add_argument("--out", metavar="DIR", **d, help="output directory")
    parser.add_argument("--force", action="store_true", **d, help="run r outside the admissible range")
    parser.add_argument("--plots", action="store_true", **d, help="also render PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftlab", description="Drift-condition moment bounds toolkit")
    parser.add_argument("--version", action="version", version=f"driftlab {__version__}")
    _common(parser, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip() or None)
        _common(p, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    opts = {"config": None, "seed": None, "workers": None, "out": None, "force": False, "plots": False}
    opts.update({k: v for k, v in vars(args).items() if k in opts})
    if opts["config"] is None:
        print("error: --config is required", file=sys.stderr)
        return EXIT_USAGE
    if opts["workers"] is not None and opts["workers"] < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(opts["config"], opts["seed"])
        out = Path(opts["out"] or cfg.get("output", {}).get("dir", "driftlab-out"))
        run = Run(cfg, out, opts["workers"], opts["force"], opts["plots"])
        code = COMMANDS[args.command](run)
    except (ConfigError, UsageError, DegenerateGeneratorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ModelError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path in run.written:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
