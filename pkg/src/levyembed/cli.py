"""Command line driver: levyembed {check,solve,simulate,embed,verify} CONFIG.

Exit codes
    0   accepted (or all verification checks passed)
    1   verification ran but at least one check failed
    2   pair rejected
    3   pair unverified (feasible on the grid, regularity or residual not confirmed)
    64  malformed configuration
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .density import DensityPair
from .embed import outcomes_to_csv
from .errors import ConfigError, LevyEmbedError
from .levy_core import LevyTriplet, SmoothFunction
from .pathsim import PathConfig, simulate_path
from .verify import MCConfig, fokker_planck_residual, prepare, run_embedding_mc, snapshot_csv

EXIT_OK, EXIT_FAIL, EXIT_REJECTED, EXIT_UNVERIFIED, EXIT_CONFIG = 0, 1, 2, 3, 64
VERDICT_EXIT = {"accepted": EXIT_OK, "rejected": EXIT_REJECTED, "unverified": EXIT_UNVERIFIED}

DEFAULTS = {
    "triplet": {"alpha2": 1.0, "gamma": 0.0, "nu": {"kind": "none", "params": {}}},
    "pair": {
        "h0": {"kind": "gaussian", "params": {"mean": 0.0, "variance": 1.0}},
        "h1": {"kind": "gaussian", "params": {"mean": 0.0, "variance": 2.0}},
    },
    "grid": {"extent": None, "dx": None},
    "path": PathConfig().to_dict(),
    "mc": {"n_paths": 10000, "u_probe": [0.5, 1.0, 2.0], "s_probe": [0.5], "workers": 1,
           "t_max_factor": 50.0, "ks_allowance": 0.005},
    "simulate": {"n_paths": 3, "t_end": 1.0},
    "epsilon": None,
    "residual_tol": 1e-3,
    "output_dir": "levyembed-out",
}


def _merge(base, over, where=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and k not in ("triplet", "pair"):
            if not isinstance(v, dict):
                raise ConfigError(f"{where + k!r} must be an object")
            out[k] = _merge(base[k], v, where + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    """Resolved configuration; ``to_dict`` and ``from_dict`` are inverse."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    def to_dict(self):
        return copy.deepcopy(self.data)

    def validate(self):
        self.triplet()
        self.pair()
        self.path_config()
        self.mc_config()
        e = self.data["epsilon"]
        if e is not None and not (0 < float(e) < 1):
            raise ConfigError("epsilon must lie in (0, 1)")

    def triplet(self):
        try:
            return LevyTriplet.from_dict(self.data["triplet"])
        except LevyEmbedError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad triplet: {exc}") from exc

    def pair(self):
        try:
            return DensityPair.from_dict(self.data["pair"])
        except LevyEmbedError:
            raise
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise ConfigError(f"bad density pair: {exc}") from exc

    def path_config(self):
        try:
            return PathConfig(**self.data["path"])
        except TypeError as exc:
            raise ConfigError(f"bad path config: {exc}") from exc

    def mc_config(self):
        m = self.data["mc"]
        try:
            return MCConfig(n_paths=int(m["n_paths"]), path=self.path_config(),
                            u_probe=tuple(float(u) for u in m["u_probe"]),
                            s_probe=tuple(float(s) for s in m["s_probe"]),
                            workers=int(m["workers"]), t_max_factor=float(m["t_max_factor"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad mc config: {exc}") from exc


def apply_override(d, assignment):
    """Set a leaf ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    cur[parts[-1]] = val


def load_config(path, overrides=()):
    try:
        if path is None:
            raw = {}
        else:
            with open(path) as fh:
                raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    merged = _merge(DEFAULTS, raw)
    for o in overrides:
        apply_override(merged, o)
    return RunConfig.from_dict(merged)


# ---------------------------------------------------------------------------


def _dump(obj, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_jsonify) + "\n")


def _jsonify(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _finite(o):
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    return o


def _envelope(cfg: RunConfig, command, body):
    return _finite({"command": command, "version": __version__, "config": cfg.to_dict(), **body})


def _outdir(cfg):
    d = cfg.data["output_dir"]
    os.makedirs(d, exist_ok=True)
    return d


def _prepare(cfg):
    g = cfg.data["grid"]
    return prepare(cfg.triplet(), cfg.pair(), extent=g["extent"], dx=g["dx"],
                   residual_tol=cfg.data["residual_tol"])


def cmd_check(cfg: RunConfig):
    P = _prepare(cfg)
    out = _envelope(cfg, "check", P.report())
    _dump(out, os.path.join(_outdir(cfg), "check.json"))
    print(json.dumps(_finite(P.feasibility.to_dict()), sort_keys=True))
    return VERDICT_EXIT[P.feasibility.verdict]


def cmd_solve(cfg: RunConfig):
    P = _prepare(cfg)
    d = _outdir(cfg)
    if hasattr(P.solution, "to_csv"):
        P.solution.to_csv(os.path.join(d, "H.csv"))
    _dump(_envelope(cfg, "solve", P.report()), os.path.join(d, "solve.json"))
    print(f"verdict {P.feasibility.verdict}; wrote {d}")
    return VERDICT_EXIT[P.feasibility.verdict]


def cmd_simulate(cfg: RunConfig):
    s = cfg.data["simulate"]
    pc = cfg.path_config()
    tr, pair = cfg.triplet(), cfg.pair()
    d = _outdir(cfg)
    with open(os.path.join(d, "paths.csv"), "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "L", "jump_flag"])
        for i in range(int(s["n_paths"])):
            p = simulate_path(tr, pair.h0, pc, index=i, t_end=float(s["t_end"]))
            for t, x, j in zip(p.times, p.states, p.jump_flags):
                w.writerow([i, repr(float(t)), repr(float(x)), int(bool(j))])
    _dump(_envelope(cfg, "simulate", {}), os.path.join(d, "simulate.json"))
    print(f"wrote {d}")
    return EXIT_OK


def _embed(cfg, command):
    P = _prepare(cfg)
    d = _outdir(cfg)
    if P.feasibility.verdict == "rejected":
        _dump(_envelope(cfg, command, P.report()), os.path.join(d, f"{command}.json"))
        print(f"pair rejected ({P.feasibility.reason}); not embedding", file=sys.stderr)
        return None, P, d
    mc = cfg.mc_config()
    rep, (layout, results) = run_embedding_mc(P.field, P.triplet, mc, feasibility=P.feasibility,
                                              return_outcomes=True)
    mode = "w"
    for (b, first, count), res in zip(layout, results):
        outcomes_to_csv(res, os.path.join(d, "outcomes.csv"), first_id=first, mode=mode)
        mode = "a"
    taus = np.concatenate([r.states[:, 0][~r.censored[:, 0]] for r in results])
    snapshot_csv(taus, os.path.join(d, "L_tau_cdf.csv"), P.pair.h1.cdf)
    body = {"feasibility": P.feasibility.to_dict(), "mc": rep.to_dict()}
    eps = cfg.data["epsilon"]
    if eps is not None:
        from .verify import simulate_outcomes, _cat, _mean_se
        _, rr, _ = simulate_outcomes(P.field, P.triplet, mc, levels=((float(eps), 1.0),))
        t = _cat(rr, "times")[:, 0][~_cat(rr, "censored")[:, 0]]
        m, se = _mean_se(t)
        body["regularized"] = {"epsilon": eps, "mean_delta": m, "se": se,
                               "expected": (1 - eps) * P.field.C}
    return body, P, d


def cmd_embed(cfg: RunConfig):
    body, P, d = _embed(cfg, "embed")
    if body is None:
        return EXIT_REJECTED
    _dump(_envelope(cfg, "embed", body), os.path.join(d, "embed.json"))
    mc = body["mc"]
    print(f"mean_tau {mc['mean_tau']:.6f} ± {mc['se_tau']:.6f}; ks {mc['ks_stat']:.5f}; wrote {d}")
    return VERDICT_EXIT[P.feasibility.verdict]


def cmd_verify(cfg: RunConfig):
    body, P, d = _embed(cfg, "verify")
    if body is None:
        return EXIT_REJECTED
    mc = body["mc"]
    allow = float(cfg.data["mc"]["ks_allowance"])
    checks = {
        "mean_tau": abs(mc["mean_tau"] - mc["integral_H"]) <= 3 * mc["se_tau"],
        "ks": mc["ks_stat"] <= mc["ks_critical"] + allow,
        "censoring": bool(mc["valid"]),
    }
    for r in mc["dynkin"]:
        checks[f"dynkin_u={r['u']:g}"] = (abs(r["residual_re"]) <= 3 * r["se_re"] + 1e-12
                                          and abs(r["residual_im"]) <= 3 * r["se_im"] + 1e-12)
    for m in mc["marginals"]:
        checks[f"marginal_s={m['s']:g}"] = m["ks_stat"] <= mc["ks_critical"] + allow
    # deterministic weak-form check with a bump centered in the bulk
    X = P.field.sol.extent
    f = SmoothFunction.bump(0.0, max(0.25 * X, 1e-3))
    fp = {t: fokker_planck_residual(P.field, P.triplet, f, t) for t in (0.5, 1.0)}
    body["fp_residual"] = [{"t": t, "residual": v} for t, v in fp.items()]
    body["checks"] = checks
    _dump(_envelope(cfg, "verify", body), os.path.join(d, "verify.json"))
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    if not all(checks.values()):
        return EXIT_FAIL
    return VERDICT_EXIT[P.feasibility.verdict]


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "simulate": cmd_simulate,
            "embed": cmd_embed, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="levyembed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"levyembed {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?", help="JSON config file (defaults apply when omitted)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config leaf, e.g. --set mc.n_paths=1000")
        sp.add_argument("-o", "--output-dir", help="shorthand for --set output_dir=DIR")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LevyEmbedError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
