"""``fkdmc`` command line: one experiment per invocation, CSV + JSON outputs.

Output files are named ``<command>-<config hash>.{csv,json}`` and carry the
package version, config hash and seed; they contain no timing information,
so re-running a command reproduces them byte for byte.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import (clt_empirical, divergence_experiment, error_vs_N, stability_report)
from .config import RunConfig
from .engine import burn_in_steps, energy_estimate, gaussian_fk_model, run_replicates
from .errors import ConfigError, FKError
from .gaussian import exact_flow, ground_state
from .importance import build_k_step, min_stable_k, run_k_step, stability_margin
from .rng import derive_seed

COMMANDS = ("exact", "dmc", "sweep", "diverge", "variance", "stability", "importance")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class Outputs:
    def __init__(self, cfg, command, out):
        self.cfg = cfg
        self.command = command
        self.out = out
        self.stem = f"{command}-{cfg.config_hash}"
        self.written = []
        os.makedirs(out, exist_ok=True)

    @property
    def header(self):
        return {"version": __version__, "config_hash": self.cfg.config_hash,
                "seed": self.cfg.seed, "command": self.command}

    def csv(self, columns, rows, suffix=""):
        path = os.path.join(self.out, f"{self.stem}{suffix}.csv")
        with open(path, "w", newline="") as fh:
            fh.write("# fkdmc {version} command={command} config_hash={config_hash} "
                     "seed={seed}\n".format(**self.header))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.written.append(path)

    def json(self, payload):
        path = os.path.join(self.out, f"{self.stem}.json")
        doc = dict(self.header)
        doc["config"] = {k: v for k, v in self.cfg.to_dict().items() if k not in ("out", "threads")}
        doc.update(payload)
        with open(path, "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.written.append(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _flow_rows(flow):
    d = flow[0].d
    iu = np.triu_indices(d)
    cols = ["step"] + [f"m_{i}" for i in range(d)] + [f"Omega_{i}{j}" for i, j in zip(*iu)]
    rows = [[n] + list(eta.m) + list(eta.Omega[iu]) for n, eta in enumerate(flow)]
    return cols, rows


def cmd_exact(cfg, out, threads):
    """Exact Gaussian flow and ground state."""
    cols, rows = _flow_rows(exact_flow(cfg.model, cfg.eta0, cfg.n_steps))
    out.csv(cols, rows)
    gs = ground_state(cfg.model)
    payload = {"ground_state": gs.to_dict()}
    if cfg.model.delta:
        payload["ground_state"]["energy"] = gs.energy(cfg.model.delta)
    out.json(payload)


def cmd_dmc(cfg, out, threads):
    """Walker run with estimator series."""
    burn = cfg.burn_in if isinstance(cfg.burn_in, int) else tuple(cfg.burn_in)
    n0 = burn if isinstance(burn, int) else burn_in_steps(cfg.N, *burn)
    if n0 > cfg.n_steps:
        raise ConfigError(f"burn-in {n0} exceeds n_steps {cfg.n_steps}", field="burn_in")
    fk = gaussian_fk_model(cfg.model, cfg.eta0)
    runs = run_replicates(fk, cfg.N, cfg.n_steps, cfg.seed, cfg.reps, cfg.policy,
                          cfg.observables, threads)
    estimates = []
    for r, series in enumerate(runs):
        suffix = "" if cfg.reps == 1 else f"-rep{r}"
        out.csv(series.columns(), series.rows(), suffix)
        estimates.append(energy_estimate(series, burn_in=burn).to_dict())
    gs = ground_state(cfg.model)
    out.json({"energy_estimates": estimates, "E0": gs.E0,
              "rep_seeds": [derive_seed(cfg.seed, r) for r in range(cfg.reps)]})


def cmd_sweep(cfg, out, threads):
    """Error of the mean estimator against N."""
    burn = cfg.burn_in if isinstance(cfg.burn_in, int) else tuple(cfg.burn_in)
    rep = error_vs_N(cfg.model, cfg.eta0, cfg.N_list, cfg.reps, cfg.n_steps, cfg.seed,
                     threads, burn)
    rows = [[N, e, en["value"], en["stderr"]]
            for N, e, en in zip(rep.N_list, rep.sup_error, rep.energy)]
    out.csv(["N", "sup_l2_error", "energy_estimate", "energy_stderr"], rows)
    out.json({"slope": rep.slope, "sup_error": rep.sup_error, "energy": rep.energy,
              "E0": ground_state(cfg.model).E0})


def cmd_diverge(cfg, out, threads):
    """Replicated error growth for |A| > 1."""
    rep = divergence_experiment(cfg.model, cfg.N, cfg.n_steps, cfg.reps, cfg.seed,
                                cfg.eta0 if "eta0" in cfg.doc else None, threads)
    out.csv(["step", "mean_abs_error"], zip(rep.steps, rep.mean_abs_error))
    out.json({"slope": rep.slope, "ci": rep.ci, "growth": rep.growth,
              "extinctions": rep.extinctions, "reps": rep.reps})


def cmd_variance(cfg, out, threads):
    """Empirical CLT variance against the closed form."""
    res = clt_empirical(cfg.model, cfg.step, cfg.N, cfg.reps, cfg.seed, threads)
    out.csv(["rep", "error"], enumerate(res.errors))
    out.json(res.to_dict())


def cmd_stability(cfg, out, threads):
    """Contraction, Lyapunov and Riccati certificates."""
    out.json({"stability": stability_report(cfg.model).to_dict()})


def cmd_importance(cfg, out, threads):
    """Smallest stabilizing k and a k-step walker run."""
    ks = cfg.k_step or {}
    updated = bool(ks.get("updated", False))
    k = ks.get("k", "auto")
    if k == "auto":
        k = min_stable_k(cfg.model, ks.get("k_max", 100))
    km = build_k_step(cfg.model, k, updated)
    res = run_k_step(km, cfg.eta0, cfg.N, cfg.n_steps, cfg.seed, cfg.policy,
                     bool(ks.get("fill_gaps", False)), threads)
    d = cfg.model.d
    cols = ["step"] + [f"mean_{i}" for i in range(d)] + [f"ref_{i}" for i in range(d)] + ["error"]
    out.csv(cols, ([s, *m, *r, e] for s, m, r, e in
                   zip(res.steps, res.means, res.reference, res.errors)))
    out.json({"k": km.k, "updated": updated, "stability_margin": stability_margin(km.powers),
              "A_k": km.powers.A_k, "B_k": km.powers.B_k, "S_k": km.powers.S_k})


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def build_parser():
    p = argparse.ArgumentParser(prog="fkdmc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fkdmc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HANDLERS[name].__doc__)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
        s.add_argument("--threads", type=int, default=None,
                       help="worker threads; never changes results")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        threads = args.threads or cfg.doc.get("threads", 1)
        if threads < 1:
            raise ConfigError("must be >= 1", field="threads")
        out = Outputs(cfg, args.command, args.out)
        HANDLERS[args.command](cfg, out, threads)
    except FKError as exc:
        print(f"fkdmc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    for path in out.written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
