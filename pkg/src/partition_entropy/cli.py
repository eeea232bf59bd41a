"""Command-line entry point: ``partition-entropy <command> [flags]``.

Exit status is 0 when the check passes, 1 on a tolerance violation and 2 on
an invalid configuration.  Data goes to ``--output`` (stdout if omitted);
the one-line summary always goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import verify
from .partition import PartitionCounts, RankedMasses, plugin_entropy, simulate_partition
from .pdp import DEFAULT_TAIL_EPS, PdpParams, crp_sample, posterior_entropy
from .rng import RandomStream

COMMANDS = ("simulate", "converge", "martingale-check", "posterior-check", "prior-check")
CONVERGENCE_HEADER = (
    "n", "trial", "plugin", "posterior", "truth", "abs_err_plugin", "abs_err_posterior", "gap",
)


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    alpha: float = 0.0
    theta: float = 1.0
    n: int = 1000
    checkpoints: tuple[int, ...] = (100, 1000, 10000)
    trials: int = 1000
    tail_eps: float = DEFAULT_TAIL_EPS
    output_path: str | None = None
    format: str = "csv"
    max_n: int = 200
    counts: tuple[int, ...] = (1,)
    masses_path: str | None = None

    def params(self) -> PdpParams:
        try:
            return PdpParams(self.alpha, self.theta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.masses_path is None or self.command not in ("simulate", "converge"):
            self.params()
        if self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.max_n < 1:
            raise ConfigError("max-n must be a positive integer")
        if not 0.0 < self.tail_eps < 1.0:
            raise ConfigError("tail-eps must lie in (0, 1)")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        cps = self.checkpoints
        if not cps or cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigError("checkpoints must be nonempty, positive and strictly increasing")
        if not self.counts or min(self.counts) < 1:
            raise ConfigError("counts must be a nonempty list of positive integers")
        if self.command in ("prior-check", "posterior-check") and self.trials < 100:
            raise ConfigError(f"{self.command} needs trials >= 100")


# ---------------------------------------------------------------------------
# parsing


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(_int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _int(text: str) -> int:
    # accepts 1e4 style as long as it is integral
    value = float(text) if any(c in text.lower() for c in ".e") else int(text)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"not an integer: {text!r}")
        value = int(value)
    return value


_CONVERTERS = {
    "seed": _int,
    "alpha": float,
    "theta": float,
    "n": _int,
    "checkpoints": _int_list,
    "trials": _int,
    "tail_eps": float,
    "output_path": str,
    "format": str,
    "max_n": _int,
    "counts": _int_list,
    "masses_path": str,
}
_FILE_ALIASES = {"output": "output_path", "masses": "masses_path", "tail-eps": "tail_eps", "max-n": "max_n"}


def read_config_file(path: str) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _FILE_ALIASES.get(key, key.replace("-", "_"))
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


_HELP = {
    "simulate": (
        "Draw partitions: PD(alpha, theta) via the restaurant sampler, or from --masses. "
        "Writes counts with plug-in and posterior entropy per trial. No tolerance; always exits 0."
    ),
    "converge": (
        "Track |posterior - H|, |plug-in - H| and their gap along growing sample paths. "
        "Tolerance: the mean of each error must strictly decrease across checkpoints "
        "(plug-in only when --masses is given)."
    ),
    "martingale-check": (
        f"Exact martingale and increasing-process checks on --trials restaurant states. "
        f"Tolerance: max |residual| < {verify.MARTINGALE_TOL:g}, min step > -{verify.INCREASING_TOL:g}, "
        f"|step - conditional variance| < {verify.VARIANCE_TOL:g}."
    ),
    "posterior-check": (
        f"Monte Carlo mean entropy of posterior draws given --counts vs the closed form. "
        f"Tolerance: within {verify.SIGMAS:g} standard errors."
    ),
    "prior-check": (
        f"Monte Carlo mean entropy of stick-breaking draws vs psi(theta+1) - psi(1-alpha). "
        f"Tolerance: within {verify.SIGMAS:g} standard errors."
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partition-entropy",
        description="Entropy estimators for exchangeable random partitions.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument("--config", help="flat key=value file; flags override it")
        p.add_argument("--seed", type=_int, help="64-bit seed (required)")
        p.add_argument("--alpha", type=float, help="discount, 0 <= alpha < 1")
        p.add_argument("--theta", type=float, help="concentration, theta > -alpha")
        p.add_argument("--trials", type=_int, help="number of trials (default 1000)")
        p.add_argument("--tail-eps", dest="tail_eps", type=float,
                       help=f"stick-breaking truncation target (default {DEFAULT_TAIL_EPS:g})")
        p.add_argument("--output", dest="output_path", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
        if name == "simulate":
            p.add_argument("--n", type=_int, help="sample size (default 1000)")
        if name in ("simulate", "converge"):
            p.add_argument("--masses", dest="masses_path",
                           help='JSON file with {"weights": [...], "tail": x} or a list of such objects')
        if name == "converge":
            p.add_argument("--checkpoints", type=_int_list, help="e.g. 100,1000,10000")
        if name == "martingale-check":
            p.add_argument("--max-n", dest="max_n", type=_int, help="largest sample size of a state (default 200)")
        if name == "posterior-check":
            p.add_argument("--counts", type=_int_list, help="observed class sizes, e.g. 3,1")
    return parser


def parse_config(argv: list[str] | None = None) -> ExperimentConfig:
    """Flags override config-file values, which override the defaults."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    values = {}
    if ns.config:
        values.update(read_config_file(ns.config))
    for key, value in vars(ns).items():
        if key in ("config", "command") or value is None:
            continue
        values[key] = value
    if "seed" not in values:
        raise ConfigError("--seed is required (no silent nondeterminism)")
    allowed = {f.name for f in fields(ExperimentConfig)}
    cfg = ExperimentConfig(command=ns.command, **{k: v for k, v in values.items() if k in allowed})
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# commands


def _load_masses(path: str) -> list[RankedMasses]:
    try:
        data = json.loads(Path(path).read_text())
        items = data if isinstance(data, list) else [data]
        if not items:
            raise ValueError("empty list")
        return [RankedMasses.from_dict(item) for item in items]
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad masses file {path}: {exc}") from None


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite(x):
    return float(x) if math.isfinite(x) else None


def _check_record(check: verify.MonteCarloCheck) -> dict:
    return {
        "mc_mean": check.mc_mean,
        "std_err": check.std_err,
        "closed_form": check.expected,
        "z": _finite(check.z),
        "tolerance_sigmas": verify.SIGMAS,
        "passed": check.within(),
    }


def _run_simulate(cfg: ExperimentConfig, rng: RandomStream):
    if cfg.masses_path:
        masses = _load_masses(cfg.masses_path)
        states = verify.map_ordered(
            lambda i: simulate_partition(masses[i % len(masses)], cfg.n, rng.derive(i)), cfg.trials
        )
        post = [math.nan] * len(states)
    else:
        params = cfg.params()
        states = verify.map_ordered(lambda i: crp_sample(params, cfg.n, rng.derive(i)), cfg.trials)
        post = [posterior_entropy(params, pi).value for pi in states]
    plug = [plugin_entropy(pi) for pi in states]
    if cfg.format == "csv":
        rows = ((i, pi.n, pi.k, plug[i], post[i], pi.to_json()) for i, pi in enumerate(states))
        text = _csv(("trial", "n", "k", "plugin", "posterior", "counts"), rows)
    else:
        text = _json({
            "trials": [
                {"trial": i, "counts": list(pi.counts), "plugin": plug[i], "posterior": _finite(post[i])}
                for i, pi in enumerate(states)
            ],
            "mean_plugin": float(np.mean(plug)),
            "mean_posterior": _finite(float(np.mean(post))),
        })
    summary = f"simulate: {cfg.trials} partitions of n={cfg.n}, mean plug-in entropy {np.mean(plug):.6g}"
    return text, summary, True


def _run_converge(cfg: ExperimentConfig, rng: RandomStream):
    if cfg.masses_path:
        result = verify.plugin_convergence_experiment(
            _load_masses(cfg.masses_path), cfg.checkpoints, cfg.trials, rng
        )
        metrics = ("err_plugin",)
    else:
        try:
            result = verify.convergence_experiment(cfg.params(), cfg.checkpoints, cfg.trials, rng, cfg.tail_eps)
        except (ValueError, RuntimeError) as exc:
            raise ConfigError(str(exc)) from None
        metrics = verify.METRICS
    ok = all(result.strictly_decreasing(m) for m in metrics)
    if cfg.format == "csv":
        text = _csv(CONVERGENCE_HEADER, result.rows())
    else:
        text = _json(result.summary_dict())
    parts = ", ".join(
        f"mean {m} " + " > ".join(f"{v:.4g}" for v in result.means(m)) for m in metrics
    )
    summary = f"converge: {parts}; tolerance: strictly decreasing; {'PASS' if ok else 'FAIL'}"
    return text, summary, ok


def _run_martingale(cfg: ExperimentConfig, rng: RandomStream):
    scan = verify.martingale_scan(cfg.params(), cfg.trials, rng, max_n=cfg.max_n)
    ok = scan.passed()
    if cfg.format == "csv":
        rows = (
            (i, pi.n, pi.k, scan.residuals[i], scan.steps[i], scan.variances[i])
            for i, pi in enumerate(scan.states)
        )
        text = _csv(("state", "n", "k", "residual", "increasing_step", "conditional_variance"), rows)
    else:
        text = _json({
            "alpha": cfg.alpha,
            "theta": cfg.theta,
            "states": cfg.trials,
            "max_abs_residual": scan.max_abs_residual,
            "min_increasing_step": scan.min_step,
            "max_variance_mismatch": scan.max_variance_mismatch,
            "tolerance": {
                "residual": verify.MARTINGALE_TOL,
                "increasing_step": -verify.INCREASING_TOL,
                "variance_mismatch": verify.VARIANCE_TOL,
            },
            "passed": ok,
        })
    summary = (
        f"martingale-check: max |residual| {scan.max_abs_residual:.3g} (tol {verify.MARTINGALE_TOL:g}), "
        f"min step {scan.min_step:.3g} (tol -{verify.INCREASING_TOL:g}); {'PASS' if ok else 'FAIL'}"
    )
    return text, summary, ok


def _run_mc(cfg: ExperimentConfig, rng: RandomStream):
    params = cfg.params()
    try:
        if cfg.command == "prior-check":
            check = verify.prior_mean_check(params, cfg.trials, rng, cfg.tail_eps)
        else:
            check = verify.posterior_agreement_check(
                params, PartitionCounts(cfg.counts), cfg.trials, rng, cfg.tail_eps
            )
    except RuntimeError as exc:
        raise ConfigError(str(exc)) from None
    rec = _check_record(check)
    ok = rec["passed"]
    if cfg.format == "csv":
        keys = ("mc_mean", "std_err", "closed_form", "z", "tolerance_sigmas", "passed")
        text = _csv(keys, [[rec[k] for k in keys]])
    else:
        text = _json(rec)
    summary = (
        f"{cfg.command}: mc_mean {check.mc_mean:.6g} +/- {check.std_err:.2g} vs closed form "
        f"{check.expected:.6g} (z={check.z:.2f}, tol {verify.SIGMAS:g} sigma); {'PASS' if ok else 'FAIL'}"
    )
    return text, summary, ok


_RUNNERS = {
    "simulate": _run_simulate,
    "converge": _run_converge,
    "martingale-check": _run_martingale,
    "posterior-check": _run_mc,
    "prior-check": _run_mc,
}


def run(cfg: ExperimentConfig, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        verify.worker_count()
        text, summary, ok = _RUNNERS[cfg.command](cfg, RandomStream(cfg.seed))
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    if cfg.output_path:
        Path(cfg.output_path).write_text(text)
    else:
        stdout.write(text)
    print(summary, file=stderr)
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse: unknown flag, bad value, --help
        return int(exc.code or 0)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
