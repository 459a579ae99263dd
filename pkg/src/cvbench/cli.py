"""Command-line front end.

Every command writes a JSON report (stdout or ``--output``) that embeds the
resolved configuration. Exit status: 0 on success, 1 on usage or input
errors, 2 when a verification invariant fails.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import channel_eval as ce
from . import classical_channel as cc
from . import lemma_verifier as lv
from .fock_space import FockVector
from .prior import FLAT, RNG_ALGORITHM, GaussianPrior, _Flat
from .report import csv_summary, dumps, envelope

THREADS_ENV = "CVBENCH_THREADS"
COMMANDS = ("bound", "heterodyne", "simulate", "verify-lemma", "verify-povm", "trace-check", "eval", "fit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    lam: float | str | None = None
    d: int | None = None
    seed: int = 0
    n: int | None = None
    threads: int = 1
    tolerances: dict[str, float] = field(default_factory=dict)
    input: str | None = None
    output: str | None = None
    csv: str | None = None
    options: dict[str, Any] = field(default_factory=dict)

    def prior(self) -> GaussianPrior | _Flat:
        if self.lam == "flat":
            return FLAT
        return GaussianPrior(float(self.lam))

    def proper_prior(self) -> GaussianPrior:
        if self.lam == "flat":
            raise UsageError(f"'{self.command}' needs a finite lambda; the flat limit cannot be sampled")
        return GaussianPrior(float(self.lam))


def parse_lambda(text: str) -> float | str:
    if text.strip().lower() == "flat":
        return "flat"
    try:
        lam = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid lambda {text!r}") from None
    if not lam > 0 or not math.isfinite(lam):
        raise argparse.ArgumentTypeError(f"lambda must be > 0 (got {text}); write --lambda flat for the lambda -> 0 limit")
    return lam


def parse_lambda_list(text: str) -> list[float]:
    out = [parse_lambda(part) for part in text.split(",")]
    if "flat" in out:
        raise argparse.ArgumentTypeError("the flat limit has no lemma; pass positive lambdas")
    return out


def parse_p_list(text: str) -> list[float]:
    """'1..8', '2,4,inf' or combinations like '1..3,inf'."""
    out: list[float] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(float(k) for k in range(int(lo), int(hi) + 1))
        elif part.lower() in ("inf", "infinity"):
            out.append(math.inf)
        else:
            out.append(float(part))
    if any(p < 1 for p in out):
        raise argparse.ArgumentTypeError("every p must be >= 1")
    return out


def parse_phi(text: str) -> FockVector:
    """'vacuum', 'fock:N', 'random:DIM[:SEED]' or '[[re, im], ...]'."""
    text = text.strip()
    if text == "vacuum":
        return FockVector.basis(0, 1)
    if text.startswith("fock:"):
        n = int(text[5:])
        return FockVector.basis(n, n + 1)
    if text.startswith("random:"):
        parts = text.split(":")
        dim, seed = int(parts[1]), int(parts[2]) if len(parts) > 2 else 0
        return lv.random_state(dim, np.random.Generator(np.random.Philox(key=seed)))
    if text.startswith("["):
        arr = np.asarray(json.loads(text), dtype=float)
        return FockVector(arr[:, 0] + 1j * arr[:, 1])
    raise argparse.ArgumentTypeError(f"unrecognized state {text!r}")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, lam_default=None, seed=False, n=None):
        p.add_argument("--lambda", dest="lam", type=parse_lambda, default=lam_default, required=lam_default is None,
                       help="prior inverse variance, or 'flat'")
        p.add_argument("--output", "-o", help="report path (default: stdout)")
        p.add_argument("--csv", help="also write a key,value CSV summary here")
        p.add_argument("--threads", type=int, default=_default_threads(), help=f"worker cap (env {THREADS_ENV})")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if n is not None:
            p.add_argument("--n", type=lambda s: int(float(s)), default=n, help="Monte Carlo samples")

    p = sub.add_parser("bound", help="classical benchmark (1+lambda)/(2+lambda)")
    common(p)

    p = sub.add_parser("heterodyne", help="closed-form heterodyne strategy fidelity")
    common(p)
    p.add_argument("--gain", type=float, help="repreparation gain (default 1/(1+lambda))")

    p = sub.add_parser("simulate", help="Monte Carlo of a measure-and-prepare strategy")
    common(p, seed=True, n=200_000)
    p.add_argument("--gain", type=float, help="heterodyne gain (default 1/(1+lambda))")
    p.add_argument("--strategy", help="JSON POVM or strategy file instead of heterodyne")

    p = sub.add_parser("verify-lemma", help="randomized p-norm inequality suite")
    p.add_argument("--lambda", dest="lam", type=parse_lambda_list, default=[0.2, 1.0, 5.0])
    p.add_argument("--output", "-o")
    p.add_argument("--csv")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--dim", type=int, default=12, help="support of the random states")
    p.add_argument("--p", dest="p_list", type=parse_p_list, default=parse_p_list("1..8,inf"))
    p.add_argument("--tol", type=float, default=lv.TOL_LEMMA)
    p.add_argument("--operators", action="store_true", help="also check the B and C operators")
    p.add_argument("--chain", type=int, default=0, metavar="K", help="scalar inequality-chain checks on the first K states")

    p = sub.add_parser("verify-povm", help="bound stress test over random rank-one POVMs")
    common(p, seed=True)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--outcomes", type=int, help="outcomes per POVM (default 2d)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--povm", help="check this JSON POVM instead of random ones")
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("trace-check", help="tr A^p from matrices vs the phase-space multi-integral")
    common(p, seed=True, n=1_000_000)
    p.add_argument("--p", dest="p", type=int, default=2, choices=(2, 3))
    p.add_argument("--phi", type=parse_phi, default="vacuum", help="vacuum | fock:N | random:DIM[:SEED] | JSON pairs")

    p = sub.add_parser("eval", help="verdict for a fidelity, a channel, or calibration records")
    common(p, lam_default="flat")
    p.add_argument("--fidelity", type=float)
    p.add_argument("--stderr", type=float, default=0.0)
    p.add_argument("--gain", type=float)
    p.add_argument("--noise", type=float, help="added thermal photons")
    p.add_argument("--input", help="calibration CSV")

    p = sub.add_parser("fit", help="fit gain and added noise from calibration records")
    common(p, lam_default="flat")
    p.add_argument("--input", required=True, help="calibration CSV")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    ns = dict(vars(args))
    cfg = RunConfig(
        command=ns.pop("command"),
        lam=ns.pop("lam", None),
        seed=ns.pop("seed", 0),
        n=ns.pop("n", None),
        threads=ns.pop("threads", 1),
        output=ns.pop("output", None),
        csv=ns.pop("csv", None),
        input=ns.pop("input", None),
    )
    cfg.d = ns.pop("d", None)
    if "tol" in ns:
        cfg.tolerances["tol"] = ns.pop("tol")
    if isinstance(ns.get("phi"), FockVector):
        ns["phi"] = [[float(c.real), float(c.imag)] for c in ns["phi"].coeffs]
    cfg.options = ns
    if cfg.seed < 0:
        raise UsageError("seed must be non-negative")
    if cfg.threads < 1:
        raise UsageError("threads must be >= 1")
    return cfg


# -- commands -------------------------------------------------------------------
# Each returns (result body, list of failed-invariant diagnostics).


def cmd_bound(cfg: RunConfig):
    prior = cfg.prior()
    body = {"value": cc.benchmark_bound(prior), "lambda": cfg.lam}
    if not isinstance(prior, _Flat):
        body["lemma_coefficient_inf"] = lv.lemma_rhs_coefficient(prior, math.inf)
    return body, []


def cmd_heterodyne(cfg: RunConfig):
    prior = cfg.proper_prior()
    gain = cfg.options.get("gain")
    gain = cc.optimal_gain(prior) if gain is None else gain
    value = cc.heterodyne_fidelity(prior, gain)
    report = cc.FidelityReport.make(value, 0.0, prior, method="closed-form-heterodyne", gain=gain)
    return {"report": report, "optimal_gain": cc.optimal_gain(prior)}, []


def cmd_simulate(cfg: RunConfig):
    prior = cfg.proper_prior()
    path = cfg.options.get("strategy")
    failures = []
    if path:
        obj = cc.load_json(path)
        strategy = cc.optimal_strategy(obj, prior) if isinstance(obj, cc.PovmEnsemble) else obj
        exact = cc.strategy_fidelity(strategy, prior)
        label = "strategy"
    else:
        gain = cfg.options.get("gain")
        gain = cc.optimal_gain(prior) if gain is None else gain
        strategy = cc.Heterodyne(gain)
        exact = cc.heterodyne_fidelity(prior, gain)
        label = "heterodyne"
    report = cc.simulate_strategy(strategy, prior, cfg.n, cfg.seed, threads=cfg.threads)
    dev = abs(report.value - exact)
    if dev > 3 * report.stderr:
        failures.append(f"mc_agreement: |MC - exact| = {dev:.3e} exceeds 3 sigma = {3 * report.stderr:.3e}")
    return {"strategy": label, "report": report, "exact": exact, "deviation_sigma": dev / report.stderr if report.stderr else None}, failures


def cmd_verify_lemma(cfg: RunConfig):
    opts = cfg.options
    tol = cfg.tolerances["tol"]
    lambdas = cfg.lam
    results = lv.lemma_suite(lambdas, opts["trials"], opts["dim"], opts["p_list"], cfg.seed, cfg.threads)
    # vacuum saturates the p = inf case
    for lam in lambdas:
        results.extend(lv.verify_lemma(FockVector.basis(0, 1), GaussianPrior(lam), opts["p_list"], phi_id="vacuum"))
    worst = min(results, key=lambda r: r.slack)
    failures = []
    if worst.slack < -tol:
        failures.append(f"lemma_slack: slack {worst.slack:.3e} < -{tol:g} for {worst.phi_id}, lambda={worst.lam}, p={worst.p}")
    per_p = {}
    for r in results:
        key = "inf" if math.isinf(r.p) else format(r.p, "g")
        per_p.setdefault(key, []).append(r.slack / r.rhs if r.rhs else 0.0)
    body: dict[str, Any] = {
        "checks": len(results),
        "min_slack": worst.slack,
        "worst": worst,
        "min_relative_slack_by_p": {k: min(v) for k, v in per_p.items()},
        "vacuum": [r for r in results if r.phi_id == "vacuum"],
        "rng": RNG_ALGORITHM,
    }
    if opts.get("chain"):
        chains = []
        rng = [np.random.Generator(np.random.Philox(key=cfg.seed).jumped(t)) for t in range(opts["chain"])]
        for t, g in enumerate(rng):
            phi = lv.random_state(min(opts["dim"], 6), g)
            for lam in lambdas:
                for p in (1, 2, 3):
                    ch = lv.scalar_chain_check(phi, GaussianPrior(lam), p)
                    ok = ch.ordered(tol) and abs(ch.rotated_value - ch.first) <= 1e-9 * max(ch.first, 1e-300)
                    chains.append({"trial": t, "lambda": lam, "p": p, "first": ch.first, "middle": ch.middle,
                                   "last": ch.last, "rotated": ch.rotated_value.real, "ok": ok})
                    if not ok:
                        failures.append(f"inequality_chain: ordering or rotated form fails for trial {t}, lambda={lam}, p={p}")
        body["chain"] = chains
    if opts.get("operators"):
        ops = []
        states = [FockVector.basis(0, 1), FockVector.basis(1, 2),
                  lv.random_state(4, np.random.Generator(np.random.Philox(key=cfg.seed)))]
        for lam in lambdas:
            prior = GaussianPrior(lam)
            checks = lv.check_C(prior, 8, states) + lv.check_B(prior, 5, states)
            for c in checks:
                ops.append({"lambda": lam, **c.to_dict()})
                if not c.passed:
                    failures.append(f"{c.name}: error {c.error:.3e} > {c.tolerance:g} at lambda={lam}")
        body["operators"] = ops
    return body, failures


def cmd_verify_povm(cfg: RunConfig):
    prior = cfg.proper_prior()
    tol = cfg.tolerances["tol"]
    opts = cfg.options
    if opts.get("povm"):
        obj = cc.load_json(opts["povm"])
        povms = [obj.povm if isinstance(obj, cc.ClassicalStrategy) else obj]
    else:
        d = cfg.d
        m = opts.get("outcomes") or 2 * d
        povms = [cc.make_random_povm(d, m, cfg.seed + t) for t in range(opts["trials"])]
    bound = cc.benchmark_bound(prior)
    values, norm_err = [], []
    failures = []
    for k, povm in enumerate(povms):
        rep = cc.classical_fidelity(povm, prior)
        values.append(rep.value)
        meta = rep.metadata
        err = abs(meta["trace_sum"] - (1.0 - meta["prior_tail"]))
        norm_err.append(err)
        if rep.value > bound + tol:
            failures.append(f"benchmark_bound: POVM {k} reaches {rep.value:.12f} > {bound:.12f}")
        if err > 1e-6 + meta["a_truncation_tail"]:
            failures.append(f"trace_normalization: POVM {k} sum ||A||_1 off by {err:.3e}")
    return {
        "benchmark": bound,
        "povms": len(povms),
        "max_fidelity": max(values),
        "mean_fidelity": float(np.mean(values)),
        "max_trace_error": max(norm_err),
        "prior_tail": math.exp(-povms[0].dim * math.log1p(prior.lam)),
        "values": values,
    }, failures


def cmd_trace_check(cfg: RunConfig):
    prior = cfg.proper_prior()
    coeffs = np.asarray(cfg.options["phi"], dtype=float)
    phi = FockVector(coeffs[:, 0] + 1j * coeffs[:, 1])
    res = lv.trace_identity_mc(phi, prior, cfg.options["p"], cfg.n, cfg.seed, cfg.threads)
    failures = []
    if not res.agrees:
        failures.append(
            f"trace_identity: |matrix - MC| = {abs(res.matrix_value - res.mc_estimate):.3e} > 3 sigma = {3 * res.mc_stderr:.3e}"
        )
    return {"result": res}, failures


def cmd_eval(cfg: RunConfig):
    prior = cfg.prior()
    opts = cfg.options
    body: dict[str, Any] = {}
    chosen = [opts.get("fidelity") is not None, opts.get("gain") is not None, cfg.input is not None]
    if sum(chosen) != 1:
        raise UsageError("give exactly one of --fidelity, --gain/--noise, --input")
    if opts.get("fidelity") is not None:
        report = ce.classify_channel(opts["fidelity"], prior, opts.get("stderr") or 0.0)
    elif opts.get("gain") is not None:
        if opts.get("noise") is None:
            raise UsageError("--gain needs --noise")
        report = ce.classify_channel(ce.GaussianChannelParams(opts["gain"], opts["noise"]), prior)
    else:
        fit = ce.fit_channel(ce.read_records(cfg.input))
        body["fit"] = fit
        if fit.params.added_noise is None:
            raise UsageError("records lack variances; the added noise, and hence the fidelity, is undetermined")
        report = ce.classify_channel(fit.params, prior)
    body["report"] = report
    return body, []


def cmd_fit(cfg: RunConfig):
    fit = ce.fit_channel(ce.read_records(cfg.input))
    body: dict[str, Any] = {"fit": fit}
    if fit.params.added_noise is not None:
        body["report"] = ce.classify_channel(fit.params, cfg.prior())
    else:
        body["warning"] = "variances missing: gain only, no fidelity or security claims"
    return body, []


HANDLERS = {
    "bound": cmd_bound,
    "heterodyne": cmd_heterodyne,
    "simulate": cmd_simulate,
    "verify-lemma": cmd_verify_lemma,
    "verify-povm": cmd_verify_povm,
    "trace-check": cmd_trace_check,
    "eval": cmd_eval,
    "fit": cmd_fit,
}


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute one command; returns (exit status, report)."""
    body, failures = HANDLERS[cfg.command](cfg)
    status = "failed" if failures else "ok"
    config = asdict(cfg)
    report = envelope(cfg.command, config, body, status, failures)
    text = dumps(report)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.csv:
        with open(cfg.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_summary(report))
    for line in failures:
        print(f"cvbench: verification failed: {line}", file=sys.stderr)
    return (2 if failures else 0), report


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        status, _ = run(cfg)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"cvbench: error: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
