"""Command-line front end.

Every run reads a JSON config, validates it against a strict schema,
computes, and writes its artifacts atomically together with a
``manifest.json`` echoing the resolved config. Exit status is 0 on
success, 1 on numerical or domain failures and 2 on configuration errors.

Usage::

    dephasimeter <command> --config run.json [--output DIR] [--seed S]
                 [--workers W] [--set key.path=value ...]
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import integrate

from . import __version__, estimation, gaussian, optimizer
from .dicke import (EncodingSpec, StateSpec, build_initial, expect, observable, propagate,
                    qfi_of)
from .errors import ConfigError, DephasimeterError
from .noise import DecayCoefficient, NoiseSpectrum, kappa_of_t

__all__ = ["main", "run", "COMMANDS", "write_csv", "format_float"]

COMMANDS = ("kappa", "evolve", "qfi", "sweep", "table1", "ratio-mc", "wigner")


# --------------------------------------------------------------------------
# schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpectrumConfig(_Strict):
    kind: Literal["flat", "lorentzian", "hard_cutoff"]
    level: float = 0.0
    variance: float = 0.0
    rate: float = 0.0
    cutoff: float = 0.0

    def build(self) -> NoiseSpectrum:
        if self.kind == "flat":
            return NoiseSpectrum.flat(self.level)
        if self.kind == "lorentzian":
            return NoiseSpectrum.lorentzian(self.variance, self.rate)
        return NoiseSpectrum.hard_cutoff(self.level, self.cutoff)


class DecayConfig(_Strict):
    mode: Literal["noiseless", "markov", "zeno", "exact"]
    gamma: float = 0.0
    kappa0: float = 0.0
    omega_c: float = 0.0
    spectrum: Optional[SpectrumConfig] = None

    def build(self):
        if self.mode == "noiseless":
            return None
        if self.mode == "markov":
            return DecayCoefficient.markov(self.gamma)
        if self.mode == "zeno":
            return DecayCoefficient.zeno(self.kappa0, self.omega_c)
        if self.spectrum is None:
            raise ConfigError("decay.spectrum: required for mode 'exact'")
        return DecayCoefficient.exact(self.spectrum.build())


class StateConfig(_Strict):
    kind: Literal["css", "oats", "phi", "phi_prime"]
    N: int = Field(ge=1)
    theta: float = 0.0
    phi: float = 0.0
    mu: float = 0.0
    beta: float = 0.0

    def build(self) -> StateSpec:
        if self.kind == "css":
            return StateSpec.css(self.N, self.theta, self.phi)
        if self.kind == "oats":
            return StateSpec.oats(self.N, self.mu, self.beta, self.theta)
        if self.kind == "phi":
            return StateSpec.phi_state(self.N)
        return StateSpec.phi_prime(self.N)


class EncodingConfig(_Strict):
    k: int = Field(default=2, ge=1)
    b: float = 0.0
    t: float = Field(ge=0.0)

    def build(self) -> EncodingSpec:
        return EncodingSpec(self.k, self.b, self.t)


class KappaParams(_Strict):
    spectrum: SpectrumConfig
    times: list[float] = Field(min_length=1)


class EvolveParams(_Strict):
    state: StateConfig
    encoding: EncodingConfig
    kappa: Optional[float] = Field(default=None, ge=0.0)
    spectrum: Optional[SpectrumConfig] = None

    @model_validator(mode="after")
    def _one_noise(self):
        if (self.kappa is None) == (self.spectrum is None):
            raise ValueError("give exactly one of 'kappa' or 'spectrum'")
        return self

    def kappa_value(self) -> float:
        if self.kappa is not None:
            return self.kappa
        return float(kappa_of_t(self.spectrum.build(), self.encoding.t))


class QfiParams(EvolveParams):
    T: float = Field(default=1.0, gt=0.0)


class SweepParams(_Strict):
    state: Union[Literal["css", "phi", "pe", "ku"], tuple[Literal["oats"], float, float]]
    decay: DecayConfig
    path: Literal["closedform", "gaussian", "exact"] = "closedform"
    N: Optional[list[int]] = None
    lo_exp: float = 6.0
    hi_exp: float = 12.0
    per_octave: int = Field(default=4, ge=1)
    T: float = Field(default=1.0, gt=0.0)
    tau: float = Field(default=1.0, gt=0.0)
    theta: Optional[float] = None
    readout: Literal["Jy", "ratio", "qcrb"] = "Jy"
    qfi_terms: Literal["full", "leading"] = "leading"
    exclude_decades: float = Field(default=1.0, ge=0.0)
    min_span_decades: float = Field(default=1.5, ge=0.0)

    def Ns(self) -> tuple:
        if self.N is not None:
            return tuple(self.N)
        return optimizer.SweepPlan.geometric(self.lo_exp, self.hi_exp, self.per_octave)


class Table1Params(_Strict):
    T: float = Field(default=1.0, gt=0.0)
    kappa0: float = Field(default=1.0, gt=0.0)
    omega_c: float = Field(default=1.0, gt=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    N: Optional[list[int]] = None
    tolerance: float = Field(default=0.10, gt=0.0)
    qfi_terms: Literal["full", "leading"] = "leading"


class RatioMcParams(_Strict):
    N: int = Field(default=8, ge=2)
    theta: float = math.pi / 4
    kappa: float = Field(default=0.1, ge=0.0)
    tau: float = Field(default=1.0, gt=0.0)
    b_css: float = 0.02
    b_phi: float = 1e-3
    nu: int = Field(default=10_000, ge=2)
    replications: int = Field(default=1000, ge=2)


class WignerParams(_Strict):
    J: float = Field(gt=0.0)
    family: Optional[Literal["css", "pe", "ku"]] = None
    mu: float = 0.0
    beta: float = 0.0
    theta: float = math.pi / 4
    kappa_t: float = Field(default=0.0, ge=0.0)
    phase: float = 0.0
    width: float = Field(default=7.0, gt=0.0)
    n: int = Field(default=129, ge=8)


_PARAMS = {"kappa": KappaParams, "evolve": EvolveParams, "qfi": QfiParams, "sweep": SweepParams,
           "table1": Table1Params, "ratio-mc": RatioMcParams, "wigner": WignerParams}


class RunConfig(_Strict):
    command: Literal["kappa", "evolve", "qfi", "sweep", "table1", "ratio-mc", "wigner"]
    parameters: dict = Field(default_factory=dict)
    output: str = "out"
    seed: int = 0
    workers: int = Field(default=1, ge=1)


# --------------------------------------------------------------------------
# output helpers


def format_float(x) -> str:
    """17 significant digits; integers and strings pass through."""
    if isinstance(x, (bool, np.bool_)) or x is None:
        return "" if x is None else str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(columns: list[str], rows, legend: dict[str, str]) -> tuple[str, str]:
    """CSV text (comma, LF, header row) and its column-legend sidecar."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_float(v) for v in row])
    side = "".join(f"{c}: {legend.get(c, '')}\n" for c in columns)
    return buf.getvalue(), side


class _Artifacts:
    """Collects named outputs and publishes them by rename once all succeed."""

    def __init__(self):
        self.files: dict[str, str] = {}

    def text(self, name: str, content: str):
        self.files[name] = content

    def json(self, name: str, obj):
        self.files[name] = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"

    def csv(self, name: str, columns, rows, legend):
        body, side = write_csv(columns, rows, legend)
        self.files[name] = body
        self.files[name.rsplit(".", 1)[0] + ".legend.txt"] = side

    def publish(self, directory: Path):
        directory.mkdir(parents=True, exist_ok=True)
        staged = []
        try:
            for name, content in self.files.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
                with os.fdopen(fd, "w", newline="\n") as fh:
                    fh.write(content)
                staged.append((tmp, directory / name))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, final in staged:
            os.replace(tmp, final)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# --------------------------------------------------------------------------
# commands


def _cmd_kappa(p: KappaParams, cfg: RunConfig, out: _Artifacts):
    spec = p.spectrum.build()
    rows = [(t, float(kappa_of_t(spec, t))) for t in p.times]
    out.csv("kappa.csv", ["t", "kappa"], rows,
            {"t": "time", "kappa": "decay coefficient kappa(t)"})


def _moments(rho) -> dict:
    J = rho.J
    return {name: expect(rho, observable(J, name)) for name in ("Jx", "Jy", "Jz", "Jx2", "Jy2", "Jz2")}


def _cmd_evolve(p: EvolveParams, cfg: RunConfig, out: _Artifacts):
    rho = propagate(build_initial(p.state.build()), p.encoding.build(), p.kappa_value())
    out.text("rho.json", rho.to_json() + "\n")
    out.json("moments.json", {"kappa": p.kappa_value(), **_moments(rho)})


def _cmd_qfi(p: QfiParams, cfg: RunConfig, out: _Artifacts):
    enc = p.encoding.build()
    if enc.t <= 0:
        raise DephasimeterError("qfi needs t > 0")
    kappa = p.kappa_value()
    F, _ = qfi_of(build_initial(p.state.build()), enc, kappa)
    nu = p.T / enc.t
    res = {"kappa": kappa, "qfi_per_shot": F, "qfi_total": nu * F, "nu": nu,
           "qcrb": 1 / math.sqrt(nu * F) if F > 0 else math.inf}
    st = p.state
    if st.kind in ("css", "oats") and enc.k == 2:
        mu, beta = (st.mu, st.beta) if st.kind == "oats" else (0.0, 0.0)
        gs = gaussian.from_oats(mu, beta, st.N / 2, st.theta, kappa)
        res["gaussian"] = {**gaussian.qfi(gs, enc.t, p.T), "validity": gs.validity.status}
    if st.kind == "phi" and enc.k == 2:
        J = st.N // 2
        res["closed_form_per_shot"] = enc.t**2 * J**4 * math.exp(-2 * J * J * kappa)
    out.json("qfi.json", res)


def _cmd_sweep(p: SweepParams, cfg: RunConfig, out: _Artifacts):
    state = p.state if isinstance(p.state, str) else tuple(p.state)
    plan = optimizer.SweepPlan(state, p.decay.build(), p.path, p.Ns(), p.T, p.readout, p.qfi_terms,
                               p.theta, p.tau)
    results = optimizer.sweep(plan, cfg.workers)
    cols = ["state", "regime", "N", "tau_opt", "theta_opt", "db_opt", "valid"]
    out.csv("sweep.csv", cols,
            [(r.state, r.regime, r.N, r.tau, r.theta, r.db, r.valid) for r in results],
            {"state": "state family", "regime": "noise regime", "N": "number of qubits",
             "tau_opt": "optimal encoding time", "theta_opt": "optimal polar angle",
             "db_opt": "optimal uncertainty", "valid": "phase-space validity at optimum (empty if n/a)"})
    fit = None
    try:
        fit = optimizer.fit_scaling([r.N for r in results], [r.db for r in results],
                                    exclude_decades=p.exclude_decades,
                                    min_span_decades=p.min_span_decades).to_dict()
    except DephasimeterError as exc:
        fit = {"error": str(exc)}
    out.json("fit.json", {"fit": fit, "at_boundary": [r.N for r in results if r.at_boundary]})


def _cmd_table1(p: Table1Params, cfg: RunConfig, out: _Artifacts):
    table = optimizer.table1(p.T, p.kappa0, p.omega_c, p.gamma, Ns=p.N, tolerance=p.tolerance,
                             qfi_terms=p.qfi_terms, workers=cfg.workers)
    extra = {
        "css_zeno_asymptotic_constant": math.sqrt(3 * math.sqrt(3) / 4) * 2**1.25,
        "css_zeno_table_constant": math.sqrt(6 * math.sqrt(3)),
    }
    table["reference_constants"] = extra
    out.json("table1.json", table)
    cols = ["state", "regime", "path", "exponent", "exponent_se", "prefactor", "reference_prefactor",
            "reference_exponent", "relative_difference", "N_max", "valid", "at_boundary"]
    out.csv("table1.csv", cols, [[row[c] for c in cols] for row in table["rows"]],
            {"state": "state family", "regime": "noise regime", "path": "evaluation path",
             "exponent": "fitted exponent", "exponent_se": "standard error of exponent",
             "prefactor": "prefactor at N_max for the printed exponent, printed units",
             "reference_prefactor": "printed prefactor", "reference_exponent": "printed exponent",
             "relative_difference": "prefactor / reference_prefactor - 1", "N_max": "largest N",
             "valid": "phase-space validity at N_max (empty if n/a)",
             "at_boundary": "any optimum at a bracket edge"})


def _cmd_ratio_mc(p: RatioMcParams, cfg: RunConfig, out: _Artifacts):
    css = estimation.css_bias_experiment(p.N, p.theta, p.kappa, p.tau, p.b_css, p.nu, p.replications,
                                         cfg.seed)
    phi = estimation.phi_bias_experiment(p.N, p.kappa, p.tau, p.b_phi, p.nu, p.replications, cfg.seed)
    rows = [("css_naive", p.b_css, css["naive"], css["naive_analytic"]),
            ("css_ratio", p.b_css, css["ratio"], css["ratio_analytic"]),
            ("phi_ratio", p.b_phi, phi["ratio"], phi["ratio_analytic"])]
    cols = ["estimator", "b_true", "estimate", "bias", "bias_se", "std", "std_se", "analytic_std",
            "nu", "replications", "failures"]
    out.csv("bias.csv", cols,
            [(n, b, r.estimate, r.bias, r.bias_se, r.std, r.std_se, a, r.nu, r.replications, r.failures)
             for n, b, r, a in rows],
            {"estimator": "estimator name", "b_true": "true frequency", "estimate": "mean estimate",
             "bias": "estimate - b_true", "bias_se": "standard error of bias",
             "std": "empirical standard deviation", "std_se": "standard error of std",
             "analytic_std": "error-propagation uncertainty", "nu": "shots per observable",
             "replications": "replications", "failures": "failed inversions"})
    out.json("bias.json", {n: {**r.to_dict(), "analytic_std": a} for n, _, r, a in rows})


def _cmd_wigner(p: WignerParams, cfg: RunConfig, out: _Artifacts):
    mu, beta = gaussian.preset(p.family, p.J) if p.family else (p.mu, p.beta)
    gs = gaussian.from_oats(mu, beta, p.J, p.theta, p.kappa_t, p.phase)
    xs, ps, W = gaussian.wigner_grid(gs, p.width, p.n)
    rows = ((x, q, W[i, j]) for i, x in enumerate(xs) for j, q in enumerate(ps))
    out.csv("wigner.csv", ["x", "p", "W"], rows,
            {"x": "position quadrature", "p": "momentum quadrature", "W": "Wigner function"})
    norm = float(integrate.trapezoid(integrate.trapezoid(W, ps, axis=1), xs))
    out.json("wigner.json", {"delta": gs.delta, "eta": gs.eta, "Q": gs.Q, "normalization": norm,
                             "validity": {"status": gs.validity.status,
                                          "excitations": gs.validity.excitations,
                                          "ratio": gs.validity.ratio}})


_DISPATCH = {"kappa": _cmd_kappa, "evolve": _cmd_evolve, "qfi": _cmd_qfi, "sweep": _cmd_sweep,
             "table1": _cmd_table1, "ratio-mc": _cmd_ratio_mc, "wigner": _cmd_wigner}


# --------------------------------------------------------------------------
# entry points


def _apply_override(params: dict, assignment: str):
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    if isinstance(value, (dict, list)):
        raise ConfigError(f"--set {key}: only scalars may be overridden")
    node = params
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part!r} is not a record")
    node[parts[-1]] = value


def _field_path(exc: ValidationError, prefix: str) -> str:
    msgs = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in (prefix, *err["loc"]) if x != "")
        msgs.append(f"{loc}: {err['msg']}")
    return "; ".join(msgs)


def resolve(command: str, raw: dict, *, output=None, seed=None, workers=None, overrides=()) -> tuple:
    """Validate ``raw`` into a :class:`RunConfig` and its typed parameters.

    Raises
    ------
    ConfigError
        With a field-path message on any schema violation.
    """
    raw = json.loads(json.dumps(raw))
    if "command" in raw and raw["command"] != command:
        raise ConfigError(f"command: config is for {raw['command']!r}, not {command!r}")
    raw["command"] = command
    raw.setdefault("parameters", {})
    for item in overrides:
        _apply_override(raw["parameters"], item)
    if output is not None:
        raw["output"] = output
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    env = os.environ.get("DEPHASIMETER_WORKERS")
    if env:
        try:
            raw["workers"] = int(env)
        except ValueError:
            raise ConfigError("DEPHASIMETER_WORKERS must be an integer") from None
    try:
        cfg = RunConfig.model_validate(raw)
        params = _PARAMS[command].model_validate(cfg.parameters)
    except ValidationError as exc:
        where = "" if "cfg" not in locals() else "parameters"
        raise ConfigError(_field_path(exc, where)) from None
    return cfg, params


def run(command: str, raw: dict, **kwargs) -> Path:
    """Execute one command and publish its artifacts; returns the output directory."""
    cfg, params = resolve(command, raw, **kwargs)
    out = _Artifacts()
    _DISPATCH[command](params, cfg, out)
    manifest = {"command": command, "version": __version__,
                "config": {**cfg.model_dump(), "parameters": params.model_dump(mode="json")},
                "outputs": sorted(out.files)}
    out.json("manifest.json", manifest)
    directory = Path(cfg.output)
    out.publish(directory)
    return directory


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dephasimeter",
                                 description="Precision of quadratic-encoding Ramsey protocols "
                                             "under collective dephasing.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} computation")
        sp.add_argument("--config", "--spec", dest="config", required=True,
                        help="JSON run config ({command, parameters, output, seed, workers} "
                             "or a bare parameters record)")
        sp.add_argument("--output", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")
        sp.add_argument("--workers", type=int, help="worker count (overrides config)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar parameter, dotted path allowed")
    return ap


def _load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "parameters" not in data and "command" not in data:
        data = {"parameters": data}
    return data


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = _load(args.config)
        directory = run(args.command, raw, output=args.output, seed=args.seed, workers=args.workers,
                        overrides=args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DephasimeterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(directory)
    return 0


if __name__ == "__main__":
    sys.exit(main())
