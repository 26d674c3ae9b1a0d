"""Command-line front end.

Every command resolves a RunConfig from an optional TOML file and the flags
(flags win), runs one library operation and writes a JSON record or a CSV
table.  Exit status is 0 on success, 2 when the weights are rejected as
inadmissible and 1 for any other error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import (
    AlphaOutOfRange,
    ConflictError,
    DozzLabError,
    GammaPole,
    InadmissibleWeights,
    IoError,
    NonIntegrable,
    ParseError,
)
from .rng import DEFAULT_SEED

COMMANDS = (
    "eval-dozz",
    "eval-upsilon",
    "reflection",
    "mc-threepoint",
    "mc-fourpoint",
    "tail",
    "rbar",
    "verify",
    "kpz",
    "df-check",
    "girsanov",
)
MC_COMMANDS = {"mc-threepoint", "mc-fourpoint", "tail", "rbar", "girsanov"}
CSV_COMMANDS = {"tail", "verify", "mc-threepoint"}
ADMISSIBILITY_ERRORS = (InadmissibleWeights, AlphaOutOfRange, NonIntegrable, GammaPole)


@dataclass
class RunConfig:
    command: str
    gamma: float | None = None
    mu: float = 1.0
    alphas: list = field(default_factory=list)
    zs: list = field(default_factory=list)
    alpha: float | None = None
    alpha0: float | None = None
    z: str | None = None
    samples: int = 20000
    resolution: int = 48
    seed: int = DEFAULT_SEED
    threads: int = 0
    points: int = 20
    pairs: int = 5
    delta_sigma: float | None = None
    central_charge: float | None = None
    output: str | None = None
    format: str = "json"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(**data)


_KEYS = {f.name for f in fields(RunConfig)} - {"command"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D401 - argparse hook
        raise ParseError(message)


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ParseError(f"cannot parse number list {text!r}") from exc


def _complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ParseError(f"cannot parse complex number {text!r}") from exc


def _complexes(text) -> list:
    if isinstance(text, (list, tuple)):
        return [_complex(x) for x in text]
    return [_complex(x) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dozzlab", description="Numerical laboratory for the DOZZ formula.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML file with default settings")
    s = argparse.SUPPRESS
    p.add_argument("--gamma", type=float, default=s)
    p.add_argument("--mu", type=float, default=s)
    p.add_argument("--alphas", default=s, help="comma-separated weights")
    p.add_argument("--zs", default=s, help="comma-separated insertion points")
    p.add_argument("--alpha", type=float, default=s)
    p.add_argument("--alpha0", type=float, default=s)
    p.add_argument("--z", default=s, help="point, e.g. 0.3+0.1j")
    p.add_argument("--samples", type=int, default=s)
    p.add_argument("--resolution", type=int, default=s)
    p.add_argument("--seed", type=lambda x: int(x, 0), default=s)
    p.add_argument("--threads", type=int, default=s)
    p.add_argument("--points", type=int, default=s)
    p.add_argument("--pairs", type=int, default=s)
    p.add_argument("--delta-sigma", dest="delta_sigma", type=float, default=s)
    p.add_argument("--central-charge", dest="central_charge", type=float, default=s)
    p.add_argument("--output", "-o", default=s)
    p.add_argument("--format", choices=("json", "csv"), default=s)
    return p


def _read_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"bad config file {path}: {exc}") from exc
    out = {}
    for key, val in data.items():
        name = key.replace("-", "_")
        if name not in _KEYS:
            raise ParseError(f"unknown config key {key!r}")
        out[name] = val
    return out


def load_config(argv: Sequence[str] | None = None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    path = ns.pop("config", None)
    merged = _read_config_file(path) if path else {}
    merged.update(ns)
    cfg = RunConfig(command=command)
    for key, val in merged.items():
        setattr(cfg, key, val)
    cfg.alphas = _floats(cfg.alphas)
    cfg.zs = [str(z) for z in _complexes(cfg.zs)]
    if cfg.z is not None:
        cfg.z = str(_complex(cfg.z))
    for key in ("samples", "resolution", "seed", "threads", "points", "pairs"):
        setattr(cfg, key, int(getattr(cfg, key)))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    c = cfg.command
    if c == "kpz":
        if cfg.central_charge is not None and cfg.gamma is not None:
            raise ConflictError("--central-charge determines gamma; do not pass --gamma as well")
        if cfg.central_charge is None and cfg.gamma is None:
            raise ParseError("kpz needs --gamma or --central-charge")
    elif cfg.gamma is None:
        raise ParseError("missing required flag --gamma")
    if c != "kpz" and cfg.central_charge is not None:
        raise ConflictError(f"--central-charge does not apply to {c}")
    if cfg.format == "csv" and c not in CSV_COMMANDS:
        raise ConflictError(f"{c} has no CSV output")
    if c == "mc-fourpoint" and cfg.zs:
        raise ConflictError("mc-fourpoint fixes the points at 0, 1, infinity; give the cross ratio with --z")
    need = {
        "eval-dozz": ("alphas", 3),
        "mc-threepoint": ("alphas", 3),
        "mc-fourpoint": ("alphas", 3),
        "df-check": ("alphas", 2),
    }
    if c in need:
        key, n = need[c]
        if len(cfg.alphas) != n:
            raise ParseError(f"--{key} needs {n} values for {c}")
    if c == "mc-threepoint" and cfg.zs and len(cfg.zs) != 3:
        raise ParseError("--zs needs 3 points for mc-threepoint")
    if c in ("reflection", "tail", "rbar") and cfg.alpha is None:
        raise ParseError(f"missing required flag --alpha for {c}")
    if c == "eval-upsilon" and cfg.z is None:
        raise ParseError("missing required flag --z for eval-upsilon")
    if c == "mc-fourpoint" and (cfg.z is None or cfg.alpha0 is None):
        raise ParseError("mc-fourpoint needs --z and --alpha0")
    if c == "kpz" and cfg.delta_sigma is None:
        raise ParseError("missing required flag --delta-sigma for kpz")
    if cfg.samples <= 0:
        raise ParseError("--samples must be positive")


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def _params(cfg: RunConfig):
    from .special import make_params

    return make_params(cfg.gamma, cfg.mu)


def _value(x):
    x = complex(x)
    if abs(x.imag) <= 1e-14 * max(1.0, abs(x.real)):
        return float(x.real)
    return {"re": float(x.real), "im": float(x.imag)}


def _threads(cfg: RunConfig):
    return cfg.threads or None


def verify_rows(params, n_points: int, seed: int) -> list:
    """Closed-form identity residuals on random points: (identity, point, residual)."""
    from . import bpz
    from .special import dozz_c, l_ratio, upsilon

    g, q = params.gamma, params.q
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_points):
        z = complex(rng.uniform(0.05, q - 0.05), rng.uniform(-0.3, 0.3))
        u = upsilon(z, g)
        rows.append(("upsilon-reflection", str(z), abs(upsilon(q - z, g) / u - 1)))
        rows.append(("upsilon-duality", str(z), abs(upsilon(z, 4 / g) / u - 1)))
        f1 = complex(l_ratio(g * z / 2)) * (g / 2) ** (1 - g * z)
        rows.append(("upsilon-shift-gamma", str(z), abs(upsilon(z + g / 2, g) / (f1 * u) - 1)))
        f2 = complex(l_ratio(2 * z / g)) * (g / 2) ** (4 * z / g - 1)
        rows.append(("upsilon-shift-dual", str(z), abs(upsilon(z + 2 / g, g) / (f2 * u) - 1)))
    for _ in range(n_points):
        a = tuple(float(x) for x in rng.uniform(0.3 * q, 0.9 * q, size=3))
        c = dozz_c(params, *a)
        rows.append(("dozz-permutation", str(a), abs(dozz_c(params, a[2], a[0], a[1]) / c - 1)))
        try:
            rows.append(("dozz-duality", str(a), abs(dozz_c(params.dual(), *a) / c - 1)))
        except DozzLabError:
            rows.append(("dozz-duality", str(a), math.nan))
        for kind in bpz.SHIFT_KINDS:
            try:
                rows.append((kind, str(a), bpz.shift_residuals(params, a, kind)))
            except DozzLabError:
                rows.append((kind, str(a), math.nan))
    return rows


def execute(cfg: RunConfig) -> dict:
    """Run one command; returns the result record (without runtime)."""
    c = cfg.command
    rec: dict[str, Any] = {"command": c}
    if c == "kpz":
        from .kpz import gamma_from_central_charge, solve_kpz
        from .special import make_params

        g = cfg.gamma if cfg.gamma is not None else gamma_from_central_charge(cfg.central_charge)
        params = make_params(g, cfg.mu)
        sol = solve_kpz(params, cfg.delta_sigma)
        rec["params"] = {"gamma": g, "mu": cfg.mu, "alphas": [], "zs": []}
        rec["value"] = sol.alpha
        rec["diagnostics"] = {
            "delta_sigma": sol.delta_sigma,
            "delta_alpha": sol.delta_alpha,
            "c_matter": sol.c_matter,
        }
        return rec

    params = _params(cfg)
    rec["params"] = {"gamma": cfg.gamma, "mu": cfg.mu, "alphas": list(cfg.alphas), "zs": list(cfg.zs)}
    threads = _threads(cfg)

    if c == "eval-dozz":
        from .special import dozz_c

        rec["value"] = dozz_c(params, *cfg.alphas)
    elif c == "eval-upsilon":
        from .special import upsilon

        rec["params"]["zs"] = [cfg.z]
        rec["value"] = _value(upsilon(_complex(cfg.z), cfg.gamma))
    elif c == "reflection":
        from .special import reflection_dozz

        rec["params"]["alphas"] = [cfg.alpha]
        rec["value"] = reflection_dozz(params, cfg.alpha)
    elif c == "mc-threepoint":
        from .special import dozz_c
        from . import sphere

        a1, a2, a3 = cfg.alphas
        if cfg.zs:
            zs = [_complex(z) for z in cfg.zs]
            ins = [sphere.Insertion(a, z) for a, z in zip(cfg.alphas, zs)]
            est = sphere.correlation_estimate(
                params, ins, cfg.samples, cfg.seed, resolution=cfg.resolution, threads=threads
            )
            rec["diagnostics"] = dict(est.diagnostics)
            rec["diagnostics"]["structure_constant"] = est.value / sphere.mobius_prefactor(params, cfg.alphas, zs)
            rows = None
        else:
            est, rho = sphere.structure_constant_estimate(
                params, a1, a2, a3, cfg.samples, cfg.seed, resolution=cfg.resolution, threads=threads, return_samples=True
            )
            rec["diagnostics"] = dict(est.diagnostics)
            rec["diagnostics"]["dozz"] = dozz_c(params, a1, a2, a3)
            s = est.diagnostics["s"]
            rows = [(i, float(r), float(r ** (-s))) for i, r in enumerate(rho)]
        rec.update(value=est.value, stderr=est.stderr, n_samples=est.n_samples, seed=est.seed)
        if rows is not None:
            rec["_csv"] = (("sample_index", "rho", "weight"), rows)
    elif c == "mc-fourpoint":
        from . import bpz

        spec = bpz.four_point_spec(params, cfg.alpha0, cfg.alphas, _complex(cfg.z))
        rec["params"]["zs"] = [cfg.z]
        est = bpz.t_mc(params, spec, cfg.samples, cfg.seed, resolution=cfg.resolution, threads=threads)
        rec.update(value=est.value, stderr=est.stderr, n_samples=est.n_samples, seed=est.seed)
        rec["diagnostics"] = dict(est.diagnostics)
        try:
            rec["diagnostics"]["t_bpz"] = bpz.t_bpz(params, spec)
        except DozzLabError:
            pass
    elif c == "tail":
        from .cylinder import i_alpha_samples, survival_curve, tail_fit

        rec["params"]["alphas"] = [cfg.alpha]
        samples = i_alpha_samples(params, cfg.alpha, cfg.samples, cfg.seed, threads)
        fit = tail_fit(samples, -2 * (params.q - cfg.alpha) / params.gamma)
        rec.update(value=fit.slope, stderr=fit.slope_err, n_samples=cfg.samples, seed=cfg.seed)
        rec["diagnostics"] = {
            "expected_slope": fit.expected,
            "hill_slope": fit.hill_slope,
            "window_lo": fit.window[0],
            "window_hi": fit.window[1],
            "n_exceed": float(fit.n_exceed[0]),
        }
        t, surv = survival_curve(samples)
        rec["_csv"] = (("t", "survival"), list(zip(t.tolist(), surv.tolist())))
    elif c == "rbar":
        from .cylinder import full_reflection, rbar_estimate
        from .special import reflection_dozz

        rec["params"]["alphas"] = [cfg.alpha]
        est = rbar_estimate(params, cfg.alpha, cfg.samples, cfg.seed, threads)
        full = full_reflection(params, cfg.alpha, est)
        rec.update(value=est.value, stderr=est.stderr, n_samples=est.n_samples, seed=est.seed)
        rec["diagnostics"] = dict(est.diagnostics)
        rec["diagnostics"].update(
            full_reflection=full.value, full_reflection_stderr=full.stderr, reflection_dozz=reflection_dozz(params, cfg.alpha)
        )
    elif c == "verify":
        rows = verify_rows(params, cfg.points, cfg.seed)
        finite = [r[2] for r in rows if math.isfinite(r[2])]
        rec["value"] = max(finite) if finite else math.nan
        rec["seed"] = cfg.seed
        rec["diagnostics"] = {"rows": float(len(rows)), "skipped": float(len(rows) - len(finite))}
        rec["_csv"] = (("identity", "point", "residual"), rows)
    elif c == "df-check":
        from .sphere import df_check

        out = df_check(params, *cfg.alphas)
        rec["value"] = out["quadrature"]
        rec["diagnostics"] = {k: float(v) for k, v in out.items() if k != "quadrature"}
    elif c == "girsanov":
        from . import sphere

        ens = sphere.build_ensemble(min(cfg.resolution, 12))
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        diag = {}
        for k in range(cfg.pairs):
            f = np.zeros(ens.n_cells)
            idx = rng.choice(ens.n_cells, 4, replace=False)
            f[idx] = rng.uniform(0.2, 1.0, 4)
            j = int(rng.integers(ens.n_cells))
            lam = 0.1 * rng.standard_normal(ens.n_cells)

            def obs(x, j=j, lam=lam):
                return np.cos(x[j]) + np.tanh(lam @ x)

            r = sphere.girsanov_residual(ens, f, obs, cfg.gamma, cfg.samples, cfg.seed + k, threads)
            z = abs(r["lhs"] - r["rhs"]) / r["stderr"]
            worst = max(worst, z)
            diag[f"pair{k}_z"] = z
        rec.update(value=worst, n_samples=cfg.samples, seed=cfg.seed)
        rec["diagnostics"] = diag
    else:  # pragma: no cover - argparse restricts the choices
        raise ParseError(f"unknown command {c}")
    return rec


def render(rec: dict, fmt: str) -> str:
    if fmt == "csv":
        header, rows = rec["_csv"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        return buf.getvalue()
    clean = {k: v for k, v in rec.items() if not k.startswith("_")}
    return json.dumps(clean, indent=2, allow_nan=True) + "\n"


def emit(rec: dict, fmt: str, path: str | None) -> None:
    text = render(rec, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    t0 = time.perf_counter()
    command = None
    try:
        cfg = load_config(argv)
        command = cfg.command
        rec = execute(cfg)
        rec["runtime_s"] = time.perf_counter() - t0
        rec["version"] = __version__
        emit(rec, cfg.format, cfg.output)
        return 0
    except DozzLabError as exc:
        code = 2 if isinstance(exc, ADMISSIBILITY_ERRORS) else 1
        err = {
            "command": command,
            "error": {"code": exc.code, "message": str(exc)},
            "runtime_s": time.perf_counter() - t0,
            "version": __version__,
        }
        sys.stdout.write(json.dumps(err, indent=2) + "\n")
        return code
    except Exception as exc:  # noqa: BLE001 - rendered as a structured record
        err = {
            "command": command,
            "error": {"code": "InternalError", "message": f"{type(exc).__name__}: {exc}"},
            "runtime_s": time.perf_counter() - t0,
            "version": __version__,
        }
        sys.stdout.write(json.dumps(err, indent=2) + "\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
