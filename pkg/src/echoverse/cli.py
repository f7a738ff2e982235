"""Command-line runner: ``echoverse run | validate | probe``.

Exit codes: 0 success, 1 a validated invariant failed, 2 bad configuration
or unreadable input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import esn as esn_mod
from . import lab
from . import lsm as lsm_mod
from . import qrc as qrc_mod
from ._rng import MAX_SEED, stream
from .errors import DivergenceError, RefractoryError, StateError
from .signals import FadingFunction, Orbit

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

REPORT_FIELDS = [
    "family", "capacity", "degree", "seed", "repeat", "target",
    "n_features", "train_nrmse", "test_nrmse", "weight_norm",
]


class ConfigError(Exception):
    pass


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


@dataclass
class ExperimentConfig:
    path: Path
    text: str
    family: str
    ladder: list
    target: object
    degree: int = 2
    repeats: int = 1
    seed: int = 0
    reg: float = 1e-6
    data: lab.DataSpec = field(default_factory=lab.DataSpec)
    reservoir: dict = field(default_factory=dict)
    inputs: tuple | None = None
    fading: FadingFunction = field(default_factory=FadingFunction)

    def error(self, key: str, message: str) -> ConfigError:
        return _config_error(self.path, self.text, key, message)


def _config_error(path, text, key, message) -> ConfigError:
    line = _line_of(text, key)
    where = f"{path}:{line}" if line else str(path)
    return ConfigError(f"{where}: field '{key}': {message}")


def check_seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value!r}") from None
    if isinstance(value, float) and value != seed or not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value!r}")
    return seed


def load_config(path, seed_override=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")

    def err(key, message):
        return _config_error(path, text, key, message)

    family = doc.get("family")
    if family not in lab.FAMILIES:
        raise err("family", f"must be one of {', '.join(lab.FAMILIES)}, got {family!r}")
    ladder = doc.get("ladder")
    if (
        not isinstance(ladder, list)
        or not ladder
        or not all(isinstance(c, int) and c >= 1 for c in ladder)
        or any(b <= a for a, b in zip(ladder, ladder[1:]))
    ):
        raise err("ladder", f"must be a non-empty increasing list of positive integers, got {ladder!r}")
    raw_target = doc.get("target", "self")
    try:
        target = raw_target if raw_target == "self" else lab.TargetFilter.from_config(raw_target)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise err("target", str(exc)) from None
    try:
        seed = check_seed(seed_override if seed_override is not None else doc.get("seed", 0))
    except ValueError as exc:
        raise err("seed", str(exc)) from None
    degree, repeats, reg = doc.get("degree", 2), doc.get("repeats", 1), doc.get("reg", 1e-6)
    if not isinstance(degree, int) or degree < 0:
        raise err("degree", f"must be a non-negative integer, got {degree!r}")
    if not isinstance(repeats, int) or repeats < 1:
        raise err("repeats", f"must be a positive integer, got {repeats!r}")
    if not isinstance(reg, (int, float)) or reg < 0:
        raise err("reg", f"must be a non-negative number, got {reg!r}")

    data_doc = dict(doc.get("data", {}))
    inputs = None
    files = [data_doc.pop(k, None) for k in ("train_input", "test_input")]
    if any(files):
        if not all(files):
            raise err("data", "train_input and test_input must be given together")
        loaded = []
        for key, name in zip(("train_input", "test_input"), files):
            fpath = (path.parent / name) if not Path(name).is_absolute() else Path(name)
            if not fpath.is_file():
                raise err(key, f"input file not found: {fpath}")
            try:
                if family == "lsm":
                    loaded.append(lsm_mod.SpikeTrain.load(fpath))
                else:
                    loaded.append(Orbit.from_csv(fpath))
            except (ValueError, OSError) as exc:
                raise err(key, f"cannot read {fpath}: {exc}") from None
        inputs = tuple(loaded)
    try:
        data = lab.DataSpec(**data_doc)
    except TypeError as exc:
        raise err("data", str(exc)) from None
    if data.washout < 0 or data.train < 1 or data.test < 1:
        raise err("data", "train and test must be positive, washout non-negative")
    try:
        fading = FadingFunction.from_config(doc.get("fading", {"kind": "exp", "rate": 0.1}))
    except (KeyError, ValueError) as exc:
        raise err("fading", str(exc)) from None
    return ExperimentConfig(
        path, text, family, ladder, target, degree, repeats, seed, float(reg), data,
        dict(doc.get("reservoir", {})), inputs, fading,
    )


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ECHOVERSE_THREADS", "1")))
    except ValueError:
        return 1


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _summary(cfg: ExperimentConfig, reports) -> dict:
    points = []
    for c in cfg.ladder:
        errs = [r.test_nrmse for r in reports if r.capacity == c]
        points.append(
            {
                "capacity": c,
                "median_test_nrmse": statistics.median(errs),
                "mean_test_nrmse": statistics.fmean(errs),
                "max_test_nrmse": max(errs),
                "runs": len(errs),
            }
        )
    medians = [p["median_test_nrmse"] for p in points]
    return {
        "family": cfg.family,
        "target": cfg.target if isinstance(cfg.target, str) else cfg.target.to_config(),
        "degree": cfg.degree,
        "seed": cfg.seed,
        "reg": cfg.reg,
        "data": vars(cfg.data) if not hasattr(cfg.data, "__dataclass_fields__") else {
            k: getattr(cfg.data, k) for k in cfg.data.__dataclass_fields__
        },
        "ladder": points,
        "median_non_increasing": all(b <= a for a, b in zip(medians, medians[1:])),
    }


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = lab.approximation_experiment(
        cfg.family, cfg.ladder, cfg.target, cfg.data, cfg.seed, cfg.degree, cfg.reg,
        cfg.repeats, cfg.reservoir, workers=_threads(), drives=cfg.inputs,
    )
    _write_csv(out / "reports.csv", REPORT_FIELDS, ([getattr(r, k) for k in REPORT_FIELDS] for r in reports))
    summary = _summary(cfg, reports)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if not args.quiet:
        for p in summary["ladder"]:
            print(
                f"{cfg.family} capacity={p['capacity']} median test NRMSE={p['median_test_nrmse']:.6g} "
                f"({p['runs']} runs)"
            )
    return EXIT_OK


# -- validate ---------------------------------------------------------------------


def _line(name: str, ok: bool, detail: str = "") -> str:
    return f"{name}: {'pass' if ok else 'fail'}" + (f" ({detail})" if detail else "")


def _validate_esn(doc, tol):
    sys_ = esn_mod.EsnSystem.from_json(doc)
    rep = esn_mod.contraction_report(sys_)
    yield _line("ESP condition", rep.spectral_pass, f"L*rho(A)={rep.spectral_rate:.6g}"), rep.spectral_pass
    note = "one-step contraction (info)"
    yield _line(note, rep.contraction_pass, f"L*||A||={rep.operator_rate:.6g}"), None


def _validate_qrc(doc, tol):
    q = qrc_mod.QrcSystem.from_json(doc)
    H = q.hamiltonian.matrix()
    herm = float(np.max(np.abs(H - H.conj().T)))
    yield _line("hermiticity", herm <= tol, f"residual {herm:.3g}"), herm <= tol
    U = q.channel
    orth = float(np.max(np.abs(U.T @ U - np.eye(U.shape[0]))))
    yield _line("channel orthogonality", orth <= tol, f"residual {orth:.3g}"), orth <= tol
    e0 = np.zeros(U.shape[0])
    e0[0] = 1.0
    fix = float(np.max(np.abs(U @ e0 - e0)))
    yield _line("identity fixed", fix <= tol, f"residual {fix:.3g}"), fix <= tol


def _validate_state(doc, tol):
    r = np.asarray(doc["r"], dtype=float)
    diag = qrc_mod.validate_state(r, tol)
    if "N" in doc and int(doc["N"]) != diag.N:
        raise ValueError(f"state has {r.size} components, which does not match N={doc['N']}")
    yield _line("trace", diag.trace_ok, f"expected {diag.expected_trace:g}, got {diag.trace_component:g}"), diag.trace_ok
    yield _line("positivity", diag.positive_ok, f"min eigenvalue {diag.min_eigenvalue:.6g}"), diag.positive_ok
    yield _line("hermiticity", diag.hermitian_ok, f"residual {diag.hermiticity_residual:.3g}"), diag.hermitian_ok


def _validate_spikes(path, tol):
    delta, horizon, times = lsm_mod.read_spike_file(path)
    try:
        lsm_mod.validate_spike_train(times, delta, horizon)
    except RefractoryError as exc:
        a, b = exc.pair
        yield _line("refractory", False, f"pair {a!r}, {b!r}"), False
        return
    except ValueError as exc:
        yield _line("spike train", False, str(exc)), False
        return
    yield _line("refractory", True, f"{len(times)} spikes, gap > {delta!r}"), True


def _validate_orbit(path, tol):
    u = Orbit.from_csv(path)
    yield _line("orbit", True, f"L={u.length}, n={u.dim}, K={u.bound:g}"), True


def _checks_for(path: Path, tol):
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("# delta="):
        return list(_validate_spikes(path, tol))
    if path.suffix == ".csv":
        return list(_validate_orbit(path, tol))
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "esn":
        return list(_validate_esn(doc, tol))
    if kind == "qrc":
        return list(_validate_qrc(doc, tol))
    if kind == "qrc_state":
        return list(_validate_state(doc, tol))
    if "family" in doc:
        load_config(path)
        return [(_line("config", True), True)]
    raise ValueError(f"unrecognised subject kind {kind!r}")


def cmd_validate(args) -> int:
    subject = args.subject or args.config
    if subject is None:
        raise ConfigError("validate needs a subject path")
    path = Path(subject)
    if not path.is_file():
        raise ConfigError(f"{path}: file not found")
    try:
        results = _checks_for(path, args.tolerance)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot parse subject: {exc}") from None
    for text, _ in results:
        print(text)
    return EXIT_OK if all(ok is not False for _, ok in results) else EXIT_FAIL


# -- probe ------------------------------------------------------------------------


def cmd_probe(args) -> int:
    """Two-trajectory convergence and separation diagnostics for one reservoir."""
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    size = cfg.ladder[0]
    res = lab._Reservoir(cfg.family, size, cfg.seed, 0, cfg.reservoir)
    rng = stream(cfg.seed, "probe-input")
    L = cfg.data.washout + cfg.data.test
    lines = []
    if cfg.family == "esn":
        s = res.system
        u = Orbit(rng.uniform(-cfg.data.bound, cfg.data.bound, L), bound=cfg.data.bound)
        xa, xb = rng.uniform(-1, 1, s.N), rng.uniform(-1, 1, s.N)
        dist = esn_mod.esp_convergence_test(s, u, xa, xb)
        pairs = []
        for k in range(min(20, L)):
            v = u.values.copy()
            v[L - 1 - k, 0] = -v[L - 1 - k, 0]
            pairs.append((u, Orbit(v, bound=cfg.data.bound)))
        gaps = lab.separation_probe("esn", pairs, instances=[s])
        _write_csv(out / "separation.csv", ["lag", "gap"], ((k, g.gap) for k, g in enumerate(gaps)))
        rep = esn_mod.contraction_report(s)
        lines.append(f"esn N={s.N}: L*rho(A)={rep.spectral_rate:.4g}, L*||A||={rep.operator_rate:.4g}")
    elif cfg.family == "qrc":
        m = res.system
        u = Orbit(rng.uniform(0.0, 1.0, L), bound=1.0)
        q = m.registers[0]
        ra = qrc_mod.maximally_mixed(q.N)
        rb = qrc_mod.density_to_vector(np.diag(np.eye(2**q.N)[0]).astype(complex))
        dist = qrc_mod.qrc_convergence(q, u, ra, rb)
        z, y = qrc_mod.run_multiplexed(m, u, washout=0)
        header = ["t"] + [f"z{i + 1}" for i in range(z.dim)] + ["y"]
        _write_csv(out / "trajectory.csv", header, ([t, *zt, yt] for t, zt, yt in zip(u.times, z.values, y.scalar)))
        pairs = []
        for k in range(min(20, L)):
            v = u.values.copy()
            v[L - 1 - k, 0] = 1.0 - v[L - 1 - k, 0]
            pairs.append((u, Orbit(v, bound=1.0)))
        gaps = lab.separation_probe("qrc", pairs, instances=list(m.registers))
        _write_csv(out / "separation.csv", ["lag", "gap"], ((k, g.gap) for k, g in enumerate(gaps)))
    else:
        s = res.system
        horizon = float(L - 1)
        train = lsm_mod.random_spike_train(rng, 1.0, horizon, 0.5)
        pairs = []
        for k in range(min(20, len(train))):
            kept = train.times[: len(train) - 1 - k] + train.times[len(train) - k :]
            pairs.append((train, lsm_mod.SpikeTrain(kept, train.delta, train.horizon)))
        gaps = lab.separation_probe("lsm", pairs, instances=[s])
        _write_csv(out / "separation.csv", ["dropped_from_end", "gap"], ((k, g.gap) for k, g in enumerate(gaps)))
        dist = None
    if dist is not None:
        _write_csv(out / "convergence.csv", ["step", "distance"], enumerate(dist.tolist(), start=1))
        lines.append(f"two-trajectory distance: first={dist[0]:.4g} last={dist[-1]:.4g}")
    if not args.quiet:
        for line in lines:
            print(line)
    return EXIT_OK


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echoverse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="experiment config (JSON)")
        if needs_out:
            p.add_argument("--out", default="out", help="artifact directory")
        p.add_argument("--seed", type=str, default=None, help="override the config seed (u64)")
        p.add_argument("--tolerance", type=float, default=1e-10)
        p.add_argument("--quiet", action="store_true")

    run = sub.add_parser("run", help="run a capacity-ladder experiment")
    common(run)
    val = sub.add_parser("validate", help="check a serialized system, state or input")
    val.add_argument("subject", nargs="?")
    common(val, needs_out=False)
    probe = sub.add_parser("probe", help="convergence and separation diagnostics")
    common(probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "probe") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.seed is not None:
            try:
                args.seed = check_seed(args.seed)
            except ValueError as exc:
                raise ConfigError(f"--seed: {exc}") from None
        handler = {"run": cmd_run, "validate": cmd_validate, "probe": cmd_probe}[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, LinAlgError, FloatingPointError, StateError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
