"""``chicrit`` command line: seeded experiments with CSV/JSON outputs.

Settings come from an optional flat ``key = value`` config file, then from
flags.  Every output starts with the resolved settings, their hash, the seed
and the package version, so reruns of one config are byte-identical.
Exit codes: 0 success, 1 computation failure, 2 configuration or
precondition error (a JSON record is written to stderr).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .analytic import (
    BARGMANN_FOCK_K4,
    BERRY_K4,
    CORRECTED,
    SIGN_VARIANTS,
    DomainError,
    HessianModel2D,
    PowerSpectrum,
    ec_density_a1,
    ec_sum_product,
    lk_sphere_circle,
    maxima_density_sphere,
    planar_hessian_model,
    sphere_radius2,
    spherical_hessian_model,
)
from .acceptance import SEED, run_all
from .critcount import critical_points_csv, hessian_covariance_oracle, mean_estimate, run_count_experiment
from .ensembles import RngStream
from .fieldsim import SpectrumFileError, read_spectrum_file
from .kacrice import (
    CountFormulaInput,
    estimate_a1_a2,
    estimate_Dk,
    estimate_Ek,
    expected_critical_points,
    expected_maxima,
)

COMMANDS = ("closed-form", "estimate-ek", "estimate-dk", "a1a2", "expected-maxima",
            "simulate-count", "oracle-hessian", "validate")
MODELS = ("berry", "bf", "custom", "sphere")

# key -> (type, default); the config file uses the same keys (dashes or underscores)
SETTINGS = {
    "k": (int, 2),
    "m": (int, 2),
    "t": (str, "3"),
    "r": (float, None),
    "spectrum": (str, None),
    "ell": (int, None),
    "model": (str, None),
    "sigma2": (float, None),
    "c": (float, None),
    "volume": (float, None),
    "n": (int, None),
    "seed": (int, 0),
    "threads": (int, 1),
    "out": (str, "."),
    "sign_variant": (str, CORRECTED),
    "grid_res": (int, None),
    "pixel_depth": (int, None),
    "quick": (bool, False),
}
# settings that do not change results and are left out of the hash
NON_RESULT_KEYS = ("out", "threads")

DEFAULT_N = {"estimate-ek": 1_000_000, "estimate-dk": 1_000_000, "a1a2": 1_000_000,
             "expected-maxima": 1_000_000, "simulate-count": 100, "oracle-hessian": 20_000}


class ConfigError(ValueError):
    def __init__(self, message, **extra):
        super().__init__(message)
        self.extra = extra


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path=str(path), line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "command":
            out[key] = value
            continue
        if key not in SETTINGS:
            raise ConfigError(f"unknown key {key!r}", path=str(path), line=lineno)
        out[key] = _convert(key, value, lineno, str(path))
    return out


def _convert(key, value, lineno=None, path=None):
    typ = SETTINGS[key][0]
    try:
        return _parse_bool(value) if typ is bool else typ(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}", path=path, line=lineno) from None


def _t_grid(text: str):
    try:
        ts = [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad threshold list {text!r}") from None
    if not ts:
        raise ConfigError("empty threshold list")
    return ts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chicrit", description="Kac-Rice counts for chi random fields.")
    p.add_argument("--version", action="version", version=f"chicrit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--k", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--t", help="threshold or comma-separated list")
        sp.add_argument("--r", type=float)
        sp.add_argument("--spectrum", help="file of 'ell C_ell' lines")
        sp.add_argument("--ell", type=int, help="single-multipole sphere spectrum")
        sp.add_argument("--model", choices=MODELS)
        sp.add_argument("--sigma2", type=float)
        sp.add_argument("--c", type=float)
        sp.add_argument("--volume", type=float)
        sp.add_argument("--n", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out")
        sp.add_argument("--sign-variant", dest="sign_variant", choices=SIGN_VARIANTS)
        sp.add_argument("--grid-res", dest="grid_res", type=int)
        sp.add_argument("--pixel-depth", dest="pixel_depth", type=int)
        sp.add_argument("--quick", action="store_true", default=None)
    return p


def resolve(args) -> dict:
    cfg = {key: default for key, (_, default) in SETTINGS.items()}
    if args.config:
        file_cfg = read_config(args.config)
        if file_cfg.pop("command", args.command) != args.command:
            raise ConfigError("config file is for a different command", path=args.config)
        cfg.update(file_cfg)
    for key in SETTINGS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    if cfg["n"] is None:
        cfg["n"] = DEFAULT_N.get(args.command)
    cfg["t"] = _t_grid(cfg["t"])
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["sign_variant"] not in SIGN_VARIANTS:
        raise ConfigError(f"sign_variant must be one of {SIGN_VARIANTS}")
    if cfg["model"] is not None and cfg["model"] not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    if cfg["n"] is not None and cfg["n"] < 1:
        raise ConfigError("n must be >= 1")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if cfg["k"] < 1:
        raise ConfigError("k must be >= 1")


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in sorted(cfg.items()) if k not in NON_RESULT_KEYS}
    if keep.get("spectrum"):
        keep["spectrum"] = _spectrum(cfg).digest()  # content, not path
    blob = json.dumps(keep, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _spectrum(cfg):
    if cfg["spectrum"]:
        return read_spectrum_file(cfg["spectrum"])
    if cfg["ell"] is not None:
        if cfg["ell"] < 1:
            raise ConfigError("ell must be >= 1")
        return PowerSpectrum.single(cfg["ell"])
    return None


def _model(cfg):
    """Hessian model and, for the sphere, the sphere volume ``4 pi r^2``."""
    kind = cfg["model"]
    spec = _spectrum(cfg)
    if kind is None:
        kind = "sphere" if spec is not None else "berry"
    if kind == "berry":
        return planar_hessian_model(BERRY_K4), cfg["volume"]
    if kind == "bf":
        return planar_hessian_model(BARGMANN_FOCK_K4), cfg["volume"]
    if kind == "custom":
        if cfg["sigma2"] is None or cfg["c"] is None:
            raise ConfigError("custom model needs --sigma2 and --c")
        return HessianModel2D(cfg["sigma2"], cfg["c"]), cfg["volume"]
    if spec is None:
        raise ConfigError("sphere model needs --spectrum or --ell")
    r2 = sphere_radius2(spec)
    return spherical_hessian_model(spec, cfg["sign_variant"]), 4 * math.pi * r2


def _header(cfg) -> str:
    lines = [f"# chicrit {__version__}", f"# command={cfg['command']}", f"# config_hash={config_hash(cfg)}",
             f"# seed={cfg['seed']}"]
    for key in sorted(SETTINGS):
        if key in NON_RESULT_KEYS or key == "seed":
            continue
        val = cfg[key]
        if key == "t":
            val = ",".join(f"{x:g}" for x in val)
        lines.append(f"# {key}={val}")
    return "\n".join(lines) + "\n"


def _write_csv(cfg, name, header_row, rows):
    buf = io.StringIO()
    buf.write(_header(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header_row)
    for row in rows:
        w.writerow([f"{x:.12g}" if isinstance(x, float) else x for x in row])
    return _emit(cfg, name, buf.getvalue())


def _write_json(cfg, name, payload):
    doc = {"version": __version__, "command": cfg["command"], "config_hash": config_hash(cfg),
           "seed": cfg["seed"], "config": {k: v for k, v in sorted(cfg.items()) if k not in NON_RESULT_KEYS},
           **payload}
    return _emit(cfg, name, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _emit(cfg, name, text):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    print(f"wrote {path}")
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_closed_form(cfg):
    r = cfg["r"]
    if r is None:
        spec = _spectrum(cfg)
        if spec is None:
            raise ConfigError("closed-form needs --r, --spectrum or --ell")
        r = math.sqrt(sphere_radius2(spec))
    if r <= 0:
        raise ConfigError("r must be positive")
    lk = lk_sphere_circle(r)
    rows = [[t, maxima_density_sphere(r, t, cfg["sign_variant"]), float(ec_sum_product(lk, t))] for t in cfg["t"]]
    _write_csv(cfg, "closed_form.csv", ["t", "maxima_density_sphere", "ec_sum_product"], rows)


def _stream(cfg, stream_id):
    return RngStream(cfg["seed"], stream_id)


def cmd_estimate(cfg, which):
    model, _ = _model(cfg)
    rows = []
    for i, t in enumerate(cfg["t"]):
        if which == "ek":
            est = estimate_Ek(cfg["k"], t, model, cfg["n"], _stream(cfg, i), threads=cfg["threads"])
        else:
            est = estimate_Dk(cfg["k"], t, model, cfg["n"], _stream(cfg, i), threads=cfg["threads"])
        rows.append([t, est.value, est.std_error, est.n])
    _write_csv(cfg, f"estimate_{which}.csv", ["t", "value", "std_error", "n"], rows)


def cmd_a1a2(cfg):
    model, _ = _model(cfg)
    rows = []
    for i, t in enumerate(cfg["t"]):
        a1, a2 = estimate_a1_a2(t, model, cfg["n"], _stream(cfg, i), threads=cfg["threads"])
        rows.append([t, a1.value, a1.std_error, a2.value, a2.std_error, float(ec_density_a1(t, model))])
    _write_csv(cfg, "a1a2.csv", ["t", "a1", "a1_se", "a2", "a2_se", "a1_closed_form"], rows)


def cmd_expected_maxima(cfg):
    model, volume = _model(cfg)
    if volume is None:
        raise ConfigError("planar models need --volume")
    k, m = cfg["k"], cfg["m"]
    if m != 2:
        raise ConfigError("the catalog models are two-dimensional (m = 2)")
    rows = []
    for i, t in enumerate(cfg["t"]):
        inp = CountFormulaInput(k, m, t, volume, model)
        mx = expected_maxima(inp, cfg["n"], _stream(cfg, 2 * i), threads=cfg["threads"]) if k >= 2 else None
        cp = (expected_critical_points(inp, cfg["n"], _stream(cfg, 2 * i + 1), chi_law=cfg["sign_variant"],
                                       threads=cfg["threads"]) if k > m else None)
        rows.append([t, *(("", "") if mx is None else (mx.value, mx.std_error)),
                     *(("", "") if cp is None else (cp.value, cp.std_error))])
    _write_csv(cfg, "expected_counts.csv", ["t", "maxima", "maxima_se", "critical", "critical_se"], rows)


def cmd_simulate_count(cfg):
    spec = _spectrum(cfg)
    if spec is None:
        raise ConfigError("simulate-count needs --spectrum or --ell")
    ts = cfg["t"]
    if min(ts) <= 0:
        raise ConfigError("thresholds must be > 0")
    res = run_count_experiment(spec, cfg["k"], ts, cfg["n"], RngStream(cfg["seed"], 0), cfg["grid_res"],
                               cfg["pixel_depth"], threads=cfg["threads"])
    rows = []
    for x in res:
        for t in ts:
            rows.append([x.realization, t, x.maxima[t], x.critical[t], x.signed_ec[t],
                         x.pixel_ec.get(t, ""), "" if x.morse_sum is None else x.morse_sum])
    _write_csv(cfg, "counts.csv", ["realization", "t", "maxima", "critical", "signed_ec", "pixel_ec", "morse_sum"], rows)
    buf = io.StringIO()
    buf.write(_header(cfg))
    buf.write(critical_points_csv(res))
    _emit(cfg, "critical_points.csv", buf.getvalue())
    r = math.sqrt(sphere_radius2(spec))
    summary = {}
    for t in ts:
        mx = mean_estimate([x.maxima[t] for x in res], cfg["seed"])
        ec = mean_estimate([x.signed_ec[t] for x in res], cfg["seed"])
        cp = mean_estimate([x.critical[t] for x in res], cfg["seed"])
        entry = {"maxima": [mx.value, mx.std_error], "critical": [cp.value, cp.std_error],
                 "signed_ec": [ec.value, ec.std_error]}
        if cfg["k"] == 2:
            entry["maxima_density_sphere"] = maxima_density_sphere(r, t, cfg["sign_variant"])
            entry["ec_sum_product"] = float(ec_sum_product(lk_sphere_circle(r), t))
        if cfg["pixel_depth"]:
            entry["pixel_agreement"] = sum(x.signed_ec[t] == x.pixel_ec[t] for x in res) / len(res)
        summary[f"{t:g}"] = entry
    _write_json(cfg, "summary.json", {"radius": r, "realizations": len(res),
                                      "incomplete_searches": sum(1 for x in res if x.morse_sum not in (None, 2)),
                                      "thresholds": summary})


def cmd_oracle_hessian(cfg):
    spec = _spectrum(cfg)
    kind = cfg["model"] or ("sphere" if spec is not None else "berry")
    source = {"berry": "berry", "bf": "bargmann_fock"}.get(kind)
    if kind == "sphere":
        if spec is None:
            raise ConfigError("sphere oracle needs --spectrum or --ell")
        source = spec
    if source is None:
        raise ConfigError("oracle-hessian supports berry, bf and sphere models")
    if cfg["n"] < 10_000:
        raise ConfigError("oracle-hessian needs n >= 10000")
    rep = hessian_covariance_oracle(source, cfg["n"], RngStream(cfg["seed"], 0))
    _write_json(cfg, "oracle_hessian.json", {"report": rep.as_dict()})


def cmd_validate(cfg):
    results = run_all(quick=bool(cfg["quick"]), seed=cfg["seed"] or SEED)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    _write_json(cfg, "validate.json", {"results": [
        {"name": r.name, "passed": r.passed, "detail": r.detail, "metrics": r.metrics} for r in results]})
    return 0 if all(r.passed for r in results) else 1


HANDLERS = {
    "closed-form": cmd_closed_form,
    "estimate-ek": lambda cfg: cmd_estimate(cfg, "ek"),
    "estimate-dk": lambda cfg: cmd_estimate(cfg, "dk"),
    "a1a2": cmd_a1a2,
    "expected-maxima": cmd_expected_maxima,
    "simulate-count": cmd_simulate_count,
    "oracle-hessian": cmd_oracle_hessian,
    "validate": cmd_validate,
}


def _error(kind, exc, code, **extra):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return HANDLERS[args.command](cfg) or 0
    except SpectrumFileError as exc:
        return _error("config", exc, 2, line=exc.line)
    except ConfigError as exc:
        return _error("config", exc, 2, **exc.extra)
    except (DomainError, ValueError) as exc:
        return _error("precondition", exc, 2)
    except Exception as exc:  # noqa: BLE001 - any compute failure maps to exit 1
        return _error("compute", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
