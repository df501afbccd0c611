"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import experiments as ex
from .affine import (
    affine_isoperimetric_ratio, fn_density, p_affine_surface_area,
)
from .bodies import parse_body, validate_body
from .deviation import surface_deviation, volume_deviation
from .errors import ContractViolation, NumericalFailure
from .hull import Polytope, convex_hull
from .integration import (
    DEFAULT_SEED, MC_SAMPLES, DirectionWeight, body_volume, custom_density, envelope_constant,
    make_rng, sample_boundary, surface_area, uniform_density,
)

log = logging.getLogger("polyapprox")


class ConfigError(Exception):
    """Bad command-line input; ``flag`` names the offending option."""

    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


@dataclass
class RunConfig:
    """Everything needed to reproduce one invocation."""

    command: str
    body: str | None = None
    density: str = "fn"
    seed: int = DEFAULT_SEED
    workers: int = 1
    format: str = "csv"
    out: str | None = None
    plot: str | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"schema_version": 1, **asdict(self)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        version = doc.pop("schema_version", 1)
        if version != 1:
            raise ConfigError("--config", f"unsupported schema_version {version}")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("--config", f"unknown field(s) {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# -- parsing ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("usage", message)


COMMON = ("body", "density", "seed", "workers", "format", "out", "plot")


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser():
    p = _Parser(prog="polyapprox", description="Random polytope approximation of smooth convex bodies.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help, body=True, density=False):
        s = sub.add_parser(name, help=help)
        if body:
            s.add_argument("--body", required=True,
                           help="ball:r=R,n=DIM | ellipsoid:a=A,b=B[,c=C,...] | curve2d:PATH.json")
        if density:
            s.add_argument("--density", default="fn", help="uniform | fn | custom:PATH.json")
        s.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
        s.add_argument("--workers", type=int, default=1, help="worker processes for trials")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        s.add_argument("--out", help="output file (default stdout)")
        return s

    s = cmd("bodyinfo", "validate a body and print its basic measures")
    s.set_defaults(format="json")
    s = cmd("asp", "p-affine surface area")
    s.add_argument("--p", required=True, type=float)
    s.add_argument("--samples", type=int, default=MC_SAMPLES)
    s = cmd("deviate", "surface and volume deviation between a scaled body and a polytope", density=True)
    s.add_argument("--polytope", help="hull JSON file; if absent a random hull is drawn")
    s.add_argument("--n-points", type=int, help="size of the random hull")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--samples", type=int, default=200_000)
    s = cmd("construct", "random hulls against the shrunken body at one N", density=True)
    s.add_argument("--n-points", type=int, required=True)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--c-mode", choices=("auto", "asymptotic", "empirical"), default="auto")
    s.add_argument("--witness", help="write the best polytope as hull JSON")
    s = cmd("scaling", "construction over a schedule of N with a log-log fit", density=True)
    s.add_argument("--schedule", type=_int_list, required=True)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--c-mode", choices=("auto", "asymptotic", "empirical"), default="auto")
    s.add_argument("--plot", help="figure path (.svg or .png)")
    s = cmd("deficit", "hull surface-area deficit against its asymptotic constant", density=True)
    s.add_argument("--schedule", type=_int_list, required=True)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--plot", help="figure path (.svg or .png)")
    s = cmd("verify", "identity checks")
    s.add_argument("--samples", type=int, default=ex.IDENTITY_SAMPLES)
    s.add_argument("--mean-curvature", choices=("n-1", "n"), default="n-1",
                   help="normalisation of the mean curvature")
    s = cmd("bpcheck", "planar Blaschke-Petkantschin check")
    s.add_argument("--samples", type=int, default=MC_SAMPLES)
    s = sub.add_parser("run", help="execute a saved RunConfig")
    s.add_argument("config", help="RunConfig JSON file")
    return p


def config_from_args(ns):
    extra = {k.replace("-", "_"): v for k, v in vars(ns).items()
             if k not in COMMON + ("command", "verbose") and v is not None}
    return RunConfig(
        command=ns.command, body=getattr(ns, "body", None), density=getattr(ns, "density", "fn"),
        seed=ns.seed, workers=ns.workers, format=ns.format, out=ns.out,
        plot=getattr(ns, "plot", None), params=extra,
    )


def _body(cfg):
    try:
        return parse_body(cfg.body)
    except (ContractViolation, OSError, ValueError, KeyError) as exc:
        raise ConfigError("--body", str(exc)) from None


def _density(cfg, body):
    spec = cfg.density or "fn"
    if spec == "uniform":
        return uniform_density(body)
    if spec == "fn":
        return fn_density(body, seed=cfg.seed)
    if spec.startswith("custom:"):
        path = spec[len("custom:"):]
        try:
            with open(path) as fh:
                weight = DirectionWeight.from_json(json.load(fh))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError("--density", f"cannot read custom density {path!r}: {exc}") from None
        if len(weight.bias) != body.dim:
            raise ConfigError("--density", f"bias has length {len(weight.bias)}, body has dimension {body.dim}")
        return custom_density(body, weight, seed=cfg.seed)
    raise ConfigError("--density", f"unknown density {spec!r} (uniform, fn or custom:PATH)")


def _positive(cfg, name, minimum=1):
    v = cfg.params.get(name)
    if v is not None and v < minimum:
        raise ConfigError("--" + name.replace("_", "-"), f"must be >= {minimum}")
    return v


# -- emission -----------------------------------------------------------------

def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) for h in header])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def _json(doc):
    return json.dumps(_jsonable({"schema_version": 1, **doc}), indent=1, sort_keys=True) + "\n"


def _emit(cfg, text, stdout):
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


# -- commands -----------------------------------------------------------------

def _bodyinfo(cfg):
    body = _body(cfg)
    rep = validate_body(body)
    n = body.dim
    doc = {"body": body.to_spec(), "dim": n, "valid": rep.valid, "failures": rep.failures,
           "min_curvature": rep.min_curvature, "min_support": rep.min_support}
    if rep.valid:
        as1 = p_affine_surface_area(body, 1, seed=cfg.seed).value
        asn = p_affine_surface_area(body, n, seed=cfg.seed).value
        doc.update(surface_area=surface_area(body), volume=body_volume(body),
                   as_1=as1.value, as_1_stderr=as1.std_error, as_n=asn.value, as_n_stderr=asn.std_error,
                   affine_isoperimetric_ratio=affine_isoperimetric_ratio(body, 1, seed=cfg.seed).value)
    return _json(doc)


def _asp(cfg):
    body = _body(cfg)
    p = cfg.params["p"]
    if not math.isinf(p) and p == -body.dim:
        raise ConfigError("--p", "p = -n is excluded")
    est = p_affine_surface_area(body, p, samples=_positive(cfg, "samples", 100), seed=cfg.seed).value
    row = {"p": p, "value": est.value, "stderr": est.std_error, "samples": est.samples, "seed": cfg.seed}
    if cfg.format == "json":
        return _json({"body": body.to_spec(), **row})
    return _csv(["p", "value", "stderr", "samples", "seed"], [row])


def _deviate(cfg):
    body = _body(cfg)
    if cfg.params.get("polytope"):
        try:
            P = Polytope.from_json(cfg.params["polytope"])
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("--polytope", str(exc)) from None
        if P.dim != body.dim:
            raise ConfigError("--polytope", f"dimension {P.dim} does not match body dimension {body.dim}")
    else:
        N = _positive(cfg, "n_points", body.dim + 1)
        if N is None:
            raise ConfigError("--n-points", "required when --polytope is not given")
        dens = _density(cfg, body)
        pts = sample_boundary(body, dens, make_rng(cfg.seed, 0, N, 0, 0), N,
                              envelope=envelope_constant(body, dens)).x
        P = convex_hull(pts)
    scale = cfg.params.get("scale", 1.0)
    if not scale > 0:
        raise ConfigError("--scale", "must be positive")
    samples = _positive(cfg, "samples", 100)
    ds = surface_deviation(body, scale, P, samples=samples, seed=cfg.seed)
    dv = volume_deviation(body, scale, P, samples=samples, seed=cfg.seed)
    row = {"n_vertices": P.n_vertices, "scale": scale, "delta_s": ds.delta.value,
           "delta_s_stderr": ds.delta.std_error, "delta_v": dv.value, "delta_v_stderr": dv.std_error,
           "method": ds.method, "seed": cfg.seed}
    if cfg.format == "json":
        return _json({"body": body.to_spec(), **row, "parts": ds.to_dict()})
    return _csv(list(row), [row])


def _construct(cfg):
    body = _body(cfg)
    N = _positive(cfg, "n_points", body.dim + 1)
    trials = _positive(cfg, "trials")
    res = ex.run_construction(body, N, trials, _density(cfg, body), cfg.params.get("c_mode", "auto"),
                              cfg.seed, cfg.workers)
    if cfg.params.get("witness"):
        res.witness.to_json(cfg.params["witness"])
    summary = res.summary()
    if cfg.format == "json":
        return _json({"body": body.to_spec(), **summary, "deltas": res.deltas,
                      "bound_ratios": res.bound_ratios})
    return _csv(ex.SCALING_HEADER, [summary])


def _scaling(cfg):
    body = _body(cfg)
    trials = _positive(cfg, "trials")
    report = ex.scaling_study(body, _density(cfg, body), cfg.params["schedule"], trials,
                              cfg.params.get("c_mode", "auto"), cfg.seed, cfg.workers)
    if cfg.plot:
        from .plotting import plot_scaling
        plot_scaling(report, cfg.plot)
    return _json(report.to_dict()) if cfg.format == "json" else report.to_csv()


def _deficit(cfg):
    body = _body(cfg)
    trials = _positive(cfg, "trials")
    rows = ex.deficit_table(body, _density(cfg, body), cfg.params["schedule"], trials, cfg.seed,
                            cfg.workers)
    if cfg.plot:
        from .plotting import plot_deficit
        plot_deficit(rows, cfg.plot, f"{body.to_spec()}, {cfg.density}")
    if cfg.format == "json":
        return _json({"body": body.to_spec(), "density": cfg.density, "seed": cfg.seed, "rows": rows})
    return _csv(ex.DEFICIT_HEADER, rows)


def _verify(cfg):
    body = _body(cfg)
    report = ex.verify_identities(body, samples=_positive(cfg, "samples", 100), seed=cfg.seed,
                                  mean_curvature=cfg.params.get("mean_curvature", "n-1"))
    return (_json(report.to_dict()) if cfg.format == "json" else report.to_csv()), report.all_passed


def _bpcheck(cfg):
    body = _body(cfg)
    if body.dim != 2:
        raise ConfigError("--body", "bpcheck needs a planar body")
    row, est = ex.bp_check_2d(body, samples=_positive(cfg, "samples", 100), seed=cfg.seed)
    report = ex.IdentityReport(body.to_spec(), [row])
    return (_json({**report.to_dict(), "rhs_stderr": est.std_error}) if cfg.format == "json"
            else report.to_csv()), row.passed


COMMANDS = {"bodyinfo": _bodyinfo, "asp": _asp, "deviate": _deviate, "construct": _construct,
            "scaling": _scaling, "deficit": _deficit, "verify": _verify, "bpcheck": _bpcheck}


def execute(cfg, stdout=None):
    """Run a RunConfig; returns the exit code."""
    stdout = stdout or sys.stdout
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"unknown command {cfg.command!r}")
    if cfg.workers < 1:
        raise ConfigError("--workers", "must be >= 1")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("--seed", "must be a 64-bit unsigned integer")
    out = COMMANDS[cfg.command](cfg)
    ok = True
    if isinstance(out, tuple):
        out, ok = out
    _emit(cfg, out, stdout)
    return 0 if ok else 2


def run_command(argv=None, stdout=None, stderr=None):
    stderr = stderr or sys.stderr
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=stderr)
        if ns.command == "run":
            try:
                with open(ns.config) as fh:
                    cfg = RunConfig.from_json(fh.read())
            except (OSError, ValueError, TypeError) as exc:
                raise ConfigError("config", str(exc)) from None
        else:
            cfg = config_from_args(ns)
        return execute(cfg, stdout)
    except ConfigError as exc:
        print(f"polyapprox: error: {exc}", file=stderr)
        return 1
    except ContractViolation as exc:
        print(f"polyapprox: error: {exc}", file=stderr)
        return 1
    except NumericalFailure as exc:
        print(f"polyapprox: numerical failure: {exc}", file=stderr)
        return 2


def main():
    sys.exit(run_command())
