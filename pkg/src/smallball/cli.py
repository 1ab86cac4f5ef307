"""Command-line front end.

Subcommands: simulate, couple, certify, estimate, scaling, walk.  Each takes
an optional JSON config file plus flag overrides (flags win), validates the
merged configuration, logs the resolved config and master seed to stderr,
and writes its artifact to --out (or stdout).

Exit codes: 0 success, 1 invalid configuration, 2 runtime error.  Existing
output files are never overwritten without --force.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import bounds, coupling, estimator, graphs, martingale
from .errors import ConfigError, SmallballError

SEED_ENV_VAR = "SMALLBALL_SEED"


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


@contextmanager
def _validation():
    """Treat package errors raised while interpreting config as config errors."""
    try:
        yield
    except ConfigError:
        raise
    except SmallballError as exc:
        raise ConfigError(f"{exc.code}: {exc}") from exc


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc


# ---------------------------------------------------------------------------
# config plumbing


def _merge_config(schema: dict, args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags; unknown config keys rejected."""
    resolved = {key: default for key, (default, _cast) in schema.items()}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must contain a JSON object")
        unknown = set(file_cfg) - set(schema)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        resolved.update(file_cfg)
    for key in schema:
        flag = key.replace("-", "_")
        value = getattr(args, flag, None)
        if value is not None:
            resolved[key] = value
    for key, (_default, cast) in schema.items():
        if resolved[key] is not None and cast is not None:
            try:
                resolved[key] = cast(resolved[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    return resolved


def _floats(raw) -> list[float]:
    if isinstance(raw, str):
        return [float(x) for x in raw.split(",") if x != ""]
    return [float(x) for x in raw]


def _vertex(raw):
    if isinstance(raw, (list, tuple)):
        return tuple(int(x) for x in raw)
    if isinstance(raw, str) and "," in raw:
        return tuple(int(x) for x in raw.split(","))
    return int(raw)


def _parse_graph(raw) -> graphs.GraphSpec:
    if isinstance(raw, graphs.GraphSpec):
        return raw
    text = str(raw)
    name, _, arg = text.partition(":")
    try:
        if name == "cycle":
            return graphs.cycle(int(arg))
        if name == "torus":
            m, d = arg.split(",")
            return graphs.torus(int(m), int(d))
        if name == "lattice":
            return graphs.lattice(int(arg))
        if name == "hypercube":
            return graphs.hypercube(int(arg))
        if name == "complete":
            return graphs.complete(int(arg))
        if name == "custom":
            return graphs.load_adjacency(arg)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad graph spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown graph family {name!r}")


def _build_spec(cfg: dict) -> martingale.MartingaleSpec:
    ctrl_cfg = cfg["controller"]
    if isinstance(ctrl_cfg, str):
        ctrl_cfg = {"kind": ctrl_cfg}
    n = int(cfg["n"])
    if ctrl_cfg.get("kind") == "time-switched" and "stages" not in ctrl_cfg:
        controller = martingale.standard_suite(n)["time-switched"]
    else:
        controller = martingale.controller_from_config(ctrl_cfg)
    if cfg.get("schedule") is not None:
        schedule = martingale.VarianceSchedule(np.asarray(cfg["schedule"], dtype=np.float64))
    else:
        schedule = martingale.VarianceSchedule.constant(float(cfg["v"]), n)
    dim = int(cfg["dim"])
    x0 = cfg.get("x0", 0)
    if isinstance(x0, (int, float)) and x0 == 0:
        x0 = np.zeros(dim)
    return martingale.MartingaleSpec(
        L=float(cfg["L"]), schedule=schedule, controller=controller, x0=x0, dim=dim
    )


def _log_run(command: str, resolved: dict, seed) -> None:
    safe = {k: v for k, v in resolved.items() if not isinstance(v, (np.ndarray,))}
    print(f"master-seed: {seed}", file=sys.stderr)
    print(
        f"resolved-config: {json.dumps({'command': command, **safe}, sort_keys=True, default=str)}",
        file=sys.stderr,
    )


def _open_out(cfg: dict):
    out = cfg.get("out")
    if out is None:
        return None
    if os.path.exists(out) and not cfg.get("force"):
        raise ConfigError(f"output file {out!r} exists; pass --force to overwrite")
    return out


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommand handlers


_SIM_SCHEMA = {
    "controller": ("fixed-axis", None),
    "dim": (2, int),
    "n": (16, int),
    "L": (1.0, float),
    "v": (1.0, float),
    "schedule": (None, None),
    "x0": (0, None),
    "seed": (None, int),
    "out": (None, str),
    "format": ("csv", str),
    "force": (False, bool),
}


def _path_csv(path: martingale.PathSample, provenance: dict) -> str:
    lines = [f"# provenance: {json.dumps(provenance, sort_keys=True)}"]
    lines.append("step," + ",".join(f"c{i}" for i in range(path.dim)))
    for k, point in enumerate(path.points):
        lines.append(f"{k}," + ",".join(repr(float(c)) for c in point))
    return "\n".join(lines) + "\n"


def _path_jsonl(path: martingale.PathSample, provenance: dict) -> str:
    lines = [json.dumps({"provenance": provenance}, sort_keys=True)]
    for k, point in enumerate(path.points):
        lines.append(json.dumps({"step": k, "point": [float(c) for c in point]}))
    return "\n".join(lines) + "\n"


def _run_simulate(cfg: dict) -> int:
    with _validation():
        spec = _build_spec(cfg)
        seed = cfg["seed"] if cfg["seed"] is not None else _default_seed()
        if cfg["format"] not in ("csv", "jsonl"):
            raise ConfigError(f"unknown format {cfg['format']!r}")
        out = _open_out(cfg)
    _log_run("simulate", cfg, seed)
    path = martingale.simulate_path(spec, int(cfg["n"]), seed)
    provenance = {"seed": seed, "n": path.n, "controller": cfg["controller"], "method": "simulate"}
    text = _path_csv(path, provenance) if cfg["format"] == "csv" else _path_jsonl(path, provenance)
    _emit(text, out)
    return 0


_COUPLE_SCHEMA = dict(_SIM_SCHEMA)
_COUPLE_SCHEMA["couple-seed"] = (None, int)


def _run_couple(cfg: dict) -> int:
    with _validation():
        spec = _build_spec(cfg)
        seed = cfg["seed"] if cfg["seed"] is not None else _default_seed()
        couple_seed = cfg["couple-seed"] if cfg["couple-seed"] is not None else seed + 1
        out = _open_out(cfg)
    _log_run("couple", cfg, seed)
    source = martingale.simulate_path(spec, int(cfg["n"]), seed)
    pair = coupling.couple_path(source, couple_seed)
    report = {
        "n": source.n,
        "dim": source.dim,
        "source_seed": seed,
        "couple_seed": couple_seed,
        "max_norm_deviation": pair.max_norm_deviation(),
        "max_increment_deviation": pair.max_increment_deviation(),
        "tolerance": coupling.NORM_TOL,
        "pass": pair.max_norm_deviation() <= coupling.NORM_TOL
        and pair.max_increment_deviation() <= coupling.NORM_TOL,
    }
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", out)
    return 0


_CERTIFY_SCHEMA = {
    "L": (1.0, float),
    "lambda": (1.0, float),
    "n": (100, int),
    "R": (1.0, float),
    "x0-norm": (0.0, float),
    "c": (1.0, float),
    "k0-override": (None, int),
    "full": (False, bool),
    "out": (None, str),
    "force": (False, bool),
}


def _run_certify(cfg: dict) -> int:
    with _validation():
        params = bounds.BoundParams(
            L=cfg["L"],
            lam=cfg["lambda"],
            n=cfg["n"],
            R=cfg["R"],
            x0_norm=cfg["x0-norm"],
            c_universal=cfg["c"],
            k0_override=cfg["k0-override"],
        )
        out = _open_out(cfg)
    _log_run("certify", cfg, None)
    cert = bounds.build_certificate(params)
    _emit(json.dumps(cert.to_dict(full_sequences=cfg["full"]), indent=2, sort_keys=True) + "\n", out)
    return 0


_ESTIMATE_SCHEMA = {
    "process": ("srw1d", str),
    "graph": (None, None),
    "mode": ("graph", str),
    "start": (None, None),
    "dim": (2, int),
    "n": (100, int),
    "L": (1.0, float),
    "v": (1.0, float),
    "R": (None, float),
    "epsilon": (None, float),
    "replicas": (10000, int),
    "seed": (None, int),
    "ci": (0.99, float),
    "workers": (1, int),
    "bound-c": (None, float),
    "out": (None, str),
    "format": ("csv", str),
    "force": (False, bool),
}

_CONTROLLER_PROCESSES = {
    "fixed-axis",
    "tangential",
    "radial-inward",
    "radial-outward",
    "time-switched",
}


def _build_process(cfg: dict):
    name = cfg["process"]
    n = int(cfg["n"])
    if name == "srw1d":
        return martingale.MartingaleSpec.unit(martingale.FixedAxis(0), n, dim=1, L=cfg["L"])
    if name in _CONTROLLER_PROCESSES:
        controller = martingale.standard_suite(n)[name]
        spec = martingale.MartingaleSpec(
            L=cfg["L"],
            schedule=martingale.VarianceSchedule.constant(cfg["v"], n),
            controller=controller,
            x0=np.zeros(int(cfg["dim"])),
            dim=int(cfg["dim"]),
        )
        return spec
    if name == "graph":
        if cfg["graph"] is None:
            raise ConfigError("graph process needs --graph")
        graph = _parse_graph(cfg["graph"])
        start = _vertex(cfg["start"]) if cfg["start"] is not None else None
        return estimator.GraphWalkProcess(graph=graph, start=start, mode=cfg["mode"])
    raise ConfigError(f"unknown process {name!r}")


def _run_estimate(cfg: dict) -> int:
    with _validation():
        process = _build_process(cfg)
        seed = cfg["seed"] if cfg["seed"] is not None else _default_seed()
        if cfg["format"] not in ("csv", "jsonl"):
            raise ConfigError(f"unknown format {cfg['format']!r}")
        req = estimator.EstimateRequest(
            process=process,
            n=int(cfg["n"]),
            replicas=int(cfg["replicas"]),
            master_seed=int(seed),
            R=cfg["R"],
            epsilon=cfg["epsilon"],
            ci_level=float(cfg["ci"]),
            workers=int(cfg["workers"]),
        )
        out = _open_out(cfg)
    _log_run("estimate", cfg, seed)
    est = estimator.estimate_smallball(req)
    if isinstance(process, martingale.MartingaleSpec):
        if cfg["process"] == "srw1d" and req.n <= estimator.DP_LIMIT_1D:
            est = est.with_exact(estimator.exact_lattice_smallball(1, req.n, req.radius))
        if cfg["bound-c"] is not None:
            try:
                params = bounds.BoundParams(
                    L=process.L,
                    lam=1.0,
                    n=req.n,
                    R=req.radius,
                    x0_norm=float(np.linalg.norm(process.x0)),
                    c_universal=cfg["bound-c"],
                )
                est = est.with_bound(bounds.largeball_bound(params))
            except SmallballError as exc:
                print(f"note: bound not attached ({exc.code}: {exc})", file=sys.stderr)
    if cfg["epsilon"]:
        ratio = est.p_hat / float(cfg["epsilon"])
    elif req.radius > 0:
        ratio = est.p_hat * math.sqrt(req.n) / req.radius
    else:
        ratio = None
    record = estimator.record_from_estimate(
        est,
        n=req.n,
        R=req.radius,
        seed=seed,
        epsilon=cfg["epsilon"],
        t=req.n if isinstance(process, estimator.GraphWalkProcess) else None,
        ratio=ratio,
    )
    provenance = {"seed": seed, "replicas": req.replicas, "method": est.method, "ci": req.ci_level}
    if cfg["format"] == "csv":
        _emit(estimator.records_to_csv([record], provenance), out)
    else:
        _emit(estimator.records_to_jsonl([record]), out)
    if est.exact is not None:
        print(f"exact-dp: {est.exact!r}", file=sys.stderr)
    return 0


_SCALING_SCHEMA = {
    "graph": ("lattice:2", None),
    "mode": ("graph", str),
    "start": (None, None),
    "epsilons": ("0.1,0.2,0.4", None),
    "multipliers": ("1,4,16", None),
    "replicas": (10000, int),
    "t-cap": (None, int),
    "seed": (None, int),
    "ci": (0.99, float),
    "workers": (1, int),
    "out": (None, str),
    "format": ("csv", str),
    "force": (False, bool),
}


def _run_scaling(cfg: dict) -> int:
    with _validation():
        graph = _parse_graph(cfg["graph"])
        start = _vertex(cfg["start"]) if cfg["start"] is not None else None
        process = estimator.GraphWalkProcess(graph=graph, start=start, mode=cfg["mode"])
        seed = cfg["seed"] if cfg["seed"] is not None else _default_seed()
        epsilons = _floats(cfg["epsilons"])
        multipliers = _floats(cfg["multipliers"])
        if cfg["format"] not in ("csv", "jsonl"):
            raise ConfigError(f"unknown format {cfg['format']!r}")
        out = _open_out(cfg)
    _log_run("scaling", cfg, seed)
    study = estimator.scaling_study(
        process,
        epsilons,
        multipliers,
        int(cfg["replicas"]),
        int(seed),
        ci_level=float(cfg["ci"]),
        workers=int(cfg["workers"]),
        t_cap=cfg["t-cap"],
    )
    provenance = {"seed": seed, "replicas": cfg["replicas"], "method": "scaling", "ci": cfg["ci"]}
    if cfg["format"] == "csv":
        _emit(estimator.records_to_csv(study.rows, provenance), out)
    else:
        _emit(estimator.records_to_jsonl(study.rows), out)
    print(f"c_hat: {study.c_hat!r}")
    return 0


_WALK_SCHEMA = {
    "graph": ("cycle:8", None),
    "start": (None, None),
    "t": (4, int),
    "seed": (None, int),
    "out": (None, str),
    "force": (False, bool),
}


def _run_walk(cfg: dict) -> int:
    with _validation():
        graph = _parse_graph(cfg["graph"])
        start = _vertex(cfg["start"]) if cfg["start"] is not None else graph.origin
        seed = cfg["seed"] if cfg["seed"] is not None else _default_seed()
        out = _open_out(cfg)
    _log_run("walk", cfg, seed)
    walk = graphs.random_walk(graph, start, int(cfg["t"]), seed)
    report = {
        "graph": graph.label(),
        "start": list(start) if isinstance(start, tuple) else start,
        "t": walk.t,
        "seed": seed,
        "vertices": [list(v) if isinstance(v, tuple) else v for v in walk.vertices],
    }
    if graph.family == "lattice":
        emb = graphs.lattice_embedding(graph.d)
        report["embedding"] = {
            "kind": "lattice-identity",
            "lipschitz": graphs.lipschitz_constant(emb, graph, walk.t),
            "harmonic_deviation_at_start": emb.harmonic_deviation(start),
        }
    else:
        emb = graphs.spectral_embedding(graph)
        if isinstance(emb, graphs.DegenerateSpectralGap):
            report["embedding"] = {"kind": "degenerate", "lambda2": emb.lambda2}
        else:
            one_step = emb.one_step_values()
            report["embedding"] = {
                "kind": "spectral",
                "lambda2": emb.lambda2,
                "eigenspace_dim": emb.dim,
                "horizon": emb.horizon,
                "eigen_residual": emb.eigen_residual(),
                "one_step_identity_max_dev": float(np.max(np.abs(one_step - 1.0))),
                "martingale_residual": graphs.martingale_identity_residual(emb, 0),
                "lipschitz_at_horizon": graphs.lipschitz_constant(emb, graph, emb.horizon),
            }
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


_COMMANDS = {
    "simulate": (_SIM_SCHEMA, _run_simulate),
    "couple": (_COUPLE_SCHEMA, _run_couple),
    "certify": (_CERTIFY_SCHEMA, _run_certify),
    "estimate": (_ESTIMATE_SCHEMA, _run_estimate),
    "scaling": (_SCALING_SCHEMA, _run_scaling),
    "walk": (_WALK_SCHEMA, _run_walk),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="smallball", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (schema, _handler) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        for key, (default, cast) in schema.items():
            flag = "--" + key
            if key == "force" or key == "full":
                p.add_argument(flag, action="store_true", default=None)
            elif cast is int:
                p.add_argument(flag, type=int, default=None)
            elif cast is float:
                p.add_argument(flag, type=float, default=None)
            else:
                p.add_argument(flag, default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error[config-invalid]: {exc}", file=sys.stderr)
        return 1

    schema, handler = _COMMANDS[args.command]
    try:
        cfg = _merge_config(schema, args)
    except ConfigError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1

    try:
        return handler(cfg)
    except ConfigError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except SmallballError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
