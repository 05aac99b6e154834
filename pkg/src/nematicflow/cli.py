"""Command line: run, resume, inspect, validate, basis-cache."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import ConfigError, load_config


def _cmd_run(args) -> int:
    from .runner import run
    if args.t_end is not None:
        cfg = load_config_override(args.config, t_end=args.t_end)
    else:
        cfg = load_config(args.config)
    res = run(cfg, args.output)
    _summary(res)
    return res.exit_code


def load_config_override(path, **changes):
    from .config import parse_config
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    raw.update(changes)
    return parse_config(raw)


def _cmd_resume(args) -> int:
    from .runner import resume
    res = resume(args.checkpoint, args.output, args.t_end)
    _summary(res)
    return res.exit_code


def _summary(res):
    r = res.report
    print(f"status: {r['status']}  steps: {r['steps']}  t: {r['t_final']:.6g}")
    if r["failure"]:
        print(f"failure: {r['failure'].get('message')}")
    print(f"max mass drift: {r['residuals'].get('mass_drift', 0.0):.3e}  "
          f"max |energy residual|: {r['residuals'].get('energy_residual', 0.0):.3e}")
    print(f"density floor check: {'ok' if r['density_floor_check']['ok'] else 'FAILED'}")
    print(f"artifacts in {res.output_dir}")


def _cmd_inspect(args) -> int:
    from .storage import read_snapshot
    snap = read_snapshot(args.snapshot, validate=not args.no_validate)
    st = snap.state
    info = {
        "kind": snap.kind,
        "config_hash": snap.config_hash,
        "code_version": snap.code_version,
        "t": st.t,
        "step_index": st.step_index,
        "grid": st.grid.descriptor(),
        "rho": {"min": float(st.rho.values.min()), "max": float(st.rho.values.max())},
        "u_max": float(np.max(st.u.magnitude())),
        "director_unit_defect": st.d.unit_defect(),
        "galerkin_coefficients": 0 if st.coeffs is None else len(st.coeffs),
    }
    print(json.dumps(info, indent=2))
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"config ok  hash={cfg.config_hash}")
    for w in cfg.metadata["warnings"]:
        print(f"warning: {w}")
    if "domain_note" in cfg.metadata:
        print(f"note: {cfg.metadata['domain_note']}")
    if args.show:
        print(cfg.to_json())
    return 0


def _cmd_basis_cache(args) -> int:
    from .lame import basis_key, cached_eigenbasis
    cfg = load_config(args.config)
    cache = args.cache_dir or cfg.basis_cache
    if cache is None:
        print("no cache directory: pass --cache-dir or set basis_cache in the config",
              file=sys.stderr)
        return 1
    basis = cached_eigenbasis(cfg.params, cfg.grid, cfg.bc, cfg.step.m, cache)
    print(f"{basis.count} modes ({'analytic' if basis.analytic else 'numeric'}) "
          f"cached as {basis_key(basis.header())}.basis in {cache}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nematicflow", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides config and environment)")
    r.add_argument("--t-end", type=float)
    r.set_defaults(func=_cmd_run)

    r = sub.add_parser("resume", help="continue from a checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("-o", "--output")
    r.add_argument("--t-end", type=float, help="new final time")
    r.set_defaults(func=_cmd_resume)

    r = sub.add_parser("inspect", help="summarise a snapshot or checkpoint")
    r.add_argument("snapshot")
    r.add_argument("--no-validate", action="store_true")
    r.set_defaults(func=_cmd_inspect)

    r = sub.add_parser("validate", help="check a configuration without running it")
    r.add_argument("config")
    r.add_argument("--show", action="store_true", help="print the config with defaults filled")
    r.set_defaults(func=_cmd_validate)

    r = sub.add_parser("basis-cache", help="precompute the Galerkin eigenbasis")
    r.add_argument("config")
    r.add_argument("--cache-dir")
    r.set_defaults(func=_cmd_basis_cache)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
