"""Command line interface: ``coupled-parabolic <subcommand> [options]``.

Exit status is 0 on success, 2 for unreadable or invalid scenarios and 1 when
``verify`` finds a contradiction between prediction, simulation and spectrum.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pydantic

from . import evolution as ev
from . import potential_field as pf
from . import scenarios as sc
from . import spectral_analysis as sa
from .discretization import DENSE_CAP

log = logging.getLogger("coupled_parabolic")


class ConfigError(Exception):
    pass


def _plain(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2)


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj) + "\n")


def load_config(args) -> sc.ScenarioConfig:
    try:
        if args.example:
            cfg = sc.example_config(args.example)
        else:
            cfg = sc.ScenarioConfig.model_validate(json.loads(Path(args.config).read_text()))
        return cfg.with_overrides(dt=args.dt, horizon=args.horizon, cells=args.cells,
                                  scheme=args.scheme, seed=args.seed)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except pydantic.ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from None


def load_scenario(args) -> ev.Scenario:
    cfg = load_config(args)
    try:
        return sc.build_scenario(cfg)
    except ValueError as exc:
        raise ConfigError(f"invalid scenario {cfg.name!r}: {exc}") from None


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_classify(args) -> int:
    s = load_scenario(args)
    report = pf.classify(s.potential, numeric_p=tuple(args.numeric_p or ()))
    text = dumps(report.to_dict())
    print(text)
    if (out := _out_dir(args)) is not None:
        (out / "classification.json").write_text(text + "\n")
    return 0


def cmd_predict(args) -> int:
    s = load_scenario(args)
    pred = pf.predict(pf.classify(s.potential), s.diffusion.identical_equations)
    text = dumps(pred.to_dict())
    print(text)
    if (out := _out_dir(args)) is not None:
        (out / "prediction.json").write_text(text + "\n")
    return 0


def cmd_simulate(args) -> int:
    s = load_scenario(args)
    out = _out_dir(args) or Path(".")
    trace = ev.simulate(s)
    det = ev.detect(trace, s.thresholds)
    trace.to_csv(out / "trace.csv")
    _write_json(out / "detection.json", {"scenario": s.name, **det.to_dict()})
    print(f"{s.name}: {det.verdict.value} -> {out / 'trace.csv'}, {out / 'detection.json'}")
    return 0


def cmd_spectrum(args) -> int:
    s = load_scenario(args)
    L = s.block()
    if L.size > DENSE_CAP:
        raise ConfigError(f"operator size {L.size} exceeds {DENSE_CAP}; use fewer --cells")
    report = sa.spectrum_block(L)
    behaviour, info = ev.spectral_behaviour(L, report)
    out = _out_dir(args) or Path(".")
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im"])
        for z in report.eigenvalues:
            w.writerow([repr(float(z.real)), repr(float(z.imag))])
    _write_json(out / "spectrum.json",
                {"scenario": s.name, "behaviour": behaviour, **info, **report.to_dict()})
    print(f"{s.name}: {behaviour}, spectral bound {report.spectral_bound:.6g}")
    return 0


def cmd_verify(args) -> int:
    s = load_scenario(args)
    result = ev.verify(s)
    text = dumps(result.to_dict())
    if (out := _out_dir(args)) is not None:
        (out / "verify.json").write_text(text + "\n")
    print(text)
    if result.contradiction:
        log.error("contradiction in %s: %s", s.name, result.rows)
        return 1
    return 0


def cmd_examples(args) -> int:
    width = max(map(len, sc.EXAMPLES))
    for name in sc.EXAMPLES:
        print(f"{name:<{width}}  {sc.EXAMPLE_DESCRIPTIONS.get(name, '')}")
    return 0


COMMANDS = {
    "classify": (cmd_classify, "classify the potential cell by cell"),
    "predict": (cmd_predict, "predict convergence from the classification"),
    "simulate": (cmd_simulate, "integrate in time; write trace.csv and detection.json"),
    "spectrum": (cmd_spectrum, "dense spectrum; write eigenvalues.csv and spectrum.json"),
    "verify": (cmd_verify, "compare prediction, simulation and spectrum"),
    "examples": (cmd_examples, "list built-in scenarios"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coupled-parabolic",
        description="Classify and simulate coupled parabolic systems du/dt = div(A grad u) + V u.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name == "examples":
            continue
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--example", help="built-in scenario name")
        src.add_argument("--config", help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dt", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--cells", type=int, help="cells per axis")
        p.add_argument("--scheme", choices=ev.SCHEMES)
        p.add_argument("--seed", type=int, help="seed for random initial data")
        if name == "classify":
            p.add_argument("--numeric-p", type=float, nargs="*",
                           help="extra exponents for the sampled lp test")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
