"""Command-line entry point: ``fermirot {transform,downfold,dynamics,inspect} --config FILE``.

Configuration is an INI file.  A ``[model]`` section names the Hamiltonian
(``kind = hubbard | fcidump | synthetic | operator``) and each subcommand
reads its own section.  Floats are written with 12 significant digits so
repeated runs give byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .algebra import OperatorProduct, OperatorSum, commutator, hermiticity_residual, rank_partition
from .downfold import DownfoldConfig, PoolError, rank_magnitude_matrix, run_adaptive
from .dynamics import compare_exact, heisenberg_evolve, sudden_ionization_state
from .models import FCIDumpError, HubbardSpec, hubbard_chain, load_fcidump, synthetic_integrals
from .rotations import Generator, Kind, StructuralViolation, build_generator_sum, classify, rotation_pieces
from .states import exact_heisenberg, ground_state, number_sector, spin_sector

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_STRUCTURE = 0, 1, 2, 3

logger = logging.getLogger("fermirot")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """12 significant digits; complex values only when the imaginary part survives."""
    x = complex(x)
    re = f"{x.real:.12g}"
    if abs(x.imag) < 1e-15:
        return "0" if re == "-0" else re
    return f"{re}{x.imag:+.12g}j"


def _ints(text: str) -> tuple[int, ...]:
    text = text.replace(",", " ").strip()
    try:
        return tuple(int(tok, 0) for tok in text.split())
    except ValueError as exc:
        raise ConfigError(f"expected a list of integers, got {text!r}") from exc


def _section(cfg: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if not cfg.has_section(name):
        raise ConfigError(f"missing [{name}] section")
    return cfg[name]


def _get(sec, key, conv=str, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] needs '{key}'")
        return default
    raw = sec[key]
    try:
        if conv is bool:
            return sec.getboolean(key)
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {exc}") from exc


def read_config(path: str) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc.message.splitlines()[0]}") from exc
    return cfg


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_operator_file(path: Path) -> OperatorSum:
    try:
        return OperatorSum.from_json(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read operator file: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not an operator JSON file ({exc})") from exc


def build_model(cfg: configparser.ConfigParser, base: Path, seed: int) -> OperatorSum:
    sec = _section(cfg, "model")
    kind = _get(sec, "kind")
    if kind == "hubbard":
        spec = HubbardSpec(_get(sec, "sites", int), _get(sec, "hopping", float, 1.0),
                           _get(sec, "onsite", float, 1.0), _get(sec, "boundaries", str, "open"))
        return hubbard_chain(spec)
    if kind == "fcidump":
        return load_fcidump(_resolve(base, _get(sec, "path")))[1]
    if kind == "synthetic":
        ints = synthetic_integrals(_get(sec, "orbitals", int, 4), _get(sec, "electrons", int, 2),
                                   _get(sec, "seed", int, seed), _get(sec, "parity_symmetric", bool, True))
        return ints.spinorbital_hamiltonian()
    if kind == "operator":
        return load_operator_file(_resolve(base, _get(sec, "path")))
    raise ConfigError(f"unknown model kind {kind!r}")


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", newline="") as fh:
        fh.write(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _records(x: OperatorSum) -> list[dict]:
    return [{"creators": list(p.creators), "annihilators": list(p.annihilators), "coeff": fmt(c)} for p, c in x]


def cmd_transform(cfg, base: Path, out: Path | None, seed: int) -> int:
    sec = _section(cfg, "transform")
    if "operator_file" in sec:
        o = load_operator_file(_resolve(base, sec["operator_file"]))
    else:
        o = OperatorSum.from_product(OperatorProduct(_ints(_get(sec, "creators", str, "")),
                                                     _ints(_get(sec, "annihilators", str, ""))))
    t = OperatorProduct(_ints(_get(sec, "generator_creators", str, "")),
                        _ints(_get(sec, "generator_annihilators", str, "")))
    try:
        kind = Kind(_get(sec, "kind", str, "anti_hermitian"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    g = Generator(t, kind, _get(sec, "theta", float, 0.0))
    classes = sorted({classify(p, g).value for p, _ in o}) if len(o) else ["trivial"]
    pieces = rotation_pieces(o, g, validate=True)
    result = {
        "generator": str(t),
        "kind": kind.value,
        "theta": fmt(g.theta),
        "classification": classes[0] if len(classes) == 1 else "mixed",
        "classes": classes,
        "commutator": _records(commutator(o, build_generator_sum(g))),
        "double_commutator": _records(pieces.d),
        "transformed": _records(pieces.evaluate(g.theta)),
    }
    text = _json(result)
    sys.stdout.write(text)
    _write(out, "transform.json", text)
    return EXIT_OK


def cmd_downfold(cfg, base: Path, out: Path | None, seed: int) -> int:
    h = build_model(cfg, base, seed)
    sec = _section(cfg, "downfold")
    max_ops = _get(sec, "max_operators", int, 0)
    dcfg = DownfoldConfig(
        active=_ints(_get(sec, "active")),
        external=_ints(_get(sec, "external")),
        active_dets=_ints(_get(sec, "active_dets")),
        grad_tol=_get(sec, "grad_tol", float, 1e-6),
        energy_tol=_get(sec, "energy_tol", float, 1e-9),
        max_operators=max_ops or None,
        sweep=_get(sec, "sweep", str, "none"),
        to_convergence=_get(sec, "to_convergence", bool, False),
        theta_tol=_get(sec, "theta_tol", float, 1e-10),
    )
    rep = run_adaptive(h, dcfg)
    rows = [(r.iteration, "" if r.operator is None else str(r.operator), fmt(r.theta), fmt(r.gradient),
             fmt(r.energy), "" if r.error is None else fmt(r.error)) for r in rep.records]
    _write(out, "iterations.csv", _csv(rows, ["iteration", "operator", "theta", "gradient", "energy", "error"]))
    _write(out, "hbar.json", _json(_records(rep.hbar)))
    mat = rep.rank_matrix
    _write(out, "rank_matrix.csv",
           _csv([[n] + [fmt(v) for v in row] for n, row in enumerate(mat)], ["creators\\annihilators"] + list(range(mat.shape[1]))))
    summary = {
        "operators": len(rep.sequence),
        "pool_size": len(rep.pool),
        "stop_reason": rep.stop_reason,
        "energy": fmt(rep.final_energy),
        "exact_energy": None if rep.exact_energy is None else fmt(rep.exact_energy),
        "error": None if rep.records[-1].error is None else fmt(rep.records[-1].error),
        "hbar_terms": len(rep.hbar),
    }
    text = _json(summary)
    _write(out, "summary.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_dynamics(cfg, base: Path, out: Path | None, seed: int) -> int:
    h = build_model(cfg, base, seed)
    sec = _section(cfg, "dynamics")
    n_up, n_down = _get(sec, "n_up", int), _get(sec, "n_down", int)
    orbital = _get(sec, "ionize", int)
    observable = _get(sec, "observable", int, orbital)
    total_t, steps = _get(sec, "total_time", float), _get(sec, "steps", int)
    trunc = _get(sec, "trunc", float, 0.0)
    n_orb = h.num_orbitals + h.num_orbitals % 2
    if not 0 <= orbital < n_orb or not 0 <= observable < n_orb:
        raise ConfigError(f"orbital index outside 0..{n_orb - 1}")
    _, gs = ground_state(h, spin_sector(n_orb // 2, n_up, n_down))
    psi = sudden_ionization_state(gs, orbital)
    obs = OperatorSum.from_product(OperatorProduct.number(observable))

    def progress(t, o):
        logger.info("t = %.4f  terms = %d", t, len(o))

    rep = heisenberg_evolve(obs, h, total_t, steps, psi, trunc=trunc, progress=progress)
    exact = None
    if _get(sec, "exact", bool, True):
        exact = exact_heisenberg(obs, h, psi, rep.times, n_orbitals=n_orb).real
    rows = []
    for i, t in enumerate(rep.times):
        row = [fmt(t), fmt(rep.expectations[i].real)]
        if exact is not None:
            row += [fmt(exact[i]), fmt(rep.expectations[i].real - exact[i])]
        row += [int(rep.term_counts[i]), fmt(rep.dropped_weight[i])]
        rows.append(row)
    header = ["t", "value"] + (["exact", "deviation"] if exact is not None else []) + ["terms", "dropped_weight"]
    _write(out, "timeline.csv", _csv(rows, header))
    _write(out, "rank_norms.csv", _csv([(fmt(t), fmt(k), fmt(v)) for t, k, v in rep.rank_norm_table()],
                                       ["t", "rank", "norm"]))
    summary = {"steps": steps, "total_time": fmt(total_t), "trunc": fmt(trunc),
               "final_terms": int(rep.term_counts[-1]), "dropped_weight": fmt(rep.dropped_weight[-1])}
    if exact is not None:
        mx, mean = compare_exact(rep.expectations.real, exact)
        summary.update(max_deviation=fmt(mx), mean_deviation=fmt(mean))
    text = _json(summary)
    _write(out, "summary.json", text)
    sys.stdout.write(text)
    if _get(sec, "plot", bool, False) and out is not None:
        _plot(out / "timeline.svg", rep.times, rep.expectations.real, exact)
    return EXIT_OK


def _plot(path: Path, times, values, exact) -> None:
    try:
        import matplotlib
    except ImportError:
        logger.warning("matplotlib not installed; skipping plot")
        return
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "fermirot"
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(times, values, label="Trotter")
    if exact is not None:
        ax.plot(times, exact, "--", label="exact")
    ax.set_xlabel("t")
    ax.set_ylabel("<n(t)>")
    ax.legend()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def cmd_inspect(cfg, base: Path, out: Path | None, seed: int) -> int:
    if cfg.has_section("inspect") and "file" in cfg["inspect"]:
        path = _resolve(base, cfg["inspect"]["file"])
        text = path.read_text() if path.exists() else ""
        x = load_fcidump(path)[1] if "&FCI" in text.upper()[:200] else load_operator_file(path)
    else:
        x = build_model(cfg, base, seed)
    parts = rank_partition(x)
    result = {
        "terms": len(x),
        "orbitals": x.num_orbitals,
        "ranks": [fmt(k) for k in sorted(parts)],
        "rank_blocks": sorted([list(map(int, b)) for b in {(len(p.creators), len(p.annihilators)) for p, _ in x}]),
        "hermiticity_residual": fmt(hermiticity_residual(x)),
        "rank_matrix": [[fmt(v) for v in row] for row in rank_magnitude_matrix(x)],
    }
    text = _json(result)
    sys.stdout.write(text)
    _write(out, "inspect.json", text)
    return EXIT_OK


COMMANDS = {"transform": cmd_transform, "downfold": cmd_downfold, "dynamics": cmd_dynamics, "inspect": cmd_inspect}


def _set_threads(n: int | None) -> None:
    if not n:
        return
    try:
        import numba

        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    except ImportError:
        pass
    os.environ.setdefault("OMP_NUM_THREADS", str(n))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fermirot", description="Exact fermionic rotations: transform, downfold, dynamics.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="output directory for artifacts")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _set_threads(args.threads)
    out = Path(args.out) if args.out else None
    try:
        cfg = read_config(args.config)
        return COMMANDS[args.command](cfg, Path(args.config).resolve().parent, out, args.seed)
    except StructuralViolation as exc:
        print(f"fermirot: structural violation: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except (ConfigError, PoolError, FCIDumpError, ValueError) as exc:
        print(f"fermirot: {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
