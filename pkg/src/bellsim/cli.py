"""Command line front end.

Exit codes: 0 pass, 1 a verification ran and failed, 2 unreadable input or
unknown name, 3 input that parses but violates an invariant.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import files
from .bell import Behaviour, behaviour_of, chsh_correlators, chsh_win_probability, classify, gallery
from .files import FormatError, InvariantError

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3
REPORT_SCHEMA = "bellsim.report"

COINS_CHI0 = np.array([np.sqrt(0.5), np.sqrt(0.5), 0])
COINS_CHI1 = np.array([0, np.sqrt(0.5), 1j * np.sqrt(0.5)])


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def _emit(ctx: click.Context, command: str, payload: dict, text: str):
    fmt, out = ctx.obj["format"], ctx.obj["out"]
    if fmt == "structured":
        body = json.dumps(_clean({"schema": REPORT_SCHEMA, "version": files.VERSION, "command": command,
                                  **payload}), indent=1) + "\n"
    else:
        body = text if text.endswith("\n") else text + "\n"
    if out:
        Path(out).write_text(body)
    else:
        click.echo(body, nl=False)


def _guard(fn):
    """Map library errors onto exit codes."""
    def run(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _Exit as e:
            if str(e):
                click.echo(str(e), err=True)
            sys.exit(e.code)
        except FormatError as e:
            click.echo(f"input error: {e}", err=True)
            sys.exit(EXIT_INPUT)
        except InvariantError as e:
            click.echo(f"invariant violation: {e}", err=True)
            sys.exit(EXIT_INVARIANT)
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _tol_option(f):
    return click.option("--tol", type=float, default=1e-8, show_default=True, help="acceptance threshold")(f)


@click.group()
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="write the report here instead of stdout")
@click.option("--format", "fmt", type=click.Choice(["text", "structured"]), default="text", show_default=True)
@click.pass_context
def main(ctx, out, fmt):
    """Strategies, implementations and simulation witnesses for Bell scenarios."""
    ctx.ensure_object(dict)
    ctx.obj.update(out=out, format=fmt)


# -- behaviour -------------------------------------------------------------------------

def _table_text(p: Behaviour) -> str:
    sc = p.scenario
    lines = []
    for i, xa in enumerate(sc.x_a):
        for j, xb in enumerate(sc.x_b):
            row = p.table[i, j]
            cells = "  ".join(f"P({ya}{yb})={row[k, l]:.17g}" for k, ya in enumerate(sc.y_a)
                              for l, yb in enumerate(sc.y_b))
            lines.append(f"x=({xa},{xb})  {cells}  sum={row.sum():.17g}")
    return "\n".join(lines)


def _is_chsh(p: Behaviour) -> bool:
    sc = p.scenario
    return sc.x_a == sc.x_b == ("0", "1") and len(sc.y_a) == len(sc.y_b) == 2


@main.command()
@click.argument("strategy", type=click.Path())
@click.pass_context
@_guard
def behaviour(ctx, strategy):
    """Print the behaviour table of a strategy file."""
    s = files.load_strategy(strategy)
    p = behaviour_of(s)
    payload = {"behaviour": files.behaviour_doc(p), "row_sums": p.table.sum(axis=(2, 3))}
    text = _table_text(p)
    if _is_chsh(p):
        win = chsh_win_probability(p)
        payload["chsh_win_probability"] = win
        payload["chsh_correlators"] = chsh_correlators(p)
        text += f"\nCHSH win probability: {win:.17g}"
    _emit(ctx, "behaviour", payload, text)


# -- verify ----------------------------------------------------------------------------

@main.command()
@click.argument("relation", type=click.Choice(["local", "assisted", "causal", "reducibility"]))
@click.argument("s_path", type=click.Path())
@click.argument("s_tilde_path", type=click.Path())
@click.argument("witness_path", type=click.Path())
@_tol_option
@click.pass_context
@_guard
def verify(ctx, relation, s_path, s_tilde_path, witness_path, tol):
    """Check a witness for RELATION between two strategy files."""
    from . import simulation
    from .tensor_core import ShapeError

    s, s_t = files.load_strategy(s_path), files.load_strategy(s_tilde_path)
    w = files.load_witness(witness_path)
    fn = {"local": simulation.verify_local, "assisted": simulation.verify_assisted,
          "causal": simulation.verify_causal, "reducibility": simulation.verify_reducibility}[relation]
    try:
        rep = fn(s, s_t, w, tol)
    except simulation.WitnessError as e:
        raise _Exit(EXIT_INPUT, f"input error: {e}")
    except (ShapeError, ValueError) as e:
        raise _Exit(EXIT_INVARIANT, f"invariant violation: {e}")
    text = "\n".join([f"{relation}: {'PASS' if rep.passed else 'FAIL'}",
                      f"residual: {rep.residual}", f"behaviour residual: {rep.behaviour_residual}"]
                     + ([f"reason: {rep.reason}"] if rep.reason else []))
    _emit(ctx, f"verify {relation}", {"relation": relation, "tol": tol, **rep.summary()}, text)
    if not rep.passed:
        raise _Exit(EXIT_FAIL)


# -- analyze ---------------------------------------------------------------------------

@main.group()
def analyze():
    """Extraction, decomposition, extremality and exhaustion checks."""


def _analysis_errors(fn):
    def run(*args, **kwargs):
        from .simulation import WitnessError
        try:
            return fn(*args, **kwargs)
        except WitnessError as e:
            raise _Exit(EXIT_FAIL, f"witness error: {e}")
        except (FormatError, InvariantError, _Exit):
            raise
        except ValueError as e:
            raise _Exit(EXIT_INVARIANT, f"invariant violation: {e}")
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@analyze.command("extract-state")
@click.argument("s_path", type=click.Path())
@click.argument("s_tilde_path", type=click.Path())
@click.argument("witness_path", type=click.Path(), required=False)
@_tol_option
@click.pass_context
@_guard
@_analysis_errors
def extract_state(ctx, s_path, s_tilde_path, witness_path, tol):
    """Channels carrying a purification of S onto one of S_TILDE."""
    from .analysis import extract_state_witness
    s, s_t = files.load_strategy(s_path), files.load_strategy(s_tilde_path)
    w = files.load_witness(witness_path) if witness_path else None
    res = extract_state_witness(s, s_t, w, tol)
    payload = {"passed": res.passed, "residual": res.residual, "flags": res.flags, "reason": res.reason}
    text = f"extract-state: {'PASS' if res.passed else 'FAIL'}\nresidual: {res.residual}"
    if res.flags:
        text += "\nflags: " + ", ".join(res.flags)
    if res.reason:
        text += f"\nreason: {res.reason}"
    _emit(ctx, "analyze extract-state", payload, text)
    if not res.passed:
        raise _Exit(EXIT_FAIL)


@analyze.command("extract-measurement")
@click.argument("s_path", type=click.Path())
@click.argument("s_tilde_path", type=click.Path())
@click.argument("witness_path", type=click.Path())
@_tol_option
@click.pass_context
@_guard
@_analysis_errors
def extract_measurement(ctx, s_path, s_tilde_path, witness_path, tol):
    """Channels extracting the measurements of S_TILDE from those of S."""
    from .analysis import extract_measurement_witness
    s, s_t = files.load_strategy(s_path), files.load_strategy(s_tilde_path)
    res = extract_measurement_witness(s, s_t, files.load_witness(witness_path), tol)
    payload = {"passed": res.passed, "residual": res.residual, "per_party": res.details.get("per_party")}
    text = f"extract-measurement: {'PASS' if res.passed else 'FAIL'}\nresidual: {res.residual}"
    _emit(ctx, "analyze extract-measurement", payload, text)
    if not res.passed:
        raise _Exit(EXIT_FAIL)


@analyze.command("decomposition")
@click.argument("s_path", type=click.Path())
@click.argument("decomposition_path", type=click.Path())
@_tol_option
@click.pass_context
@_guard
@_analysis_errors
def decomposition(ctx, s_path, decomposition_path, tol):
    """Is the decomposition visible from the strategy?"""
    from .analysis import visible_decompositions
    s = files.load_strategy(s_path)
    d = files.decomposition_from(files.read(decomposition_path, "bellsim.decomposition"), decomposition_path)
    rep = visible_decompositions(s, d, tol)
    payload = {"visible": rep.visible, "residual": rep.residual, "reason": rep.reason,
               "factor_residual": rep.details.get("factor_residual")}
    if rep.states is not None:
        payload["states"] = [files.encode_array(r) for r in rep.states]
    text = f"visible: {str(rep.visible).lower()}\nresidual: {rep.residual}"
    if rep.reason:
        text += f"\nreason: {rep.reason}"
    _emit(ctx, "analyze decomposition", payload, text)
    if not rep.visible:
        raise _Exit(EXIT_FAIL)


@analyze.command("extremality")
@click.argument("path", type=click.Path())
@_tol_option
@click.pass_context
@_guard
@_analysis_errors
def extremality(ctx, path, tol):
    """Necessary checks for extremality of a behaviour (or of a strategy's behaviour)."""
    from .analysis import extremality_necessary_checks
    doc = files.read(path)
    if doc["schema"] == "bellsim.strategy":
        p = behaviour_of(files.strategy_from(doc, path))
    elif doc["schema"] == "bellsim.behaviour":
        p = files.behaviour_from(doc, path)
    else:
        raise FormatError(f"{path}: expected a strategy or behaviour file")
    rep = extremality_necessary_checks(p, min(tol, 1e-9))
    text = [f"verdict: {rep.verdict}",
            f"local polytope membership: {str(rep.local_polytope_membership).lower()} "
            f"(slack {rep.local_residual:.3e})"]
    if rep.decomposition is not None:
        text.append("decomposition:")
        text += [f"  {w:.17g} x {b.table.reshape(-1).tolist()}" for w, b in rep.decomposition.terms]
    _emit(ctx, "analyze extremality", rep.summary(), "\n".join(text))


@analyze.command("exhaust")
@click.argument("s_path", type=click.Path())
@_tol_option
@click.pass_context
@_guard
@_analysis_errors
def exhaust(ctx, s_path, tol):
    """Does the environment of a rank-one projective pure-state strategy only copy inputs and outputs?"""
    from .analysis import exhausted_environment
    rep = exhausted_environment(files.load_strategy(s_path), min(tol, 1e-9))
    text = f"copy_equivalent: {str(rep.copy_equivalent).lower()}\nresidual: {rep.residual}"
    _emit(ctx, "analyze exhaust", rep.summary(), text)
    if not rep.copy_equivalent:
        raise _Exit(EXIT_FAIL)


# -- gallery ---------------------------------------------------------------------------

def gallery_artifacts(name: str) -> dict[str, dict]:
    """File name -> document for a gallery entry and its companion files."""
    from .bell import coins_general
    from .simulation import coins_causal_witness
    try:
        s = gallery(name) if name != "coins_general" else coins_general(COINS_CHI0, COINS_CHI1)
    except KeyError as e:
        raise _Exit(EXIT_INPUT, f"input error: {e.args[0]}")
    out = {f"{name}.strategy.json": files.strategy_doc(s)}
    if name == "coins_correlated":
        g = coins_general(COINS_CHI0, COINS_CHI1)
        out["coins_general.strategy.json"] = files.strategy_doc(g)
        out["coins_causal.witness.json"] = files.witness_doc(coins_causal_witness(s, g))
    return out


@main.command("gallery")
@click.argument("name")
@click.option("--out", "directory", type=click.Path(file_okay=False), default=".", show_default=True,
              help="directory for the written files")
@click.pass_context
@_guard
def gallery_cmd(ctx, name, directory):
    """Write a gallery strategy (and companion witness files) to disk."""
    docs = gallery_artifacts(name)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for fname, doc in docs.items():
        files.write(d / fname, doc)
    s = files.strategy_from(docs[f"{name}.strategy.json"], name)
    flags = classify(s)
    payload = {"name": name, "files": [str(d / f) for f in docs],
               "flags": {"pure_state": flags.pure_state, "projective": flags.projective,
                         "full_rank": flags.full_rank}}
    text = "\n".join([f"wrote {d / f}" for f in docs]
                     + [f"flags: pure_state={flags.pure_state} projective={flags.projective} "
                        f"full_rank={flags.full_rank}"])
    _emit(ctx, "gallery", payload, text)


if __name__ == "__main__":
    main()
