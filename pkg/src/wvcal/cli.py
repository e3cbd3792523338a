"""``wvcal`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    DataError,
    SensorDataset,
    get_schema,
    load_schema,
    read_imu_binary,
    read_table,
    write_table,
)
from .estimator import FitOptions, NumericalError, gmwm_fit
from .grammar import LatentModel, ModelError, parse_model
from .implied import implied_wv
from .plotting import PlotSeries, PlotSpec, render_svg, write_plot
from .selection import auto_rank, rank_models
from .simulate import SimSpec, simulate
from .sumstats import avar, compare_wvar, hvar, wvar, wvar_robust

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

GLOBALS = {"seed": 0, "freq": 1.0, "robust": False, "eff": 0.6, "json": False, "threads": 1}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def load_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k.replace("-", "_")] = v.strip('"').strip("'")
    return out


def _globals(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    S = argparse.SUPPRESS
    g.add_argument("--seed", type=int, default=S, help="master seed (default 0)")
    g.add_argument("--freq", type=float, default=S, help="sampling frequency in Hz (default 1)")
    g.add_argument("--robust", action="store_true", default=S, help="use the robust wavelet variance")
    g.add_argument("--eff", type=float, default=S, help="robust efficiency in (0.5, 1] (default 0.6)")
    g.add_argument("--json", action="store_true", default=S, help="JSON output and JSON errors on stderr")
    g.add_argument("--threads", type=int, default=S, help="worker threads for bootstrap loops (default 1)")
    g.add_argument("--config", default=S, help="key = value defaults file; flags win")


def _input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", "-i", default="-", help="CSV/TSV file or '-' for stdin (default)")
    p.add_argument("--channel", "-c", default=None, help="channel label such as gyro:Y, header name, or 0-based index")
    p.add_argument("--delimiter", default=None, help="column delimiter (detected when omitted)")
    p.add_argument("--gyro-cols", default=None, help="1-based gyro columns, e.g. 1:3")
    p.add_argument("--accel-cols", default=None, help="1-based accel columns, e.g. 4:6")
    p.add_argument("--imu-type", default=None, help="read a binary log with this registry schema")
    p.add_argument("--schema", default=None, help="read a binary log with a JSON schema file")


def _apply_config(sp: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    for action in sp._actions:
        if action.dest in cfg and action.dest not in GLOBALS and action.dest != "help":
            v = cfg[action.dest]
            # string defaults go through the option's type; flags need a real bool
            sp.set_defaults(**{action.dest: _bool(v) if action.nargs == 0 else v})


def build_parser(cfg: dict[str, str] | None = None) -> argparse.ArgumentParser:
    p = _Parser(prog="wvcal", description="Wavelet-variance calibration of inertial sensor noise.")
    p.add_argument("--version", action="version", version=f"wvcal {__version__}")
    _globals(p)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help):
        sp = sub.add_parser(name, help=help, description=help)
        _globals(sp)
        made.append(sp)
        return sp

    made: list[argparse.ArgumentParser] = []

    sp = cmd("import", "read a binary log or table and write it as CSV")
    _input_args(sp)
    sp.add_argument("--output", "-o", default="-")

    for name, help in (("wvar", "wavelet variance with confidence intervals"), ("compare", "classical against robust wavelet variance")):
        sp = cmd(name, help)
        _input_args(sp)
        sp.add_argument("--levels", type=int, default=None)
        sp.add_argument("--transform", choices=("MODWT", "DWT", "modwt", "dwt"), default="MODWT")
        sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--output", "-o", default="-")
        sp.add_argument("--plot", default=None, help="write <PLOT>.svg and <PLOT>.csv")

    sp = cmd("avar", "Allan variance")
    _input_args(sp)
    sp.add_argument("--variant", choices=("traditional", "overlapping", "modified"), default="traditional")
    sp.add_argument("--m", default=None, help="comma-separated cluster lengths in samples")
    sp.add_argument("--output", "-o", default="-")

    sp = cmd("hvar", "Hadamard variance")
    _input_args(sp)
    sp.add_argument("--overlapping", action="store_true")
    sp.add_argument("--m", default=None, help="comma-separated cluster lengths in samples")
    sp.add_argument("--output", "-o", default="-")

    sp = cmd("fit", "fit a latent model by wavelet moments")
    _input_args(sp)
    sp.add_argument("--model", "-m", required=True)
    _fit_args(sp)
    sp.add_argument("--table", action="store_true", help="print a parameter table instead of JSON")
    sp.add_argument("--plot", default=None)
    sp.add_argument("--decomp", action="store_true", help="plot the per-process decomposition")

    sp = cmd("rank", "rank candidate models by WIC")
    _input_args(sp)
    sp.add_argument("--model", "-m", action="append", required=True, help="candidate model (repeat, or separate with ';')")
    sp.add_argument("--method", choices=("bootstrap", "fast"), default="bootstrap")
    _fit_args(sp)

    sp = cmd("auto", "rank every sub-model of a full model, per channel")
    _input_args(sp)
    sp.add_argument("--model", "-m", required=True)
    sp.add_argument("--method", choices=("bootstrap", "fast"), default="fast")
    sp.add_argument("--cap", type=int, default=64)
    _fit_args(sp)
    sp.add_argument("--plot", default=None)

    sp = cmd("simulate", "simulate a latent model")
    sp.add_argument("--model", "-m", required=True)
    sp.add_argument("-T", "--length", dest="T", type=int, required=True)
    sp.add_argument("--output", "-o", default="-")

    sp = cmd("plot", "re-render an SVG from a plot CSV")
    sp.add_argument("csv")
    sp.add_argument("--kind", choices=("wv", "wv_compare", "fit_overlay", "fit_decomposition", "auto_grid"), default="wv")
    sp.add_argument("--title", default="")
    sp.add_argument("--no-ci", action="store_true")
    sp.add_argument("--output", "-o", default=None)
    for sp in made:
        _apply_config(sp, cfg or {})
    return p


def _fit_args(sp):
    sp.add_argument("--output", "-o", default="-")
    sp.add_argument("--levels", type=int, default=None)
    sp.add_argument("--G", type=int, default=1000, help="random starting draws")
    sp.add_argument("--H", type=int, default=100, help="bootstrap replicates")


# -- io helpers --------------------------------------------------------------------------------


def _dataset(a) -> SensorDataset:
    if a.imu_type or a.schema:
        if a.input == "-":
            raise UsageError("binary input needs --input PATH")
        schema = load_schema(a.schema) if a.schema else get_schema(a.imu_type)
        return read_imu_binary(a.input, schema, a.freq)
    src = sys.stdin if a.input == "-" else a.input
    return read_table(src, a.delimiter, None, a.freq, a.gyro_cols, a.accel_cols)


def _signal(a) -> tuple[np.ndarray, str]:
    ds = _dataset(a)
    if a.channel is None:
        if len(ds.channels) != 1:
            raise UsageError(f"choose a channel with --channel ({', '.join(ds.labels)})")
        ch = ds.channels[0]
    else:
        ch = ds.channel(a.channel)
    return ch.samples, ch.label


def _emit(a, text: str) -> None:
    if a.output in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(a.output).write_text(text if text.endswith("\n") else text + "\n")


def _dumps(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True)


# -- commands ------------------------------------------------------------------------------------


def _wv(a, x):
    if a.robust:
        return wvar_robust(x, a.levels, a.eff, a.transform, a.alpha, a.freq)
    return wvar(x, a.levels, a.transform, a.alpha, a.freq)


def _series(wv, name, panel=""):
    return PlotSeries(name, wv.time_scales, wv.estimates, "empirical", wv.ci_lo, wv.ci_hi, panel)


def do_import(a):
    ds = _dataset(a)
    cols = ([("time", ds.time)] if ds.time is not None else []) + [(c.label, c.samples) for c in ds.channels]
    if a.output == "-":
        write_table(sys.stdout, cols, f"freq={ds.freq!r}")
    else:
        write_table(a.output, cols, f"freq={ds.freq!r}")
    if a.json:
        sys.stderr.write(_dumps({"kind": "dataset", "n": len(ds), "freq": ds.freq, "channels": ds.labels, "source": ds.source}) + "\n")


def do_wvar(a):
    x, label = _signal(a)
    wv = _wv(a, x)
    _emit(a, wv.to_json() if a.json else wv.to_csv())
    if a.plot:
        write_plot(a.plot, [_series(wv, label)], PlotSpec("wv", label))


def do_compare(a):
    x, label = _signal(a)
    classical = wvar(x, a.levels, a.transform, a.alpha, a.freq)
    robust = wvar_robust(x, a.levels, a.eff, a.transform, a.alpha, a.freq)
    rep = compare_wvar(classical, robust, labels=("classical", "robust"))
    if a.json:
        _emit(a, _dumps(rep.to_dict()))
    else:
        lines = ["scale,classical,robust,ratio,overlap"]
        for s, c, r, q, o in zip(classical.time_scales, classical.estimates, robust.estimates, rep.ratio, rep.overlap):
            lines.append(f"{s!r},{c!r},{r!r},{q!r},{int(o)}")
        lines.append(f"# verdict: {rep.verdict}")
        _emit(a, "\n".join(lines))
    if a.plot:
        write_plot(a.plot, [_series(classical, "classical"), _series(robust, f"robust (eff={a.eff:g})")], PlotSpec("wv_compare", label))


def _ms(text):
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad cluster list {text!r}") from None


def do_avar(a):
    x, _ = _signal(a)
    res = avar(x, _ms(a.m), a.variant, a.freq)
    _emit(a, _dumps(res.to_dict()) if a.json else res.to_csv())


def do_hvar(a):
    x, _ = _signal(a)
    res = hvar(x, _ms(a.m), a.overlapping, a.freq)
    _emit(a, _dumps(res.to_dict()) if a.json else res.to_csv())


def _opts(a) -> FitOptions:
    return FitOptions(robust=a.robust, efficiency=a.eff, G=a.G, H=a.H, seed=a.seed, levels=a.levels, threads=a.threads)


def do_fit(a):
    model = parse_model(a.model, a.freq)
    x, label = _signal(a)
    res = gmwm_fit(x, model, _opts(a))
    _emit(a, res.summary() if a.table else res.to_json())
    if a.plot:
        series = [_series(res.wv, "empirical"), PlotSeries("implied", res.wv.time_scales, res.implied, "implied")]
        kind = "fit_overlay"
        if a.decomp:
            kind = "fit_decomposition"
            iw = implied_wv(res.model, res.levels)
            series += [PlotSeries(lab, iw.scales, row, "component") for lab, row in zip(iw.labels, iw.decomposition)]
        write_plot(a.plot, series, PlotSpec(kind, f"{label}: {res.model.render()}" if len(res.model.blocks) < 4 else label))


def _candidates(texts, freq) -> list[LatentModel]:
    out = []
    for t in texts:
        out.extend(parse_model(s, freq) for s in t.split(";") if s.strip())
    return out


def do_rank(a):
    cands = _candidates(a.model, a.freq)
    x, _ = _signal(a)
    table = rank_models(x, cands, _opts(a), a.method)
    _emit(a, table.to_json() if a.json else table.to_csv())


def do_auto(a):
    full = parse_model(a.model, a.freq)
    ds = _dataset(a)
    chans = [ds.channel(a.channel)] if a.channel else list(ds.channels)
    results, series = [], []
    for ch in chans:
        opts = _opts(a)
        table = auto_rank(ch.samples, full, opts, a.method, a.cap)
        results.append((ch.label, table))
        if a.plot:
            best = parse_model(table.best.model, a.freq)
            wv = wvar_robust(ch.samples, a.levels, a.eff, freq=a.freq) if a.robust else wvar(ch.samples, a.levels, freq=a.freq)
            series.append(_series(wv, "empirical", ch.label))
            iw = implied_wv(best, wv.levels)
            series.append(PlotSeries(table.best.model if len(table.best.model) < 40 else "best model", iw.scales, iw.values, "implied", panel=ch.label))
    if a.json:
        _emit(a, _dumps({"kind": "auto", "channels": {lab: t.to_dict() for lab, t in results}}))
    else:
        lines = []
        for i, (lab, t) in enumerate(results):
            body = t.to_csv().splitlines()
            if i == 0:
                lines.append("channel," + body[0])
            lines.extend(f"{lab},{row}" for row in body[1:])
        _emit(a, "\n".join(lines))
    if a.plot:
        write_plot(a.plot, series, PlotSpec("auto_grid"))


def do_simulate(a):
    model = parse_model(a.model, a.freq)
    if not model.complete:
        raise UsageError("simulate needs every parameter value in the model string")
    x = simulate(SimSpec(model, a.T, a.seed))
    comment = f"model: {model.render()}; seed: {a.seed}"
    if a.output == "-":
        write_table(sys.stdout, [("x", x)], comment)
    else:
        write_table(a.output, [("x", x)], comment)


def do_plot(a):
    try:
        text = Path(a.csv).read_text()
    except OSError as e:
        raise DataError(str(e)) from None
    svg = render_svg(text, PlotSpec(a.kind, a.title, not a.no_ci))
    out = a.output or str(Path(a.csv).with_suffix(".svg"))
    Path(out).write_text(svg)


COMMANDS = {
    "import": do_import,
    "wvar": do_wvar,
    "compare": do_compare,
    "avar": do_avar,
    "hvar": do_hvar,
    "fit": do_fit,
    "rank": do_rank,
    "auto": do_auto,
    "simulate": do_simulate,
    "plot": do_plot,
}


def _fail(code: int, err: BaseException, as_json: bool) -> int:
    if as_json:
        sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err), "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"wvcal: error: {err}\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        cfg = load_config(known.config) if known.config else {}
        a = build_parser(cfg).parse_args(argv)
        if a.command is None:
            raise UsageError("missing subcommand; see --help")
        for k, d in GLOBALS.items():
            if not hasattr(a, k):
                v = cfg.get(k, d)
                setattr(a, k, _bool(v) if isinstance(d, bool) else type(d)(v))
        as_json = a.json
        if not a.freq > 0:
            raise UsageError("--freq must be positive")
        if a.threads < 1:
            raise UsageError("--threads must be >= 1")
        COMMANDS[a.command](a)
        return EXIT_OK
    except UsageError as e:
        return _fail(EXIT_USAGE, e, as_json)
    except ModelError as e:
        return _fail(EXIT_USAGE, e, as_json)
    except (DataError, OSError) as e:
        return _fail(EXIT_DATA, e, as_json)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as e:
        return _fail(EXIT_NUMERIC, e, as_json)
    except ValueError as e:
        # remaining ValueErrors come from input validation (lengths, levels, ranges)
        return _fail(EXIT_DATA, e, as_json)


if __name__ == "__main__":
    sys.exit(main())
