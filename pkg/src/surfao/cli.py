"""Command-line front end.

Every subcommand reads and writes files in the formats of :mod:`surfao.io`.
Flagged ids go to standard output, diagnostics to standard error.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 numerical
error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import FormatError, InvalidInputError, NumericalError, SurfaoError
from .functional import AnalysisConfig, ao_fields, fom_from_fields, fom_from_scores
from .preprocess import gradient_augment, impute_dataset
from .projection import DirectionConfig
from .svg import fom_svg
from .trilinear import fit_trilinear, residuals

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
IDS_SUFFIX = ".ids"


def _log(msg):
    print(msg, file=sys.stderr)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _quantile(text):
    v = float(text)
    if not 0.5 < v < 1:
        raise argparse.ArgumentTypeError(f"quantile must lie in (0.5, 1), got {text}")
    return v


def _trim_fraction(text):
    v = float(text)
    if not 0.5 < v <= 1:
        raise argparse.ArgumentTypeError(f"h must lie in (0.5, 1], got {text}")
    return v


# -- tensors with id sidecars ---------------------------------------------


def _ids_path(path):
    return Path(str(path) + IDS_SUFFIX)


def load_tensor(path):
    """Read an FDT1 tensor, picking up ``<path>.ids`` when present."""
    sidecar = _ids_path(path)
    ids = None
    if sidecar.exists():
        ids = [line for line in sidecar.read_text().splitlines() if line]
    return io.read_tensor(path, ids)


def save_tensor(dataset, path):
    """Write an FDT1 tensor; non-default ids go to ``<path>.ids``."""
    io.write_tensor(dataset, path)
    sidecar = _ids_path(path)
    default = [str(i + 1) for i in range(dataset.values.shape[0])]
    if list(dataset.ids) != default:
        sidecar.write_text("".join(f"{i}\n" for i in dataset.ids))
    elif sidecar.exists():
        sidecar.unlink()


def _is_tensor(path):
    with open(path, "rb") as fh:
        return fh.read(4) == io.MAGIC


def _analysis_config(args):
    dirs = DirectionConfig(args.directions, args.seed, axis_fallback=args.axis_fallback)
    return AnalysisConfig(dirs, args.clamp, args.quantile)


def _weights(args, shape):
    return None if args.weights is None else io.read_weights(args.weights, shape)


def _fields_for(ds, args):
    if ds.has_missing:
        raise InvalidInputError("input has missing cells; run `surfao impute` first")
    return ao_fields(ds.values, _analysis_config(args), n_jobs=args.threads)


# -- subcommands ----------------------------------------------------------


def cmd_convert(args):
    src = [Path(s) for s in args.inputs]
    if len(src) == 1 and src[0].is_dir():
        d = src[0]
        if args.pattern is not None and args.pattern.lower().endswith(".csv"):
            ds = io.read_csv_dir(d, args.pattern)
        elif args.pattern is None and any(d.glob("*.csv")):
            ds = io.read_csv_dir(d)
        else:
            ds = io.read_frame_dir(d, args.pattern)
    else:
        grids, ids = [], []
        for f in src:
            if f.suffix.lower() == ".csv":
                g = io.read_csv_matrix(f)[..., None]
            else:
                g = io.read_image(f)
            if grids and g.shape != grids[0].shape:
                raise FormatError(f"shape {g.shape} differs from {grids[0].shape}", path=f)
            grids.append(g)
            ids.append(f.stem)
        ds = io.Dataset(np.stack(grids), ids)
    save_tensor(ds, args.out)
    n, J, K, p = ds.shape
    _log(f"wrote {args.out}: n={n} J={J} K={K} p={p}")
    return EXIT_OK


def cmd_impute(args):
    ds = load_tensor(args.input)
    filled = impute_dataset(ds.values, args.axis)
    _log(f"imputed {int(np.isnan(ds.values[..., 0]).sum())} cells along {args.axis}")
    save_tensor(io.Dataset(filled, ds.ids), args.out)
    return EXIT_OK


def cmd_gradient(args):
    ds = load_tensor(args.input)
    save_tensor(io.Dataset(gradient_augment(ds.values), ds.ids), args.out)
    return EXIT_OK


def cmd_parafac(args):
    ds = load_tensor(args.input)
    model = fit_trilinear(ds.values, args.F, args.h, args.seed, args.restarts, args.max_iter, args.tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_csv_matrix(model.A, out / "A.csv")
    io.write_csv_matrix(model.B, out / "B.csv")
    io.write_csv_matrix(model.C, out / "C.csv")
    save_tensor(io.Dataset(residuals(ds.values, model), ds.ids), out / "residuals.fdt")
    summary = {
        "n_components": model.n_components,
        "h": model.h,
        "subset": [ds.ids[i] for i in model.subset],
        "iterations": model.iterations,
        "converged": model.converged,
        "loss": model.loss,
        "restart": model.restart,
        "restart_losses": model.restart_losses,
    }
    (out / "fit.json").write_text(json.dumps(summary, indent=2) + "\n")
    _log(f"trimmed loss {model.loss:.6g} after {model.iterations} iterations (restart {model.restart})")
    return EXIT_OK


def cmd_detect(args):
    ds = load_tensor(args.input)
    fields = _fields_for(ds, args)
    result = fom_from_fields(fields, _weights(args, ds.shape[1:3]), args.quantile, ds.ids)
    io.write_result_table(result, args.out)
    if args.fields:
        save_tensor(io.Dataset(fields, ds.ids), args.fields)
    for i in result.flagged_ids:
        print(i)
    _log(f"{len(result.flagged_ids)} of {len(result)} observations flagged")
    return EXIT_OK


def cmd_fom(args):
    if _is_tensor(args.input):
        ds = load_tensor(args.input)
        fields = _fields_for(ds, args)
        result = fom_from_fields(fields, _weights(args, ds.shape[1:3]), args.quantile, ds.ids)
    else:
        table = io.read_result_table(args.input)
        result = fom_from_scores(table["fao"], table["vao"], args.quantile, table["id"])
    Path(args.out).write_text(fom_svg(result, args.title, args.highlight))
    fx, fy = result.cutoff.polyline()
    io.write_csv_matrix(np.column_stack([fx, fy]) if fx.size else np.empty((0, 2)), args.out + ".cutoff.csv")
    for i in result.flagged_ids:
        print(i)
    return EXIT_OK


def cmd_heatmap(args):
    ds = load_tensor(args.input)
    if args.from_fields:
        if ds.shape[3] != 1:
            raise InvalidInputError("an AO field tensor has a single channel")
        fields = ds.values[..., 0]
    else:
        fields = _fields_for(ds, args)
    lookup = {i: pos for pos, i in enumerate(ds.ids)}
    missing = [i for i in args.id if i not in lookup]
    if missing:
        raise InvalidInputError(f"unknown observation id(s): {', '.join(missing)}")
    out = Path(args.out)
    if len(args.id) == 1 and not out.is_dir():
        targets = [(args.id[0], out)]
    else:
        out.mkdir(parents=True, exist_ok=True)
        targets = [(i, out / f"{i}.{args.format}") for i in args.id]
    for i, path in targets:
        io.write_heatmap(fields[lookup[i]], path, args.format, args.cap)
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser():
    analysis = argparse.ArgumentParser(add_help=False)
    g = analysis.add_argument_group("analysis")
    g.add_argument("--seed", type=int, default=42, help="direction generator seed (default 42)")
    g.add_argument("--directions", type=_positive_int, default=None, help="directions per grid point (default 250*p)")
    g.add_argument("--quantile", type=_quantile, default=0.995, help="cutoff quantile (default 0.995)")
    g.add_argument("--clamp", type=_positive_float, default=1e6, help="ceiling for infinite AO (default 1e6)")
    g.add_argument("--weights", default=None, help="J x K CSV of grid weights (default uniform)")
    g.add_argument("--axis-fallback", action="store_true", help="use coordinate axes where directions stay degenerate")
    g.add_argument("--threads", type=_positive_int, default=None, help="worker threads (results do not depend on it)")

    parser = argparse.ArgumentParser(prog="surfao", description="Functional outlier detection for surfaces, images and video.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="build an FDT1 tensor from CSV matrices or PGM/PPM images")
    p.add_argument("inputs", nargs="+", help="a directory, or one file per observation")
    p.add_argument("--pattern", default=None, help="glob inside a directory input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("impute", help="fill missing cells by linear interpolation")
    p.add_argument("input")
    p.add_argument("--axis", choices=("k", "j"), default="k", help="interpolate along rows (k) or columns (j)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("gradient", help="append j and k derivative channels")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gradient)

    p = sub.add_parser("parafac", help="trimmed trilinear fit; writes factors and residuals")
    p.add_argument("input")
    p.add_argument("--F", type=_positive_int, required=True, help="number of components")
    p.add_argument("--h", type=_trim_fraction, default=0.75, help="fraction of observations kept (default 0.75)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--restarts", type=_positive_int, default=5)
    p.add_argument("--max-iter", type=_positive_int, default=500)
    p.add_argument("--tol", type=_positive_float, default=1e-8)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_parafac)

    p = sub.add_parser("detect", parents=[analysis], help="flag outlying observations")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="result table CSV")
    p.add_argument("--fields", default=None, help="also save the AO fields as FDT1")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fom", parents=[analysis], help="functional outlier map as SVG")
    p.add_argument("input", help="result table CSV or FDT1 tensor")
    p.add_argument("--out", required=True, help="SVG path; the cutoff polyline goes to <out>.cutoff.csv")
    p.add_argument("--title", default=None)
    p.add_argument("--highlight", action="append", default=None, metavar="ID")
    p.set_defaults(func=cmd_fom)

    p = sub.add_parser("heatmap", parents=[analysis], help="AO heatmap of selected observations")
    p.add_argument("input", help="FDT1 dataset, or AO fields with --from-fields")
    p.add_argument("--id", action="append", required=True, help="observation id (repeatable)")
    p.add_argument("--from-fields", action="store_true", help="input holds AO fields saved by detect")
    p.add_argument("--cap", type=_positive_float, default=None, help="display cap (required for pgm)")
    p.add_argument("--format", choices=("csv", "pgm"), default="csv")
    p.add_argument("--out", required=True, help="file, or directory when several ids are given")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "heatmap" and args.format == "pgm" and args.cap is None:
        parser.error("--format pgm requires --cap")
    try:
        return args.func(args)
    except NumericalError as exc:
        _log(f"surfao {args.command}: numerical error: {exc}")
        return EXIT_NUMERICAL
    except (SurfaoError, OSError) as exc:
        _log(f"surfao {args.command}: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
