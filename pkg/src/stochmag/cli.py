"""Command-line front end: ``stochmag <subcommand> [options]``.

Every subcommand writes CSV files into ``--out``; with ``--plot`` a PNG
figure is rendered next to them. Exit codes: 0 success, 2 configuration or
parse error, 3 numerical failure, 4 resource budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import studies
from .config import RunConfig, load_config
from .errors import BudgetError, ConfigError, NumericalError, StochmagError
from .mesh import Region, write_triangle_mesh

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, cfg: RunConfig, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {cfg.one_line()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def d_tag(d: float) -> str:
    return f"{d:.6g}"


# ---------------------------------------------------------------- subcommands

def cmd_eigens(cfg: RunConfig, out: Path) -> list[Path]:
    mesh = studies.build_mesh(cfg)
    written, results = [], []
    for d in studies.correlation_lengths(cfg, mesh):
        st = studies.eigen_study(cfg, mesh, d)
        results.append(st)
        tag = d_tag(d)
        written.append(write_csv(out / f"eigenvalues_d{tag}.csv", cfg, ["index", "lambda", "cumulative_psi"],
                                 [(i + 1, lam, psi) for i, (lam, psi) in enumerate(zip(st.eigenvalues, st.psi))]))
        for k in range(st.M or 0):
            written.append(write_csv(out / f"eigenfunction_d{tag}_mode{k + 1:03d}.csv", cfg,
                                     ["element_id", "value"], zip(st.core_elements, st.eigenvectors[:, k])))
    if cfg.run.plot:
        from . import plotting
        written += plotting.plot_eigens(out, mesh, results)
    for st in results:
        if st.M is None:
            raise NumericalError(
                f"d={st.d:g}: {len(st.eigenvalues)} eigenpairs capture only {st.psi[-1]:.4f} of the "
                f"variance, threshold {cfg.kle.threshold:g} needs a larger kle.m_request")
    return written


def cmd_memory(cfg: RunConfig, out: Path) -> list[Path]:
    rows = studies.memory_study(cfg)
    header = ["N", "eta", "n_min", "epsilon", "d", "bytes_hmatrix", "bytes_dense", "ratio", "max_rank", "delta"]
    written = [write_csv(out / "memory.csv", cfg, header,
                         [(r.N, r.eta, r.n_min, r.epsilon, r.d, r.bytes_hmatrix, r.bytes_dense, r.ratio,
                           r.max_rank, str(r.delta)) for r in rows])]
    if cfg.run.plot:
        from . import plotting
        written += plotting.plot_memory(out, rows)
    return written


def cmd_uq(cfg: RunConfig, out: Path) -> list[Path]:
    mesh = studies.build_mesh(cfg)
    rows = [studies.uq_study(cfg, mesh, d) for d in studies.correlation_lengths(cfg, mesh)]
    header = ["d", "sigma", "M", "p", "N_c", "rejected", "L_mu", "L_std"]
    written = [write_csv(out / "uq.csv", cfg, header,
                         [(r.d, r.sigma, r.M, r.p, r.N_c, r.rejected, r.L_mu, r.L_std) for r in rows])]
    if cfg.run.plot:
        from . import plotting
        written += plotting.plot_uq(out, rows)
    return written


def cmd_sample(cfg: RunConfig, out: Path, xi=None) -> list[Path]:
    mesh = studies.build_mesh(cfg)
    model, s = studies.sample_study(cfg, mesh, xi)
    cent = mesh.centroids()[model.core_elements]
    flags = s.values <= 0
    written = [write_csv(out / "sample.csv", cfg, ["element_id", "x", "y", "nu", "invalid"],
                         [(e, x, y, v, f) for e, (x, y), v, f in zip(model.core_elements, cent, s.values, flags)])]
    if not s.valid:
        print(f"warning: {int(flags.sum())} core elements have non-positive reluctivity", file=sys.stderr)
    if cfg.run.plot:
        from . import plotting
        written += plotting.plot_sample(out, mesh, model.core_elements, s.values)
    return written


def cmd_mesh_info(cfg: RunConfig, out: Path) -> list[Path]:
    mesh = studies.build_mesh(cfg)
    rows = [(r.name.lower(), len(mesh.region_elements(r)), mesh.region_area(r)) for r in Region]
    rows.append(("total", mesh.n_elements, float(mesh.areas().sum())))
    written = [write_csv(out / "mesh_info.csv", cfg, ["region", "elements", "area"], rows)]
    written += list(write_triangle_mesh(mesh, out / "mesh"))
    if cfg.run.plot:
        from . import plotting
        written += plotting.plot_mesh(out, mesh)
    return written


COMMANDS = {
    "eigens": (cmd_eigens, "eigenvalues and eigenfunctions for each correlation length"),
    "memory": (cmd_memory, "H-matrix memory and accuracy per mesh size and correlation length"),
    "uq": (cmd_uq, "inductance mean and standard deviation by stochastic collocation"),
    "sample": (cmd_sample, "one realisation of the core reluctivity"),
    "mesh-info": (cmd_mesh_info, "region statistics and a Triangle export of the mesh"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style configuration file")
    common.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, help="RNG seed (overrides run.seed)")
    common.add_argument("--threads", type=int, help="worker threads (overrides run.threads)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration key; repeatable")
    common.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSVs")
    common.add_argument("--dump-config", action="store_true", help="write the resolved config to OUT/config.ini")

    p = argparse.ArgumentParser(prog="stochmag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name == "sample":
            sp.add_argument("--xi", help="comma-separated coordinates (length M); default: seeded draw")
    return p


def resolve_config(args) -> RunConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    if args.plot:
        overrides.append("run.plot=true")
    if getattr(args, "xi", None) is not None:
        overrides.append(f"sample.xi={args.xi}")
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.dump_config:
            (out / "config.ini").write_text(cfg.to_ini())
        COMMANDS[args.command][0](cfg, out)
    except ConfigError as exc:
        print(f"stochmag: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"stochmag: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalError as exc:
        print(f"stochmag: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StochmagError as exc:
        print(f"stochmag: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
