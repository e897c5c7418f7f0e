"""Command-line interface: ``bbpn <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import dataset, experiments as ex

log = logging.getLogger("bbpn")

EXIT_FAILED_RUN = 3

# subcommand -> bundled config used when --config is not given
DEFAULT_CONFIGS = {
    "riemann": "riemann",
    "ode": "ode_euler",
    "eigen-qr": "qr",
    "eigen-tensor": "tensor",
    "pde-kse": "kse",
    "calibrate": "ode_euler_calibration",
}


def _common(p):
    p.add_argument("--config", help="TOML config file or bundled config name")
    p.add_argument("--seed", type=int, help="seed for optimizer restarts (and seeded problems)")
    p.add_argument("--out-dir", default="bbpn_out", help="directory for outputs (default: %(default)s)")
    p.add_argument("--learn-alpha", action="store_true", help="estimate the convergence order")
    p.add_argument("--stationary", action="store_true", help="stationary error model (alpha = 0)")
    p.add_argument("--kernel", choices=["matern12", "matern32", "gaussian"])
    p.add_argument("--basis-v", type=int, metavar="N", help="number of polynomial basis terms")
    p.add_argument("--restarts", type=int, help="optimizer restarts")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bbpn",
        description="Probabilistic extrapolation of numerical methods to h = 0.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a config")
    _common(p)

    p = sub.add_parser("extrapolate", help="fit a user dataset (CSV: h, t_1..t_p, value)")
    p.add_argument("csv", help="input dataset")
    p.add_argument("--alpha", type=float, default=1.0, help="convergence order (default: 1)")
    p.add_argument("--name", default="extrapolate", help="prefix for output files")
    _common(p)

    for name, text in [
        ("riemann", "Riemann-sum demonstration"),
        ("ode", "Lotka-Volterra with Euler or AB2 data"),
        ("eigen-qr", "QR-iteration eigenvalues"),
        ("eigen-tensor", "tensor eigenvalue by the shifted power method"),
        ("pde-kse", "Kuramoto-Sivashinsky with ETDRK4 data"),
        ("calibrate", "repetition study of the squared surprise"),
    ]:
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "ode":
            p.add_argument("--solver", choices=["euler", "ab2"], help="data-generating integrator")
        if name == "calibrate":
            p.add_argument("--repetitions", type=int, help="number of repetitions")

    sub.add_parser("list-configs", help="list bundled configs")
    return parser


def _config(args):
    name = args.config or DEFAULT_CONFIGS.get(args.command)
    if name is None:
        raise SystemExit("bbpn run: --config is required")
    cfg = ex.load_config(name)
    if getattr(args, "solver", None):
        order = {"euler": 1.0, "ab2": 2.0}[args.solver]
        params = {**cfg.problem_params, "solver": args.solver}
        cfg = replace(cfg, name=f"ode_{args.solver}", problem_params=params,
                      fit=replace(cfg.fit, alpha=order))
    return _apply_flags(cfg, args)


def _apply_flags(cfg, args):
    over = dict(seed=args.seed, kernel=args.kernel, basis_v=args.basis_v,
                fit_restarts=args.restarts)
    if getattr(args, "repetitions", None):
        over["repetitions"] = args.repetitions
    if args.no_plots:
        over["plots"] = False
    if args.learn_alpha:
        over.update(fit_learn_alpha=True, fit_stationary=False)
    if args.stationary:
        over.update(fit_stationary=True, fit_learn_alpha=False)
    return cfg.with_overrides(**over)


def _summary(result):
    st = result.final
    if st is None or st.posterior is None:
        return
    for k, t in enumerate(result.query):
        label = ",".join(f"{x:g}" for x in t) or "-"
        line = f"t=({label})  mean={st.posterior.mean[k]:.10g}  sd={st.posterior.sd[k]:.3g}"
        if st.truth is not None:
            line += f"  truth={st.truth[k]:.10g}"
        print(line)
    print(f"alpha_ml={st.alpha_ml:.6g}")
    if st.report is not None:
        r = st.report
        print(f"W={r.W:.6g}  S^2={r.S2:.6g}  band=[{r.band_lower:.4g}, {r.band_upper:.4g}]"
              f"  inside={r.inside_band}")


def _finish(result, out_dir, failed=None):
    paths = ex.emit_outputs(result, out_dir)
    _summary(result)
    for p in paths:
        print(f"wrote {p}")
    if failed is not None:
        print(f"error: {failed}", file=sys.stderr)
        return EXIT_FAILED_RUN
    return 0


def cmd_run(args):
    cfg = _config(args)
    try:
        result = ex.run_experiment(cfg)
    except ex.ExperimentError as exc:
        return _finish(exc.partial, args.out_dir, failed=exc)
    return _finish(result, args.out_dir)


def cmd_extrapolate(args):
    data = dataset.read_csv(args.csv)
    if args.config:
        cfg = ex.load_config(args.config)
    else:
        cfg = ex.ExperimentConfig(name=args.name)
        cfg = cfg.with_overrides(fit_alpha=args.alpha)
    cfg = _apply_flags(cfg, args)
    try:
        result = ex.run_dataset(data, cfg)
    except ex.ExperimentError as exc:
        return _finish(exc.partial, args.out_dir, failed=exc)
    return _finish(result, args.out_dir)


def cmd_calibrate(args):
    cfg = _config(args)
    try:
        rows, _ = ex.calibrate(cfg)
    except ex.ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED_RUN
    for r in rows:
        print(f"repetition {r['repetition']:3d}  seed {r['seed']:4d}  S^2={r['S2']:.5g}"
              f"  inside={r['inside']}")
    inside = sum(r["inside"] for r in rows)
    print(f"{inside}/{len(rows)} inside the central {100 * cfg.central_mass:g}% band")
    for p in ex.emit_calibration(rows, cfg, args.out_dir):
        print(f"wrote {p}")
    return 0


def cmd_list(args):
    for name in ex.bundled_configs():
        print(name)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"extrapolate": cmd_extrapolate, "calibrate": cmd_calibrate,
               "list-configs": cmd_list}.get(args.command, cmd_run)
    try:
        return handler(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
