"""Command line front end: ``gpalign {generate,fit,eval,sample}``.

Exit codes: 0 success, 2 bad input or unwritable output, 3 numerical
failure during a fit (best-so-far outputs are still written).
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from gpalign import baselines, kernels, model, optimizer, synth_eval, warps
from gpalign.errors import InvalidArgumentError

log = logging.getLogger("gpalign")

FMT = "%.17g"
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


class CLIError(Exception):
    """Bad input or unusable path; reported with exit code 2."""


# ---------------------------------------------------------------- file I/O

def write_csv(path, array, header):
    array = np.asarray(array, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        np.savetxt(fh, array, fmt=FMT, delimiter=",")


def read_csv(path, header=True):
    path = Path(path)
    if not path.is_file():
        raise CLIError(f"missing file {path}")
    try:
        a = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, dtype=float)
    except ValueError as exc:
        raise CLIError(f"cannot parse {path}: {exc}") from None
    if not np.all(np.isfinite(a)):
        raise CLIError(f"{path} contains non-finite values")
    return a


def _prepare_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CLIError(f"cannot write to {path}: {exc}") from None
    return path


def write_bundle(data, path, meta_extra=None):
    """Write a dataset bundle directory."""
    path = _prepare_dir(path)
    meta = {"J": data.J, "N": data.N, "D": data.D,
            "x_min": float(data.X[0]), "x_max": float(data.X[-1])}
    meta.update(meta_extra or {})
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    header = [f"d{d}" for d in range(data.D)]
    for j in range(data.J):
        write_csv(path / f"seq_{j}.csv", data.Y[j], header)
    if data.true_warps is not None:
        write_csv(path / "true_warps.csv", data.true_warps, None)
    if data.groups is not None:
        with open(path / "groups.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{int(g)}\n" for g in data.groups)


def read_bundle(path):
    """Load a bundle written by :func:`write_bundle`, checking it against ``meta.json``."""
    path = Path(path)
    if not (path / "meta.json").is_file():
        raise CLIError(f"{path} is not a dataset bundle (no meta.json)")
    try:
        meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
        J, N, D = int(meta["J"]), int(meta["N"]), int(meta["D"])
        lo, hi = float(meta.get("x_min", -1.0)), float(meta.get("x_max", 1.0))
    except (ValueError, KeyError, TypeError) as exc:
        raise CLIError(f"bad meta.json: {exc}") from None
    Y = np.empty((J, N, D))
    for j in range(J):
        a = read_csv(path / f"seq_{j}.csv")
        if a.shape != (N, D):
            raise CLIError(f"seq_{j}.csv is {a.shape}, meta says {(N, D)}")
        Y[j] = a
    true_warps = groups = None
    if (path / "true_warps.csv").is_file():
        true_warps = read_csv(path / "true_warps.csv", header=False)
        if true_warps.shape != (J, N):
            raise CLIError(f"true_warps.csv is {true_warps.shape}, expected {(J, N)}")
    if (path / "groups.csv").is_file():
        g = read_csv(path / "groups.csv", header=False)
        if g.shape != (J, 1) or np.any(g != np.round(g)):
            raise CLIError("groups.csv must hold one integer label per sequence")
        groups = g[:, 0].astype(int)
    try:
        return model.Dataset(X=np.linspace(lo, hi, N), Y=Y, true_warps=true_warps, groups=groups)
    except InvalidArgumentError as exc:
        raise CLIError(str(exc)) from None


def write_svg(path, x, curves, title):
    """Minimal line plot of ``curves`` (rows) against ``x``."""
    w, h, pad = 480, 360, 30
    curves = np.atleast_2d(curves)
    lo, hi = float(curves.min()), float(curves.max())
    if hi <= lo:
        hi = lo + 1.0
    sx = lambda v: pad + (v - x[0]) / (x[-1] - x[0]) * (w - 2 * pad)
    sy = lambda v: h - pad - (v - lo) / (hi - lo) * (h - 2 * pad)
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<text x="{pad}" y="18" font-size="14">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" height="{h - 2 * pad}" '
             'fill="none" stroke="#888"/>']
    for i, row in enumerate(curves):
        hue = (i * 67) % 360
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, row))
        lines.append(f'<polyline fill="none" stroke="hsl({hue},70%,40%)" points="{pts}"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def _kernel(family):
    if family is None:
        return kernels.KernelSpec()
    return kernels.KernelSpec(family=family)


def _fit_config(args):
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CLIError(f"cannot read config {args.config}: {exc}") from None
        known = {f.name for f in fields(optimizer.FitConfig)}
        unknown = set(cfg) - known
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        for key in ("data_kernel", "lvm_kernel", "warp_kernel"):
            if key in cfg:
                cfg[key] = kernels.KernelSpec.from_dict(cfg[key])
        if "frozen" in cfg:
            cfg["frozen"] = tuple(cfg["frozen"])
        if cfg.get("stage_schedule") is not None:
            cfg["stage_schedule"] = [(a, b, frozenset(f)) for a, b, f in cfg["stage_schedule"]]
    for name in ("learning_rate", "iterations", "adam_beta1", "adam_beta2", "adam_eps", "seed",
                 "inducing_count", "latent_dim", "lvm_weight", "lr_final_fraction"):
        value = getattr(args, name)
        if value is not None:
            cfg[name] = value
    if args.data_kernel is not None:
        cfg["data_kernel"] = _kernel(args.data_kernel)
    if args.lvm_kernel is not None:
        cfg["lvm_kernel"] = _kernel(args.lvm_kernel)
    if args.optimize_omega:
        cfg["optimize_omega"] = True
    if args.two_stage is not None:
        cfg["stage_schedule"] = optimizer.two_stage_schedule(args.two_stage)
    return optimizer.FitConfig(**cfg)


def _config_dict(config):
    out = {}
    for f in fields(config):
        v = getattr(config, f.name)
        if isinstance(v, kernels.KernelSpec):
            v = v.to_dict()
        elif f.name == "stage_schedule" and v is not None:
            v = [[a, b, sorted(names)] for a, b, names in v]
        elif f.name == "frozen":
            v = list(v)
        out[f.name] = v
    return out


def cmd_generate(args):
    cfg = synth_eval.GenConfig(J=args.J, N=args.N, D=args.D, groups=args.groups,
                               warp_roughness=args.warp_roughness, noise_sd=args.noise_sd,
                               seed=args.seed, latent_dim=args.latent_dim,
                               curve_lengthscale=args.curve_lengthscale)
    data = synth_eval.generate(cfg)
    write_bundle(data, args.out, {"generator": asdict(cfg)})
    return EXIT_OK


def _save_state(out, state):
    arrays = dict(S=state.S, Z=state.Z, log_theta=state.log_theta, log_beta=state.log_beta,
                  log_psi=state.log_psi, log_gamma=np.array(state.log_gamma))
    for name in ("U", "logits", "shifts", "log_omega"):
        value = getattr(state.warp, name)
        if value is not None:
            arrays["warp_" + name] = value
    np.savez(out / "state.npz", **arrays)


def cmd_fit(args):
    data = read_bundle(args.bundle)
    out = _prepare_dir(args.out)
    meta = {"method": args.method, "bundle": str(args.bundle), "J": data.J, "N": data.N, "D": data.D,
            "workers": model._n_workers()}
    code = EXIT_OK
    if args.method == "dtw":
        res = baselines.fit_dtw(data)
        G, S, Z = res.G, res.S, None
        meta.update(reference=res.reference, wall_time=None, failed=False)
    else:
        config = _fit_config(args)
        res = baselines.fit_variant(data, args.method, config)
        G, S, Z = res.G, res.state.S, res.state.Z
        st = res.state
        meta.update(config=_config_dict(config), wall_time=res.wall_time, failed=res.failed,
                    message=res.message, seed=config.seed,
                    hyperparameters={
                        "theta": [st.theta(j).to_dict() for j in range(data.J)],
                        "beta": np.exp(st.log_beta).tolist(),
                        "psi": st.psi().to_dict(),
                        "gamma": float(np.exp(st.log_gamma)),
                        "omega": [st.warp.omega_j(j).to_dict() for j in range(data.J)],
                        "alignment": st.alignment,
                        "warp_family": st.warp.family,
                        "lvm_weight": st.lvm_weight,
                    })
        write_csv(out / "loss.csv", np.column_stack([np.arange(len(res.loss_trace)), res.loss_trace]),
                  ["iteration", "loss"])
        _save_state(out, st)
        if res.failed:
            log.error("numerical failure: %s", res.message)
            code = EXIT_NUMERICAL
    header = [f"d{d}" for d in range(data.D)]
    for j in range(data.J):
        write_csv(out / f"aligned_{j}.csv", S[j], header)
        write_csv(out / f"warp_{j}.csv", np.column_stack([data.X, G[j]]), ["x", "g"])
    if Z is not None:
        write_csv(out / "latent.csv", Z, [f"z{q}" for q in range(Z.shape[1])])
    if args.svg:
        write_svg(out / "warps.svg", data.X, G, "warps")
        if data.D == 1:
            write_svg(out / "aligned.svg", data.X, S[:, :, 0], "aligned sequences")
    (out / "fit_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return code


def load_results(path, J):
    """Aligned sequences, warps and (if present) latent points from a results directory."""
    path = Path(path)
    if not path.is_dir():
        raise CLIError(f"missing results directory {path}")
    S = np.stack([read_csv(path / f"aligned_{j}.csv") for j in range(J)])
    G = np.stack([read_csv(path / f"warp_{j}.csv")[:, 1] for j in range(J)])
    Z = read_csv(path / "latent.csv") if (path / "latent.csv").is_file() else None
    return S, G, Z


def evaluate(results, bundle):
    """Metrics dict for a results directory against a bundle; absent metrics are ``None``."""
    data = read_bundle(bundle)
    S, G, Z = load_results(results, data.J)
    if S.shape != data.Y.shape or G.shape != (data.J, data.N):
        raise CLIError("results do not match the bundle's shape")
    report = {"warping_error": None, "alignment_error": None, "purity": None}
    if data.true_warps is not None:
        report["warping_error"] = synth_eval.warping_error(G, data.true_warps)
    if data.groups is not None:
        try:
            report["alignment_error"] = synth_eval.alignment_error(S, data.groups)
        except InvalidArgumentError:
            pass
        if Z is not None:
            k = len(np.unique(data.groups))
            report["purity"] = synth_eval.cluster_purity(Z, data.groups, k)
    return report


def cmd_eval(args):
    print(json.dumps(evaluate(args.results, args.bundle), indent=2, sort_keys=True))
    return EXIT_OK


def load_state(results):
    """Rebuild the :class:`model.ModelState` saved by ``fit``."""
    results = Path(results)
    try:
        meta = json.loads((results / "fit_meta.json").read_text(encoding="utf-8"))
        arrays = np.load(results / "state.npz")
    except (OSError, ValueError) as exc:
        raise CLIError(f"{results} holds no fitted model state: {exc}") from None
    cfg = meta["config"]
    hyp = meta["hyperparameters"]
    warp = warps.WarpState(family=hyp["warp_family"],
                           omega=kernels.KernelSpec.from_dict(cfg["warp_kernel"]),
                           **{k: arrays["warp_" + k] for k in ("U", "logits", "shifts", "log_omega")
                              if "warp_" + k in arrays})
    return model.ModelState(
        S=arrays["S"], warp=warp, Z=arrays["Z"], log_theta=arrays["log_theta"],
        log_beta=arrays["log_beta"], log_psi=arrays["log_psi"], log_gamma=float(arrays["log_gamma"]),
        data_kernel=kernels.KernelSpec.from_dict(cfg["data_kernel"]),
        lvm_kernel=kernels.KernelSpec.from_dict(cfg["lvm_kernel"]),
        lvm_weight=hyp["lvm_weight"], alignment=hyp["alignment"])


def cmd_sample(args):
    state = load_state(args.results)
    mean, var = model.sample_manifold(state, np.asarray(args.z, dtype=float))
    D = mean.shape[1]
    table = np.column_stack([mean, var[:, 0]])
    header = [f"d{d}" for d in range(D)] + ["variance"]
    if args.out:
        parent = Path(args.out).parent
        _prepare_dir(parent)
        write_csv(args.out, table, header)
    else:
        sys.stdout.write(",".join(header) + "\n")
        np.savetxt(sys.stdout, table, fmt=FMT, delimiter=",")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="gpalign", description="Joint GP alignment of multiple sequences.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset bundle")
    g.add_argument("out")
    g.add_argument("--J", type=int, default=5)
    g.add_argument("--N", type=int, default=50)
    g.add_argument("--D", type=int, default=1)
    g.add_argument("--groups", type=int, default=1)
    g.add_argument("--warp-roughness", type=float, default=1.0)
    g.add_argument("--noise-sd", type=float, default=0.05)
    g.add_argument("--latent-dim", type=int, default=2)
    g.add_argument("--curve-lengthscale", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="align a bundle; writes a results directory")
    f.add_argument("bundle")
    f.add_argument("out")
    f.add_argument("--method", choices=baselines.METHODS, default="ours")
    f.add_argument("--config", help="JSON file of FitConfig keys (flags take precedence)")
    f.add_argument("--learning-rate", dest="learning_rate", type=float)
    f.add_argument("--iterations", type=int)
    f.add_argument("--adam-beta1", dest="adam_beta1", type=float)
    f.add_argument("--adam-beta2", dest="adam_beta2", type=float)
    f.add_argument("--adam-eps", dest="adam_eps", type=float)
    f.add_argument("--seed", type=int)
    f.add_argument("--inducing-count", dest="inducing_count", type=int)
    f.add_argument("--latent-dim", dest="latent_dim", type=int)
    f.add_argument("--lvm-weight", dest="lvm_weight", type=float)
    f.add_argument("--lr-final-fraction", dest="lr_final_fraction", type=float,
                   help="cosine-anneal the learning rate to this fraction by the last iteration")
    fams = [k for k in kernels.FAMILIES if k != kernels.SUM]
    f.add_argument("--data-kernel", dest="data_kernel", choices=fams)
    f.add_argument("--lvm-kernel", dest="lvm_kernel", choices=fams)
    f.add_argument("--optimize-omega", dest="optimize_omega", action="store_true")
    f.add_argument("--two-stage", dest="two_stage", type=int, metavar="SPLIT",
                   help="freeze latents and warps for the first SPLIT iterations")
    f.add_argument("--svg", action="store_true", help="also write warps.svg / aligned.svg")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="print metrics of a results directory as JSON")
    e.add_argument("results")
    e.add_argument("bundle")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", help="predict a sequence at a new latent location")
    s.add_argument("results")
    s.add_argument("--z", type=float, nargs="+", required=True)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_sample)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, InvalidArgumentError, OSError) as exc:
        print(f"gpalign: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
