"""Command-line entry points for training, denoising, compression, and the
approximation/border benchmarks.

Options may come from flags or from a flat key=value config file
(``--config``); explicit flags override file values, and unknown config
keys are rejected.  All randomness is keyed by ``--seed``.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import OsdlError
from .experiments import (
    border_error_profile,
    compress_eval,
    denoise,
    gen_border_signals,
    mterm_curve,
    psnr,
    sample_patches,
)
from .dictfile import load_dictionary, read_header, save_dictionary
from .imgio import read_image, write_image
from .learning import TrainerConfig, init_dictionary, osdl_train
from .sparsedict import SeparableBase
from .wavelets import (
    cropped_dictionary,
    dwt2_cascade,
    idwt2_cascade,
    synthesis_matrix,
    wavelet_filters,
)

__all__ = ["main", "write_csv"]

IMAGE_EXTS = (".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def write_csv(path: str, header, rows) -> None:
    """CSV with '.' decimals, newline line ends, 17-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(str(h) for h in header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    cells.append(format(float(v), ".17g"))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def _list_images(directory: str) -> list[str]:
    names = sorted(n for n in os.listdir(directory)
                   if n.lower().endswith(IMAGE_EXTS))
    if not names:
        raise OsdlError(f"no images found under {directory}")
    return [os.path.join(directory, n) for n in names]


def _load_images(directory: str) -> list[np.ndarray]:
    return [read_image(p) for p in _list_images(directory)]


class _ConfigError(Exception):
    pass


# dest -> (parser-type, default); used both for argparse construction and
# for validating/merging key=value config files
_COMMON_TRAIN = {
    "k": (int, 8),
    "p": (int, 4),
    "epochs": (int, 2),
    "batch": (int, 512),
    "gamma": (float, 0.9),
    "decay_t": (float, None),
    "maintenance": (int, 10),
    "prune_coherence": (float, 0.99),
    "unused_threshold": (float, 1.0),
    "seed": (int, 0),
}


def _add_options(parser: argparse.ArgumentParser, spec: dict) -> None:
    for dest, (typ, _default) in spec.items():
        flag = "--" + dest.replace("_", "-")
        parser.add_argument(flag, dest=dest, type=typ, default=None)


def _merge_config(args: argparse.Namespace, spec: dict) -> dict:
    """hard defaults <- config file <- explicit flags."""
    merged = {dest: default for dest, (_t, default) in spec.items()}
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise _ConfigError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                key = key.strip().replace("-", "_")
                if key not in spec:
                    raise _ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                typ = spec[key][0]
                try:
                    merged[key] = typ(value.strip())
                except ValueError as exc:
                    raise _ConfigError(f"{path}:{lineno}: {exc}") from exc
    for dest in spec:
        given = getattr(args, dest, None)
        if given is not None:
            merged[dest] = given
    return merged


def _cmd_border_bench(args) -> int:
    spec = {"n": (int, 64), "count": (int, 1000), "coefs": (int, 5),
            "family": (str, "daubechies"), "order": (int, 7),
            "seed": (int, 0)}
    opt = _merge_config(args, spec)
    filt = wavelet_filters(opt["family"], opt["order"])
    signals = gen_border_signals(opt["count"], opt["n"], opt["seed"])
    periodic = synthesis_matrix(filt, opt["n"])
    cropped = cropped_dictionary(filt, opt["n"])
    err_per = border_error_profile(signals, periodic, opt["coefs"])
    err_crop = border_error_profile(signals, cropped, opt["coefs"])
    rows = [(i, err_per[i], err_crop[i]) for i in range(opt["n"])]
    write_csv(args.out, ["index", "periodic_mse", "cropped_mse"], rows)
    print(f"wrote {args.out}: border MSE ratio (cropped/periodic) = "
          f"{err_crop[[0, 1, 2, 3, -4, -3, -2, -1]].sum() / err_per[[0, 1, 2, 3, -4, -3, -2, -1]].sum():.4f}")
    return 0


def _cmd_approx(args) -> int:
    spec = {"patch": (int, 64), "counts": (str, "25,50,100"),
            "npatches": (int, 200), "family": (str, "daubechies"),
            "order": (int, 7), "seed": (int, 0)}
    opt = _merge_config(args, spec)
    counts = [int(c) for c in opt["counts"].split(",")]
    images = _load_images(args.images)
    rng = np.random.default_rng(opt["seed"])
    patches = sample_patches(images, opt["patch"], opt["npatches"], rng)
    filt = wavelet_filters(opt["family"], opt["order"])
    crop = cropped_dictionary(filt, opt["patch"])
    Ws = synthesis_matrix(filt, opt["patch"]).matrix

    def cascade(patch, m):
        C = dwt2_cascade(patch, filt)
        keep = np.argsort(-np.abs(C).ravel(), kind="stable")[:m]
        mask = np.zeros(C.size, bool)
        mask[keep] = True
        return idwt2_cascade(np.where(mask.reshape(C.shape), C, 0.0), filt)

    def separable(patch, m):
        C = Ws.T @ patch @ Ws
        keep = np.argsort(-np.abs(C).ravel(), kind="stable")[:m]
        mask = np.zeros(C.size, bool)
        mask[keep] = True
        return Ws @ np.where(mask.reshape(C.shape), C, 0.0) @ Ws.T

    methods = {"wavelet2d": cascade, "separable": separable,
               "cropped_separable": SeparableBase(crop)}
    result = mterm_curve(methods, patches, counts)
    rows = [[m] + [result.psnr_db[name][i] for name in methods]
            for i, m in enumerate(counts)]
    write_csv(args.out, ["coefficients"] + list(methods), rows)
    print(f"wrote {args.out}")
    return 0


def _cmd_train(args) -> int:
    spec = dict(_COMMON_TRAIN)
    spec.update({"patch": (int, 32), "npatches": (int, 40000),
                 "atoms": (int, 0), "family": (str, "symlet"),
                 "order": (int, 4), "resid_tol": (float, 0.0)})
    opt = _merge_config(args, spec)
    images = _load_images(args.images)
    rng = np.random.default_rng(opt["seed"])
    Y = sample_patches(images, opt["patch"], opt["npatches"], rng)
    filt = wavelet_filters(opt["family"], opt["order"])
    crop = cropped_dictionary(filt, opt["patch"])
    base = SeparableBase(crop)
    m = opt["atoms"] if opt["atoms"] > 0 else base.natoms
    config = TrainerConfig(
        atom_sparsity=opt["k"], code_sparsity=opt["p"],
        minibatch=opt["batch"], epochs=opt["epochs"], momentum=opt["gamma"],
        rate_decay_batches=opt["decay_t"],
        maintenance_period=opt["maintenance"],
        prune_coherence=opt["prune_coherence"],
        unused_threshold=opt["unused_threshold"], seed=opt["seed"],
        resid_tol=opt["resid_tol"])
    sd0 = init_dictionary(base, m, config.atom_sparsity,
                          np.random.default_rng(opt["seed"]))
    log = open(args.log, "w") if args.log else None
    try:
        sd = osdl_train(Y, base, sd0, config, progress=log)
    finally:
        if log:
            log.close()
    save_dictionary(args.out, sd, opt["patch"], opt["family"], opt["order"],
                    crop.levels)
    print(f"wrote {args.out}: {sd.natoms} atoms, k={sd.atom_sparsity}, "
          f"patch {opt['patch']}x{opt['patch']}")
    return 0


def _cmd_denoise(args) -> int:
    spec = dict(_COMMON_TRAIN)
    spec.update({"k": (int, None), "p": (int, None), "epochs": (int, 5),
                 "sigma": (float, 30.0), "patch": (int, 16),
                 "trainer": (str, "osdl"), "base": (str, "wavelet"),
                 "family": (str, "symlet"), "order": (int, 4),
                 "gain": (float, 1.15), "lam": (float, None)})
    opt = _merge_config(args, spec)
    noisy = read_image(args.input)
    sigma_unit = opt["sigma"] / 255.0
    n = opt["patch"] * opt["patch"]
    k = opt["k"] if opt["k"] else max(2, int(round(0.1 * n)))
    p = opt["p"] if opt["p"] else max(4, n // 20)
    config = TrainerConfig(
        atom_sparsity=k, code_sparsity=p,
        minibatch=opt["batch"], epochs=opt["epochs"], momentum=opt["gamma"],
        rate_decay_batches=opt["decay_t"],
        maintenance_period=opt["maintenance"],
        prune_coherence=opt["prune_coherence"],
        unused_threshold=opt["unused_threshold"], seed=opt["seed"])
    result, _sd = denoise(noisy, sigma_unit, opt["patch"],
                          trainer=opt["trainer"], base=opt["base"],
                          family=opt["family"], order=opt["order"],
                          config=config, gain=opt["gain"], lam=opt["lam"],
                          seed=opt["seed"])
    write_image(args.out, np.clip(result, 0.0, 1.0))
    msg = f"wrote {args.out}"
    if args.ref:
        ref = read_image(args.ref)
        msg += f": PSNR {psnr(ref, np.clip(result, 0.0, 1.0)):.2f} dB"
    print(msg)
    return 0


def _cmd_compress(args) -> int:
    spec = {"budgets": (str, "50,100,200"), "seed": (int, 0)}
    opt = _merge_config(args, spec)
    budgets = [int(b) for b in opt["budgets"].split(",")]
    sd, head = load_dictionary(args.dict)
    images = _load_images(args.images)
    side = head["n_side"]
    usable = [im for im in images if im.shape == (side, side)]
    if not usable:
        raise OsdlError(f"no {side}x{side} images to compress")
    table = compress_eval(sd, usable, budgets)
    rows = []
    for i, row in enumerate(table["psnr_db"]):
        for b, v in zip(table["budgets"], row):
            rows.append((i, b, v))
    write_csv(args.out, ["image", "budget", "psnr_db"], rows)
    print(f"wrote {args.out}")
    return 0


def _cmd_dict_info(args) -> int:
    head = read_header(args.file)
    for key in ("version", "separable", "n_side", "ncols1d", "m", "k",
                "family", "order", "levels"):
        print(f"{key}: {head[key]}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osdl",
        description="Sparse-dictionary training and image experiments on "
                    "cropped-wavelet bases")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("border-bench", help="border-error benchmark CSV")
    _add_options(p, {"n": (int, None), "count": (int, None),
                     "coefs": (int, None), "family": (str, None),
                     "order": (int, None), "seed": (int, None)})
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_border_bench)

    p = sub.add_parser("approx", help="m-term approximation PSNR curves")
    p.add_argument("--images", required=True)
    _add_options(p, {"patch": (int, None), "counts": (str, None),
                     "npatches": (int, None), "family": (str, None),
                     "order": (int, None), "seed": (int, None)})
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_approx)

    p = sub.add_parser("train", help="train a sparse dictionary on patches")
    p.add_argument("--images", required=True)
    _add_options(p, dict(_COMMON_TRAIN))
    _add_options(p, {"patch": (int, None), "npatches": (int, None),
                     "atoms": (int, None), "family": (str, None),
                     "order": (int, None), "resid_tol": (float, None)})
    p.add_argument("--config")
    p.add_argument("--log", help="progress CSV (t,batch_cost,test_cost)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("denoise", help="single-pass patch denoising")
    p.add_argument("--input", required=True)
    p.add_argument("--ref", help="clean reference for PSNR reporting")
    _add_options(p, dict(_COMMON_TRAIN))
    _add_options(p, {"sigma": (float, None), "patch": (int, None),
                     "trainer": (str, None), "base": (str, None),
                     "family": (str, None), "order": (int, None),
                     "gain": (float, None), "lam": (float, None)})
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("compress", help="whole-image coding PSNR table")
    p.add_argument("--images", required=True)
    p.add_argument("--dict", required=True)
    _add_options(p, {"budgets": (str, None), "seed": (int, None)})
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("dict-info", help="print dictionary file header")
    p.add_argument("file")
    p.set_defaults(func=_cmd_dict_info)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OsdlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
