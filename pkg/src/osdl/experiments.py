"""Desk-scale studies: border benchmark, M-term approximation curves,
single-pass patch denoising, and whole-image compression, plus the patch
extraction/reassembly and quality-metric plumbing they share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidSigmaError
from .learning import TrainerConfig, batch_learn, init_dictionary, osdl_train
from .pursuit import SparseVec, batch_omp, omp
from .sparsedict import ExplicitBase, SeparableBase, SparseDictionary, make_base
from .wavelets import (
    CroppedWaveletDictionary,
    OrthonormalSynthesisMatrix,
    cropped_dictionary,
    synthesis_matrix,
    wavelet_filters,
)

__all__ = [
    "PatchGrid",
    "MTermResult",
    "psnr",
    "extract_patches",
    "reassemble",
    "sample_patches",
    "gen_border_signals",
    "border_error_profile",
    "mterm_curve",
    "denoise",
    "compress_eval",
    "odct_dictionary",
]

PSNR_SENTINEL = 999.0


@dataclass(frozen=True)
class PatchGrid:
    """Fully-inside patch positions of a regular grid over an image."""

    image_h: int
    image_w: int
    patch_size: int
    stride: int = 1

    def __post_init__(self):
        if self.patch_size > min(self.image_h, self.image_w):
            raise DimensionMismatchError("patch larger than image")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def rows(self) -> int:
        return (self.image_h - self.patch_size) // self.stride + 1

    @property
    def cols(self) -> int:
        return (self.image_w - self.patch_size) // self.stride + 1

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def positions(self):
        s, n = self.stride, self.patch_size
        for r in range(self.rows):
            for c in range(self.cols):
                yield r * s, c * s


def psnr(ref: np.ndarray, test: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; equal inputs report the sentinel."""
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise DimensionMismatchError("psnr operands must share a shape")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return float(10.0 * np.log10(peak * peak / mse))


def extract_patches(image: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Patch matrix Y: one column-major vectorized patch per column."""
    image = np.asarray(image, dtype=float)
    if image.shape != (grid.image_h, grid.image_w):
        raise DimensionMismatchError("image does not match the grid")
    n = grid.patch_size
    Y = np.empty((n * n, grid.count))
    for i, (r, c) in enumerate(grid.positions()):
        Y[:, i] = image[r:r + n, c:c + n].ravel(order="F")
    return Y


def reassemble(patches: np.ndarray, grid: PatchGrid, lam: float,
               anchor: np.ndarray) -> np.ndarray:
    """Pixelwise weighted average (lam * anchor + sum of patches) / coverage.

    This is the closed-form minimizer of the patch-consistency objective
    in the image variable; uncovered pixels fall back to the anchor.
    """
    patches = np.asarray(patches, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if patches.shape != (grid.patch_size ** 2, grid.count):
        raise DimensionMismatchError("patch matrix does not match the grid")
    if anchor.shape != (grid.image_h, grid.image_w):
        raise DimensionMismatchError("anchor image does not match the grid")
    n = grid.patch_size
    acc = lam * anchor.copy()
    weight = np.full(anchor.shape, float(lam))
    for i, (r, c) in enumerate(grid.positions()):
        acc[r:r + n, c:c + n] += patches[:, i].reshape(n, n, order="F")
        weight[r:r + n, c:c + n] += 1.0
    uncovered = weight == 0.0
    weight[uncovered] = 1.0
    out = acc / weight
    out[uncovered] = anchor[uncovered]
    return out


def sample_patches(images, patch_size: int, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Random fully-inside square patches from a list of 2-d images."""
    usable = [np.asarray(im, dtype=float) for im in images
              if min(np.asarray(im).shape[:2]) >= patch_size]
    if not usable:
        raise DimensionMismatchError("no image large enough for the patch size")
    n = patch_size
    Y = np.empty((n * n, count))
    for i in range(count):
        im = usable[rng.integers(len(usable))]
        r = rng.integers(im.shape[0] - n + 1)
        c = rng.integers(im.shape[1] - n + 1)
        Y[:, i] = im[r:r + n, c:c + n].ravel(order="F")
    return Y


def gen_border_signals(count: int, n: int, seed: int,
                       step_scale: float = 1.0) -> np.ndarray:
    """Random unit-norm cubics on [-1, 1] with a step at the middle sample.

    Polynomial coefficients and the step height are standard normal
    (step height scaled by ``step_scale``); each signal is normalized to
    unit l2 norm.  Returns an n x count matrix.
    """
    if n % 2 != 0:
        raise DimensionMismatchError("signal length must be even")
    rng = np.random.default_rng(seed)
    t = np.linspace(-1.0, 1.0, n)
    powers = np.vstack([np.ones(n), t, t ** 2, t ** 3])
    out = np.empty((n, count))
    for i in range(count):
        f = rng.standard_normal(4) @ powers
        f[n // 2:] += step_scale * rng.standard_normal()
        out[:, i] = f / np.linalg.norm(f)
    return out


def border_error_profile(signals: np.ndarray, dictionary, n_coefs: int = 5
                         ) -> np.ndarray:
    """Mean squared reconstruction error per sample at a fixed coefficient
    budget.

    Redundant dictionaries (cropped wavelets, explicit matrices) are coded
    with OMP; orthonormal synthesis matrices use the n_coefs largest
    analysis coefficients.
    """
    signals = np.asarray(signals, dtype=float)
    n, count = signals.shape
    err = np.zeros(n)
    if isinstance(dictionary, OrthonormalSynthesisMatrix):
        W = dictionary.matrix
        if W.shape[0] != n:
            raise DimensionMismatchError("dictionary length mismatch")
        coefs = W.T @ signals
        for i in range(count):
            c = coefs[:, i]
            keep = np.argsort(-np.abs(c), kind="stable")[:n_coefs]
            err += (signals[:, i] - W[:, keep] @ c[keep]) ** 2
    else:
        base = make_base(dictionary)
        if base.signal_dim != n:
            raise DimensionMismatchError("dictionary length mismatch")
        for i in range(count):
            code = omp(base, signals[:, i], max_atoms=n_coefs)
            rec = np.zeros(n)
            for j, v in zip(code.support, code.values):
                rec += v * base.column(int(j))
            err += (signals[:, i] - rec) ** 2
    return err / count


@dataclass
class MTermResult:
    """Mean PSNR per coefficient budget for each approximation method."""

    counts: list[int]
    psnr_db: dict[str, list[float]]


def _mterm_orthonormal(analyze, synthesize, patch: np.ndarray, m: int) -> np.ndarray:
    C = analyze(patch)
    flat = np.abs(C).ravel()
    if m <= 0:
        return synthesize(np.zeros_like(C))
    keep = np.argsort(-flat, kind="stable")[:m]
    mask = np.zeros(C.size, dtype=bool)
    mask[keep] = True
    return synthesize(np.where(mask.reshape(C.shape), C, 0.0))


def _omp_separable(base: SeparableBase, patch: np.ndarray, m: int) -> np.ndarray:
    y = patch.ravel(order="F")
    code = omp(base, y, max_atoms=m)
    rec = base.apply(code.to_dense())
    return rec.reshape(patch.shape, order="F")


def mterm_curve(dictionaries: dict, patches: np.ndarray, counts,
                peak: float = 1.0) -> MTermResult:
    """Mean m-term approximation PSNR per dictionary and coefficient count.

    ``dictionaries`` maps a name to either a callable
    ``(patch, m) -> reconstruction`` or an object handled natively:
    a SeparableBase / SparseDictionary is coded with OMP.
    """
    patches = np.asarray(patches, dtype=float)
    npix, npatch = patches.shape
    side = int(round(np.sqrt(npix)))
    if side * side != npix:
        raise DimensionMismatchError("patches must be square")
    counts = [int(c) for c in counts]
    result = MTermResult(counts=counts, psnr_db={})
    for name, method in dictionaries.items():
        vals = []
        for m in counts:
            acc = 0.0
            for i in range(npatch):
                patch = patches[:, i].reshape(side, side, order="F")
                if callable(method):
                    rec = method(patch, m)
                elif isinstance(method, SeparableBase):
                    rec = _omp_separable(method, patch, m)
                elif isinstance(method, SparseDictionary):
                    code = omp(method, patch.ravel(order="F"), max_atoms=m)
                    rec = method.apply_code(code).reshape(side, side, order="F")
                else:
                    raise TypeError(f"unsupported dictionary entry {name!r}")
                acc += psnr(patch, rec, peak=peak)
            vals.append(acc / npatch)
        result.psnr_db[name] = vals
    return result


def odct_dictionary(n: int, natoms: int) -> np.ndarray:
    """Overcomplete DCT dictionary: sampled cosines, DC-removed, unit-norm."""
    D = np.empty((n, natoms))
    D[:, 0] = 1.0 / np.sqrt(n)
    grid = np.arange(n)
    for j in range(1, natoms):
        v = np.cos(np.pi * j * grid / natoms)
        v = v - v.mean()
        D[:, j] = v / np.linalg.norm(v)
    return D


def denoise(noisy: np.ndarray, sigma: float, patch_size: int,
            trainer: str = "osdl", base: str = "wavelet",
            family: str = "symlet", order: int = 4,
            config: TrainerConfig | None = None, gain: float = 1.15,
            lam: float | None = None, seed: int = 0,
            max_code_atoms: int | None = None):
    """One block-coordinate denoising pass over all overlapping patches.

    Trains the column-sparse dictionary on the noisy patches (``trainer``
    in {'osdl', 'batch', 'none'}), codes every patch with error-threshold
    pursuit at eps = gain * sigma * patch_dim, and reassembles the image
    as the lam-weighted pixelwise average with the noisy input.  ``sigma``
    and the image share units; ``lam`` defaults to the dimensionless
    equivalent of the classical 30/sigma rule for 8-bit data.
    """
    noisy = np.asarray(noisy, dtype=float)
    if sigma <= 0:
        raise InvalidSigmaError("sigma must be positive")
    if lam is None:
        lam = (30.0 / 255.0) / sigma
    n = patch_size * patch_size
    grid = PatchGrid(noisy.shape[0], noisy.shape[1], patch_size, stride=1)
    Y = extract_patches(noisy, grid)
    rng = np.random.default_rng(seed)

    filt = wavelet_filters(family, order)
    if base == "wavelet":
        crop = cropped_dictionary(filt, patch_size)
        base_dict = SeparableBase(crop)
    elif base == "odct":
        crop = cropped_dictionary(filt, patch_size)
        base_dict = SeparableBase(odct_dictionary(patch_size, crop.natoms))
    else:
        raise ValueError(f"unknown base {base!r}")

    m = base_dict.natoms  # square A
    if config is None:
        # training codes with a fixed atom budget; the error threshold is
        # reserved for the final denoising pass
        k = max(2, int(round(0.1 * n)))
        config = TrainerConfig(atom_sparsity=k, code_sparsity=max(4, n // 20),
                               minibatch=512, epochs=5, seed=seed)
    sd = init_dictionary(base_dict, m, config.atom_sparsity, rng)

    if trainer == "osdl":
        sd = osdl_train(Y, base_dict, sd, config)
    elif trainer == "batch":
        sd = batch_learn(Y, base_dict, sd, config)
    elif trainer != "none":
        raise ValueError(f"unknown trainer {trainer!r}")

    eps = gain * sigma * np.sqrt(n)
    cap = max_code_atoms if max_code_atoms is not None else n
    from .sparsedict import EffectiveGram
    G = EffectiveGram.full(sd).matrix
    rec = np.empty_like(Y)
    alpha = sd.adjoint(Y)
    for i in range(Y.shape[1]):
        y = Y[:, i]
        code = batch_omp(G, alpha[:, i], float(y @ y), max_atoms=cap,
                         resid_tol=eps, check_gram=False)
        rec[:, i] = sd.apply_code(code)
    return reassemble(rec, grid, lam, noisy), sd


def compress_eval(dictionary, images, budgets, peak: float = 1.0) -> dict:
    """Whole-image OMP at each coefficient budget; PSNR per image and budget.

    ``dictionary`` is any pursuit-compatible object whose signal dimension
    matches the flattened (column-major) images.
    """
    budgets = sorted(int(b) for b in budgets)
    table = {"budgets": budgets, "psnr_db": []}
    for img in images:
        img = np.asarray(img, dtype=float)
        y = img.ravel(order="F")
        if y.size != dictionary.signal_dim:
            raise DimensionMismatchError("image does not match the dictionary")
        row = []
        # nested budgets reuse the single deepest pursuit by truncating the
        # selection order, with a least-squares refit per budget
        order = _selection_order(dictionary, y, budgets[-1])
        from .pursuit import least_squares_code
        for b in budgets:
            sub = least_squares_code(dictionary, y, order[:b])
            rec = _apply_any(dictionary, sub)
            row.append(psnr(y, rec, peak=peak))
        table["psnr_db"].append(row)
    return table


def _apply_any(dictionary, code: SparseVec) -> np.ndarray:
    if isinstance(dictionary, SparseDictionary):
        return dictionary.apply_code(code)
    rec = np.zeros(dictionary.signal_dim)
    for j, v in zip(code.support, code.values):
        rec += v * dictionary.column(int(j))
    return rec


def _selection_order(dictionary, y: np.ndarray, budget: int) -> np.ndarray:
    """OMP atom-selection order (indices in pick order, not sorted)."""
    from scipy.linalg import solve_triangular
    resid = y.copy()
    selected: list[int] = []
    atoms = np.zeros((y.size, budget))
    L = np.zeros((budget, budget))
    while len(selected) < budget:
        corr = dictionary.adjoint(resid)
        if selected:
            corr[selected] = 0.0
        j = int(np.argmax(np.abs(corr)))
        if abs(corr[j]) <= 1e-15:
            break
        col = dictionary.column(j)
        s = len(selected)
        if s == 0:
            piv = col @ col
            if piv < 1e-12:
                break
            L[0, 0] = np.sqrt(piv)
        else:
            w = solve_triangular(L[:s, :s], atoms[:, :s].T @ col, lower=True)
            piv = col @ col - w @ w
            if piv < 1e-12:
                break
            L[s, :s] = w
            L[s, s] = np.sqrt(piv)
        atoms[:, s] = col
        selected.append(j)
        ns = len(selected)
        z = solve_triangular(L[:ns, :ns], atoms[:, :ns].T @ y, lower=True)
        coef = solve_triangular(L[:ns, :ns].T, z, lower=False)
        resid = y - atoms[:, :ns] @ coef
    return np.array(selected, dtype=np.int64)
