"""Orthogonal wavelet filters, synthesis matrices, and cropped-wavelet dictionaries.

The cropped construction builds an orthonormal synthesis matrix at an
extended dyadic length L, keeps the central n rows, drops atoms that are
identically zero on that window, and renormalizes the survivors.  The
result is a redundant dictionary for length-n signals whose atoms are
genuine wavelets that overhang the borders instead of wrapping around
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidLengthError,
    InvalidOrderError,
    InvalidSignalLengthError,
    TooManyLevelsError,
    UnsupportedFamilyError,
)

__all__ = [
    "WaveletFilterPair",
    "OrthonormalSynthesisMatrix",
    "CroppedWaveletDictionary",
    "wavelet_filters",
    "max_levels",
    "synthesis_matrix",
    "analysis_matrix",
    "cropped_dictionary",
    "separable_apply",
    "separable_adjoint",
    "dwt2_cascade",
    "idwt2_cascade",
]

HAAR = "haar"
DAUBECHIES = "daubechies"
SYMLET = "symlet"

_FAMILY_ALIASES = {
    "haar": HAAR,
    "db": DAUBECHIES,
    "daubechies": DAUBECHIES,
    "sym": SYMLET,
    "symlet": SYMLET,
}

# Synthesis (reconstruction) lowpass filters for orthogonal families.
# Minimal-phase Daubechies and least-asymmetric Symlets, orders 1..10;
# each row sums to sqrt(2) and has unit l2 norm.
_DB_LOWPASS = {
    1: (0.70710678118654752, 0.70710678118654752),
    2: (-0.12940952255126038, 0.22414386804201338, 0.83651630373780791,
        0.48296291314453414),
    3: (0.035226291885709537, -0.085441273882026662, -0.13501102001025459,
        0.45987750211849157, 0.80689150931109258, 0.33267055295008262),
    4: (-0.010597401785069032, 0.0328830116668852, 0.030841381835560764,
        -0.18703481171909308, -0.027983769416859854, 0.63088076792985891,
        0.71484657055291565, 0.2303778133088965),
    5: (0.0033357252854737713, -0.012580751999081999, -0.0062414902127982743,
        0.077571493840045714, -0.032244869584638375, -0.24229488706638203,
        0.13842814590132073, 0.72430852843777293, 0.60382926979718967,
        0.16010239797419291),
    6: (-0.0010773010853084796, 0.0047772575109455106, 0.00055384220116149614,
        -0.03158203931748603, 0.027522865530305729, 0.097501605587323049,
        -0.12976686756726194, -0.22626469396543982, 0.31525035170919763,
        0.75113390802109535, 0.49462389039845309, 0.11154074335010946),
    7: (0.00035371379997452025, -0.0018016407040474909, 0.00042957797292136652,
        0.012550998556099841, -0.016574541630666881, -0.038029936935014414,
        0.080612609151083072, 0.071309219266830265, -0.22403618499387498,
        -0.14390600392856498, 0.46978228740519312, 0.72913209084623512,
        0.39653931948191731, 0.077852054085009179),
    8: (-0.00011747678412476953, 0.00067544940645056937, -0.00039174037337694705,
        -0.0048703529934515743, 0.0087460940474057767, 0.013981027917398282,
        -0.044088253930794752, -0.017369301001807546, 0.12874742662047846,
        0.00047248457391328277, -0.28401554296154693, -0.015829105256349306,
        0.58535468365420671, 0.67563073629728981, 0.31287159091429997,
        0.05441584224310401),
    9: (3.9347320316271599e-05, -0.00025196318894271014, 0.00023038576352319597,
        0.0018476468830562265, -0.0042815036824634298, -0.0047232047577513973,
        0.022361662123679097, 0.00025094711483145196, -0.067632829061329974,
        0.030725681479333379, 0.14854074933810638, -0.096840783222976461,
        -0.29327378327917491, 0.13319738582500758, 0.65728807805130054,
        0.60482312369011111, 0.24383467461259035, 0.038077947363878347),
    10: (-1.3264202894521245e-05, 9.3588670320069591e-05, -0.00011646685512928545,
         -0.00068585669495971163, 0.0019924052951850561, 0.0013953517470529012,
         -0.010733175483330575, 0.0036065535669561697, 0.033212674059341002,
         -0.029457536821875813, -0.071394147166397087, 0.093057364603572351,
         0.12736934033579326, -0.19594627437737704, -0.24984642432731538,
         0.28117234366057746, 0.68845903945360357, 0.52720118893172559,
         0.18817680007769149, 0.026670057900555554),
}

_SYM_LOWPASS = {
    2: _DB_LOWPASS[2],
    3: _DB_LOWPASS[3],
    4: (0.032223100604051468, -0.012603967262031304, -0.099219543576633533,
        0.29785779560530605, 0.80373875180513208, 0.49761866763277499,
        -0.029635527646002492, -0.075765714789502213),
    5: (0.027333068344998769, 0.029519490925706261, -0.039134249302313844,
        0.1993975339768556, 0.72340769040404079, 0.63397896345679206,
        0.016602105764510848, -0.17532808990805622, -0.021101834024689041,
        0.019538882735249827),
    6: (0.015404109327044824, 0.0034907120842221625, -0.11799011114852003,
        -0.048311742585698055, 0.49105594192797373, 0.787641141028651,
        0.33792942172816583, -0.072637522786376583, -0.021060292512370848,
        0.044724901770781385, 0.0017677118642540077, -0.0078007083250323804),
    7: (0.012015419283549189, 0.017213376300804503, -0.064908003547188486,
        -0.064131289807385821, 0.3602184609062602, 0.78192159329172812,
        0.4836109156822677, -0.056804476889666969, -0.1010109208684203,
        0.044742349468352377, 0.020464207577546034, -0.018126605131338461,
        -0.0032832978474668107, 0.0022918339540537712),
    8: (-0.0033824159510050026, -0.00054213233180001069, 0.031695087811525991,
        0.0076074873249766082, -0.14329423835127266, -0.061273359067811078,
        0.48135965125905339, 0.77718575169962803, 0.36444189483617894,
        -0.051945838107881801, -0.027219029917103486, 0.049137179673730287,
        0.0038087520138944895, -0.014952258337062199, -0.00030292051472413308,
        0.0018899503327676892),
    9: (0.0014009155259146562, 0.00061978088898550708, -0.013271967781817134,
        -0.011528210207679186, 0.030224878858275188, 0.00058346274612498183,
        -0.054568958430833351, 0.23876091460730517, 0.7178970827644124,
        0.61733844914093415, 0.035272488035271043, -0.19155083129728433,
        -0.018233770779395506, 0.062077789302885748, 0.0088592674934002667,
        -0.01026406402763312, -0.00047315449868004354, 0.0010694900329086119),
    10: (-0.00041011591580439833, 0.00034014926631480986, 0.005071649198531799,
         -0.0011404297952173285, -0.02300546135349751, -0.00086875210968925814,
         0.033842354663575221, -0.067089907808381802, -0.087878711511975135,
         0.34021601302346215, 0.76695483656060956, 0.51370987334802634,
         -0.01501923883913786, -0.12155210554854894, 0.026240365058448987,
         0.049686126646942882, 0.00059568278374251904, -0.0070567640625873042,
         0.00071542054205433972, 0.00086257822622597243),
}


@dataclass(frozen=True)
class WaveletFilterPair:
    """Quadrature-mirror filter pair of an orthogonal wavelet family.

    ``lowpass`` is the synthesis scaling filter; ``highpass`` is derived
    from it by the alternating-sign flip, so the pair always satisfies
    the QMF relations.
    """

    family: str
    order: int
    lowpass: np.ndarray
    highpass: np.ndarray

    @property
    def taps(self) -> int:
        return self.lowpass.size

    def __eq__(self, other):
        return (isinstance(other, WaveletFilterPair)
                and self.family == other.family and self.order == other.order)

    def __hash__(self):
        return hash((self.family, self.order))


def _qmf_highpass(lowpass: np.ndarray) -> np.ndarray:
    taps = lowpass.size
    signs = np.where(np.arange(taps) % 2 == 0, 1.0, -1.0)
    return signs * lowpass[::-1]


def _validate_filter(lowpass: np.ndarray, tol: float = 1e-10) -> None:
    if abs(lowpass.sum() - np.sqrt(2.0)) > tol:
        raise InvalidOrderError("lowpass coefficients do not sum to sqrt(2)")
    if abs(lowpass @ lowpass - 1.0) > tol:
        raise InvalidOrderError("lowpass coefficients are not unit-norm")
    for shift in range(1, lowpass.size // 2):
        if abs(lowpass[2 * shift:] @ lowpass[:-2 * shift]) > tol:
            raise InvalidOrderError("lowpass fails even-shift orthogonality")


def wavelet_filters(family: str, order: int = 1) -> WaveletFilterPair:
    """Return the filter pair for ``family`` at ``order``.

    Haar ignores ``order``.  Daubechies and Symlet orders 2..10 are
    embedded as constants and re-verified against the QMF invariants on
    every call.
    """
    key = _FAMILY_ALIASES.get(str(family).lower())
    if key is None:
        raise UnsupportedFamilyError(f"unknown wavelet family: {family!r}")
    if key == HAAR:
        order = 1
        table = _DB_LOWPASS
    elif key == DAUBECHIES:
        table = _DB_LOWPASS
        if not isinstance(order, (int, np.integer)) or order < 1:
            raise InvalidOrderError(f"daubechies order must be >= 1, got {order}")
    else:
        table = _SYM_LOWPASS
        if not isinstance(order, (int, np.integer)) or order < 2:
            raise InvalidOrderError(f"symlet order must be >= 2, got {order}")
    if order not in table:
        raise InvalidOrderError(f"no embedded coefficients for {key} order {order}")
    lowpass = np.array(table[order], dtype=float)
    _validate_filter(lowpass)
    return WaveletFilterPair(family=key, order=int(order),
                             lowpass=lowpass, highpass=_qmf_highpass(lowpass))


def max_levels(length: int) -> int:
    """Deepest dyadic decomposition for ``length`` (bands stay even-sized).

    Periodized orthogonal QMF banks remain exactly orthogonal at every
    even band length, because the autocorrelation of an orthogonal
    filter vanishes at all nonzero even lags; the depth is therefore
    limited only by the dyadic structure, not by the filter support.
    """
    return int(np.log2(length))


def _check_length(length: int) -> None:
    if length < 2 or length & (length - 1) != 0:
        raise InvalidLengthError(f"length must be a power of two >= 2, got {length}")


def _check_levels(length: int, levels: int) -> None:
    if not 1 <= levels <= max_levels(length):
        raise TooManyLevelsError(
            f"levels must lie in [1, {max_levels(length)}] for length {length}, "
            f"got {levels}")


@lru_cache(maxsize=256)
def _level_matrix_cached(filt: WaveletFilterPair, length: int) -> np.ndarray:
    """One-level periodic analysis matrix [lowpass rows; highpass rows]."""
    h = filt.lowpass
    g = filt.highpass
    taps = filt.taps
    half = length // 2
    W = np.zeros((length, length))
    cols = (2 * np.arange(half)[:, None] + np.arange(taps)[None, :]) % length
    for i in range(half):
        np.add.at(W[i], cols[i], h)
        np.add.at(W[half + i], cols[i], g)
    W.setflags(write=False)
    return W


def analysis_matrix(filt: WaveletFilterPair, length: int, levels: int) -> np.ndarray:
    """Multi-level periodic analysis matrix (orthogonal, length x length)."""
    _check_length(length)
    _check_levels(length, levels)
    Wa = np.eye(length)
    size = length
    for _ in range(levels):
        F = np.eye(length)
        F[:size, :size] = _level_matrix_cached(filt, size)
        Wa = F @ Wa
        size //= 2
    return Wa


@dataclass(frozen=True)
class OrthonormalSynthesisMatrix:
    """Dense orthonormal synthesis matrix and its construction parameters."""

    filter: WaveletFilterPair
    size: int
    levels: int
    matrix: np.ndarray = field(repr=False)


def synthesis_matrix(filt: WaveletFilterPair, length: int,
                     levels: int | None = None) -> OrthonormalSynthesisMatrix:
    """Orthonormal periodic synthesis matrix at ``length``.

    Columns are the periodized scaling/wavelet atoms of a ``levels``-deep
    decomposition; ``levels`` defaults to the maximal dyadic depth.
    """
    _check_length(length)
    if levels is None:
        levels = max_levels(length)
    Ws = analysis_matrix(filt, length, levels).T
    return OrthonormalSynthesisMatrix(filter=filt, size=length,
                                      levels=levels, matrix=Ws)


@dataclass(frozen=True)
class CroppedWaveletDictionary:
    """Unit-norm cropped-wavelet dictionary for length-n signals.

    ``atoms`` is the n x L' matrix of surviving, renormalized columns;
    ``norm_scales`` holds the rescaling applied to each kept column
    (the diagonal of the normalization matrix), and ``kept_indices``
    maps kept columns back to columns of the uncropped synthesis matrix.
    """

    filter: WaveletFilterPair
    signal_len: int
    extended_len: int
    levels: int
    crop_offset: int
    atoms: np.ndarray = field(repr=False)
    norm_scales: np.ndarray = field(repr=False)
    kept_indices: np.ndarray = field(repr=False)

    @property
    def natoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def redundancy(self) -> float:
        return self.natoms / self.signal_len


def extended_length(n: int) -> int:
    """Padded transform length: twice the closest power of two above n."""
    return 2 ** (int(np.ceil(np.log2(n))) + 1)


def cropped_dictionary(filt: WaveletFilterPair, n: int,
                       levels: int | None = None,
                       zero_tol: float = 1e-12) -> CroppedWaveletDictionary:
    """Build the cropped-wavelet dictionary for signals of length ``n``.

    The synthesis matrix is built at the extended length, the central n
    rows are kept, columns whose cropped segment has norm below
    ``zero_tol`` are dropped, and the remaining columns are rescaled to
    unit norm.
    """
    if n < 4:
        raise InvalidSignalLengthError(f"signal length must be >= 4, got {n}")
    L = extended_length(n)
    if levels is None:
        levels = max_levels(L)
    Ws = synthesis_matrix(filt, L, levels).matrix
    offset = (L - n) // 2
    cropped = Ws[offset:offset + n, :]
    norms = np.linalg.norm(cropped, axis=0)
    kept = np.where(norms > zero_tol)[0]
    scales = 1.0 / norms[kept]
    atoms = cropped[:, kept] * scales
    return CroppedWaveletDictionary(
        filter=filt, signal_len=n, extended_len=L, levels=levels,
        crop_offset=offset, atoms=atoms, norm_scales=scales,
        kept_indices=kept)


def _atoms_of(dict1d) -> np.ndarray:
    return dict1d.atoms if hasattr(dict1d, "atoms") else np.asarray(dict1d)


def separable_apply(dict1d, coeffs: np.ndarray) -> np.ndarray:
    """Two-sided apply: Phi @ coeffs @ Phi.T (the Kronecker-square operator).

    Under column-major vectorization this equals (Phi (x) Phi) vec(coeffs).
    """
    Phi = _atoms_of(dict1d)
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (Phi.shape[1], Phi.shape[1]):
        raise DimensionMismatchError(
            f"coefficient array must be {Phi.shape[1]}x{Phi.shape[1]}, "
            f"got {coeffs.shape}")
    return Phi @ coeffs @ Phi.T


def separable_adjoint(dict1d, patch: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`separable_apply`: Phi.T @ patch @ Phi."""
    Phi = _atoms_of(dict1d)
    patch = np.asarray(patch)
    if patch.shape != (Phi.shape[0], Phi.shape[0]):
        raise DimensionMismatchError(
            f"patch must be {Phi.shape[0]}x{Phi.shape[0]}, got {patch.shape}")
    return Phi.T @ patch @ Phi


def dwt2_cascade(image: np.ndarray, filt: WaveletFilterPair,
                 levels: int | None = None) -> np.ndarray:
    """Standard 2-D transform: recursively split the approximation band."""
    image = np.asarray(image, dtype=float)
    size = image.shape[0]
    if image.shape[0] != image.shape[1]:
        raise DimensionMismatchError("image must be square")
    _check_length(size)
    if levels is None:
        levels = max_levels(size)
    _check_levels(size, levels)
    out = image.copy()
    cur = size
    for _ in range(levels):
        W1 = _level_matrix_cached(filt, cur)
        out[:cur, :cur] = W1 @ out[:cur, :cur] @ W1.T
        cur //= 2
    return out


def idwt2_cascade(coeffs: np.ndarray, filt: WaveletFilterPair,
                  levels: int | None = None) -> np.ndarray:
    """Inverse of :func:`dwt2_cascade`."""
    coeffs = np.asarray(coeffs, dtype=float)
    size = coeffs.shape[0]
    if coeffs.shape[0] != coeffs.shape[1]:
        raise DimensionMismatchError("coefficient array must be square")
    _check_length(size)
    if levels is None:
        levels = max_levels(size)
    _check_levels(size, levels)
    out = coeffs.copy()
    cur = size // 2 ** (levels - 1)
    for _ in range(levels):
        W1 = _level_matrix_cached(filt, cur)
        out[:cur, :cur] = W1.T @ out[:cur, :cur] @ W1
        cur *= 2
    return out
