"""Double-sparsity dictionary learning over cropped-wavelet base dictionaries.

The effective dictionary is D = Phi A: Phi a fast analytic base (cropped
wavelets, applied separably in 2-D) and A a learned column-sparse matrix.
Greedy pursuit codes signals; batch NIHT sweeps and the online mini-batch
trainer fit A; the experiments module reproduces the border, approximation,
denoising, and compression studies at desk scale.
"""

from .errors import (
    DegenerateStepError,
    DimensionMismatchError,
    FormatError,
    InconsistentGramError,
    InvalidLengthError,
    InvalidOrderError,
    InvalidSigmaError,
    InvalidSignalLengthError,
    OsdlError,
    TooManyLevelsError,
    UnsupportedFamilyError,
)
from .wavelets import (
    CroppedWaveletDictionary,
    OrthonormalSynthesisMatrix,
    WaveletFilterPair,
    cropped_dictionary,
    dwt2_cascade,
    idwt2_cascade,
    max_levels,
    separable_adjoint,
    separable_apply,
    synthesis_matrix,
    wavelet_filters,
)
from .pursuit import (
    SparseCodeMatrix,
    SparseVec,
    batch_omp,
    hard_threshold,
    least_squares_code,
    omp,
)
from .sparsedict import (
    EffectiveGram,
    ExplicitBase,
    SeparableBase,
    SparseDictionary,
    dict_adjoint,
    dict_apply,
    gram_full,
    gram_update,
    make_base,
)
from .learning import (
    TrainerConfig,
    TrainerState,
    atom_update_niht,
    batch_learn,
    grad_dict,
    heldout_cost,
    init_dictionary,
    osdl_step_size,
    osdl_train,
    replace_and_prune,
    stochastic_niht_train,
)
from .experiments import (
    MTermResult,
    PatchGrid,
    border_error_profile,
    compress_eval,
    denoise,
    extract_patches,
    gen_border_signals,
    mterm_curve,
    odct_dictionary,
    psnr,
    reassemble,
    sample_patches,
)
from .imgio import read_image, write_image
from .dictfile import load_dictionary, read_header, save_dictionary

__version__ = "0.1.0"
