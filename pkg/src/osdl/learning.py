"""Dictionary training: batch NIHT sweeps, stochastic per-sample NIHT, and
the online mini-batch trainer with momentum, global step size, incremental
Gram maintenance, and atom replacement/pruning.

All trainers minimize 0.5 ||Y - Phi A X||_F^2 over the column-sparse A,
alternating with greedy sparse coding of the examples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateStepError, DimensionMismatchError
from .pursuit import SparseCodeMatrix, SparseVec, batch_omp, hard_threshold, \
    least_squares_code, omp
from .sparsedict import EffectiveGram, SparseDictionary, make_base

__all__ = [
    "TrainerConfig",
    "TrainerState",
    "init_dictionary",
    "grad_dict",
    "atom_update_niht",
    "batch_learn",
    "stochastic_niht_train",
    "osdl_step_size",
    "osdl_train",
    "replace_and_prune",
]

# Cost-guarded scalings of the global step tried per mini-batch, best kept.
DEFAULT_STEP_LADDER = (8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625)


@dataclass
class TrainerConfig:
    """Hyperparameters shared by the training algorithms."""

    atom_sparsity: int
    code_sparsity: int
    minibatch: int = 512
    epochs: int = 1
    momentum: float = 0.9
    rate_decay_batches: float | None = None  # T in 1/(1+t/T); None -> 10 epochs' worth
    backtrack: float = 0.5
    maintenance_period: int = 10
    prune_coherence: float = 0.99
    unused_threshold: float = 1.0  # min selections per maintenance window
    seed: int = 0
    resid_tol: float = 0.0  # coding stops early below this residual norm
    niht_iters: int = 1  # per-atom steps per visit in the stochastic trainer
    step_ladder: tuple = DEFAULT_STEP_LADDER

    def __post_init__(self):
        if self.atom_sparsity < 1 or self.code_sparsity < 1:
            raise ValueError("sparsity levels must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.minibatch < 1 or self.epochs < 1:
            raise ValueError("minibatch and epochs must be positive")


@dataclass
class TrainerState:
    """Mutable online-trainer state between mini-batches."""

    sd: SparseDictionary
    gram: EffectiveGram
    momentum: dict = field(default_factory=dict)  # atom index -> dense velocity
    usage: np.ndarray = None
    selections: int = 0
    t: int = 0
    rng: np.random.Generator = None


def init_dictionary(base, natoms: int, atom_sparsity: int,
                    rng: np.random.Generator, kind: str = "identity",
                    noise: float = 0.01) -> SparseDictionary:
    """Initial column-sparse A over ``base``.

    ``identity`` places a_j = e_j (plus small random extras up to the
    sparsity budget) for as many columns as the base provides and draws
    the remainder randomly; ``random`` draws every column as a random
    k-sparse vector.  Effective atoms are unit-normalized.
    """
    base = make_base(base)
    L = base.natoms
    k = atom_sparsity
    col_idx, col_val = [], []
    for j in range(natoms):
        if kind == "identity" and j < L:
            extras = min(k - 1, L - 1)
            pool = np.setdiff1d(np.arange(L), [j])
            pick = rng.choice(pool, size=extras, replace=False) if extras else []
            idx = np.concatenate([[j], pick]).astype(np.int64)
            val = np.concatenate([[1.0], noise * rng.standard_normal(len(pick))])
        else:
            idx = rng.choice(L, size=min(k, L), replace=False).astype(np.int64)
            val = rng.standard_normal(idx.size)
        order = np.argsort(idx)
        col_idx.append(idx[order])
        col_val.append(val[order])
    sd = SparseDictionary(base, col_idx, col_val, k)
    sd.renormalize()
    return sd


def _dense_codes(X, natoms: int) -> np.ndarray:
    if isinstance(X, SparseCodeMatrix):
        return X.to_dense()
    X = np.asarray(X, dtype=float)
    if X.shape[0] != natoms:
        raise DimensionMismatchError("code matrix row count mismatch")
    return X


def grad_dict(sd: SparseDictionary, Y: np.ndarray, X, S) -> np.ndarray:
    """Gradient of 0.5||Y - Phi A X||_F^2 w.r.t. columns S of A.

    Returns -Phi^T (Y - Phi A X) X^T restricted to columns S, as a dense
    base_dim x |S| array.
    """
    Y = np.asarray(Y, dtype=float)
    Xd = _dense_codes(X, sd.natoms)
    if Y.shape[1] != Xd.shape[1] or Y.shape[0] != sd.signal_dim:
        raise DimensionMismatchError("batch/code shapes inconsistent")
    S = np.asarray(S, dtype=np.int64)
    R = Y - sd.apply(Xd)
    return -(sd.base.adjoint(R)) @ Xd[S, :].T


def _atom_cost_terms(base, a: np.ndarray, Ex: np.ndarray, xtx: float) -> float:
    """Cost of a up to the constant ||E||^2/2: -(Phi a).Ex + ||Phi a||^2 xtx/2."""
    Pa = base.apply(a)
    return float(-(Pa @ Ex) + 0.5 * (Pa @ Pa) * xtx)


def atom_update_niht(E: np.ndarray, base, a: np.ndarray, x_row: np.ndarray,
                     k: int, backtrack: float = 0.5,
                     step_scale: float = 1.0) -> np.ndarray:
    """One accepted NIHT step on f(a) = 0.5||E - (Phi a) x^T||_F^2.

    The step size is the exact minimizer of the quadratic along the
    support-restricted gradient; if hard-thresholding changes the
    support, the step is shrunk by ``backtrack`` until the cost
    decreases.  Returns ``a`` unchanged when the atom is unused, the
    gradient vanishes, or the step underflows.
    """
    base = make_base(base)
    a = np.asarray(a, dtype=float)
    x_row = np.atleast_1d(np.asarray(x_row, dtype=float))
    E = np.asarray(E, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if E.shape != (base.signal_dim, x_row.size):
        raise DimensionMismatchError("error matrix/usage row shapes inconsistent")
    xtx = float(x_row @ x_row)
    if xtx <= 0.0:
        return a  # unused atom: nothing to update
    Ex = E @ x_row
    grad = base.adjoint(base.apply(a) * xtx - Ex)
    gnorm2 = float(grad @ grad)
    if gnorm2 <= 1e-28:
        return a  # stationary
    support = np.where(a != 0.0)[0]
    gs = grad[support]
    gs2 = float(gs @ gs)
    if support.size and gs2 > 1e-28:
        denom = float(np.sum(base.apply(_embed(grad, support)) ** 2)) * xtx
        eta = gs2 / denom if denom > 0 else 0.0
    else:
        denom = float(np.sum(base.apply(grad) ** 2)) * xtx
        eta = gnorm2 / denom if denom > 0 else 0.0
    if eta <= 0.0:
        return a
    eta *= step_scale
    eta0 = eta
    cost0 = _atom_cost_terms(base, a, Ex, xtx)
    sup_set = frozenset(support.tolist())
    while True:
        cand = hard_threshold(a - eta * grad, k).to_dense()
        cost1 = _atom_cost_terms(base, cand, Ex, xtx)
        decreased = cost1 <= cost0 + 1e-12 * max(1.0, abs(cost0))
        if decreased and (frozenset(np.where(cand != 0.0)[0].tolist()) == sup_set
                          or cost1 < cost0):
            return cand
        eta *= backtrack
        if eta < 1e-12 * eta0:
            return a  # step underflow: no acceptable move found


def _embed(vec: np.ndarray, support: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vec)
    out[support] = vec[support]
    return out


def _code_batch_operator(sd: SparseDictionary, Y: np.ndarray, p: int,
                         tol: float) -> SparseCodeMatrix:
    codes = [omp(sd, Y[:, i], max_atoms=p, resid_tol=tol)
             for i in range(Y.shape[1])]
    return SparseCodeMatrix(dim=sd.natoms, codes=codes)


def batch_learn(Y: np.ndarray, base, A0, config: TrainerConfig,
                progress=None) -> SparseDictionary:
    """Alternating batch training: safeguarded OMP coding + NIHT atom sweeps.

    The coding stage keeps, per example, the better of the fresh OMP code
    and a least-squares refit on the previous support, so the global
    objective is non-increasing at every coding stage and at every atom
    update.
    """
    base = make_base(base)
    Y = np.asarray(Y, dtype=float)
    sd = _as_sparse_dictionary(base, A0, config.atom_sparsity)
    N = Y.shape[1]
    if N < 1:
        raise DimensionMismatchError("need at least one training example")
    m = sd.natoms
    X = np.zeros((m, N))
    prev_supports: list[np.ndarray | None] = [None] * N

    for it in range(config.epochs):
        # coding stage
        for i in range(N):
            y = Y[:, i]
            new = omp(sd, y, max_atoms=config.code_sparsity,
                      resid_tol=config.resid_tol)
            best = new
            if prev_supports[i] is not None and prev_supports[i].size:
                old = least_squares_code(sd, y, prev_supports[i])
                if (np.linalg.norm(y - sd.apply_code(old))
                        < np.linalg.norm(y - sd.apply_code(new))):
                    best = old
            X[:, i] = 0.0
            X[best.support, i] = best.values
            prev_supports[i] = best.support
        R = Y - sd.apply(X)
        cost = 0.5 * float(np.sum(R * R))
        if progress is not None:
            progress("code", it, cost)

        # dictionary update stage: sweep atoms to per-atom convergence
        for j in range(m):
            xj = X[j, :]
            users = np.where(xj != 0.0)[0]
            if users.size == 0:
                continue
            xu = xj[users]
            Dj = sd.column(j)
            Eu = R[:, users] + np.outer(Dj, xu)
            a = sd.column_vec(j)
            for _ in range(50):
                a_new = atom_update_niht(Eu, base, a, xu, config.atom_sparsity,
                                         backtrack=config.backtrack)
                if np.array_equal(a_new, a):
                    break
                delta = np.linalg.norm(a_new - a)
                a = a_new
                if delta < 1e-12:
                    break
            idx = np.where(a != 0.0)[0]
            sd.set_column(j, idx, a[idx])
            scale = sd.renormalize([j])[0]
            X[j, users] = xu * scale
            Dj_new = sd.column(j)
            R[:, users] = Eu - np.outer(Dj_new, X[j, users])
            cost = 0.5 * float(np.sum(R * R))
            if progress is not None:
                progress("atom", it, cost)
    return sd


def _as_sparse_dictionary(base, A0, atom_sparsity: int) -> SparseDictionary:
    if isinstance(A0, SparseDictionary):
        sd = A0.copy()
    else:
        sd = SparseDictionary.from_dense(base, np.asarray(A0, dtype=float),
                                         atom_sparsity)
    sd.renormalize()
    return sd


def stochastic_niht_train(samples: np.ndarray, base, A0, config: TrainerConfig,
                          progress=None) -> SparseDictionary:
    """Per-sample stochastic training: code one example, NIHT-step its atoms.

    Atom j in the code's support receives ``config.niht_iters`` accepted
    NIHT steps with the decayed step scale 1/(1 + i/T), where i counts
    processed samples.  A per-sample step at full strength fits the atom
    to that sample alone, so T defaults to a tenth of an epoch: strong
    damping that keeps early samples from hijacking atoms.
    """
    base = make_base(base)
    Y = np.asarray(samples, dtype=float)
    sd = _as_sparse_dictionary(base, A0, config.atom_sparsity)
    rng = np.random.default_rng(config.seed)
    N = Y.shape[1]
    T = config.rate_decay_batches
    if T is None:
        T = max(1.0, 0.1 * N)
    i_seen = 0
    for _ in range(config.epochs):
        for i in rng.permutation(N):
            y = Y[:, i]
            code = omp(sd, y, max_atoms=config.code_sparsity,
                       resid_tol=config.resid_tol)
            if code.nnz:
                r = y - sd.apply_code(code)
                scale = 1.0 / (1.0 + i_seen / T)
                for j, xj in zip(code.support, code.values):
                    Ej = r + sd.column(j) * xj
                    a = sd.column_vec(j)
                    for _ in range(config.niht_iters):
                        a = atom_update_niht(Ej, base, a, np.array([xj]),
                                             config.atom_sparsity,
                                             backtrack=config.backtrack,
                                             step_scale=scale)
                    idx = np.where(a != 0.0)[0]
                    if idx.size:
                        sd.set_column(j, idx, a[idx])
                        s = sd.renormalize([j])[0]
                        xj = xj * s
                        r = Ej - sd.column(j) * xj
            i_seen += 1
            if progress is not None and code.nnz:
                progress("sample", i_seen, 0.5 * float(r @ r))
    return sd


def osdl_step_size(base, grad_S: np.ndarray, X_S: np.ndarray) -> float:
    """Global step ||G||_F / ||Phi G X_S||_F for the restricted gradient."""
    base = make_base(base)
    grad_S = np.asarray(grad_S, dtype=float)
    X_S = np.asarray(X_S, dtype=float)
    if grad_S.ndim == 1:
        grad_S = grad_S[:, None]
    if X_S.ndim == 1:
        X_S = X_S[None, :]
    if grad_S.shape[1] != X_S.shape[0]:
        raise DimensionMismatchError("gradient/code restriction shapes differ")
    num = float(np.linalg.norm(grad_S))
    den = float(np.linalg.norm(base.apply(grad_S) @ X_S))
    if den < 1e-15:
        raise DegenerateStepError("step-size denominator below 1e-15")
    return num / den


class _UnitColumns:
    """Unit-norm view of a base dictionary, for pursuit over base atoms."""

    def __init__(self, base):
        self.base = base
        if hasattr(base, "gram1"):
            n1 = np.sqrt(np.diag(base.gram1()))
            self.norms = np.outer(n1, n1).ravel(order="F")
        else:
            self.norms = np.sqrt(np.diag(base.gram()))
        self.norms = np.where(self.norms > 1e-15, self.norms, 1.0)

    @property
    def signal_dim(self):
        return self.base.signal_dim

    @property
    def natoms(self):
        return self.base.natoms

    def column(self, j):
        return self.base.column(j) / self.norms[j]

    def adjoint(self, r):
        return self.base.adjoint(r) / self.norms


def _base_code_ksparse(base, y: np.ndarray, k: int) -> np.ndarray:
    """k-sparse base-coefficient code of y via OMP over unit-norm base atoms."""
    view = _UnitColumns(base)
    code = omp(view, y, max_atoms=k)
    out = np.zeros(base.natoms)
    out[code.support] = code.values / view.norms[code.support]
    return out


def replace_and_prune(state: TrainerState, recent_Y: np.ndarray,
                      recent_X: np.ndarray | None, config: TrainerConfig) -> list[int]:
    """Replace (almost) unused atoms and one of each too-coherent pair.

    Replacement atoms are the k-sparse base codes of the unexplained
    parts (coding residuals) of the worst-represented recent examples.
    Returns the list of replaced atom indices; usage counters reset when
    any replacement happens.
    """
    sd = state.sd
    m = sd.natoms
    recent_Y = np.asarray(recent_Y, dtype=float)
    if recent_X is None:
        codes = SparseCodeMatrix(dim=m, codes=[
            batch_omp(state.gram.matrix, sd.adjoint(recent_Y[:, i]),
                      float(recent_Y[:, i] @ recent_Y[:, i]),
                      max_atoms=config.code_sparsity,
                      resid_tol=config.resid_tol)
            for i in range(recent_Y.shape[1])])
        recent_X = codes.to_dense()
    bad: set[int] = set(np.where(state.usage < config.unused_threshold)[0].tolist())
    G = state.gram.matrix
    coh = np.abs(G - np.diag(np.diag(G)))
    for i, j in zip(*np.where(coh > config.prune_coherence)):
        if i < j:
            bad.add(int(j if state.usage[j] <= state.usage[i] else i))
    if not bad:
        return []
    R = recent_Y - sd.apply(recent_X)
    worst = np.argsort(-np.einsum("ij,ij->j", R, R), kind="stable")
    replaced = []
    for rank, j in enumerate(sorted(bad)):
        r = R[:, worst[rank % worst.size]]
        if np.linalg.norm(r) < 1e-10:
            continue
        a = _base_code_ksparse(sd.base, r, config.atom_sparsity)
        idx = np.where(a != 0.0)[0]
        if not idx.size:
            continue
        sd.set_column(j, idx, a[idx])
        if sd.effective_norm(j) <= 1e-12:
            continue
        sd.renormalize([j])
        state.momentum.pop(j, None)
        replaced.append(j)
    if replaced:
        state.gram.update(sd, replaced)
        state.usage[:] = 0
        state.selections = 0
    return replaced


def osdl_train(samples: np.ndarray, base, A0, config: TrainerConfig,
               test_set: np.ndarray | None = None,
               progress=None) -> SparseDictionary:
    """Online mini-batch training of the column-sparse dictionary.

    Per mini-batch: code all examples with the maintained effective Gram,
    take one momentum step of the global projected gradient (the step
    size from the gradient/operator norm ratio, decayed by 1/(1+t/T), and
    cost-guarded by a power-of-two line search over ``step_ladder``),
    hard-threshold columns to the atom sparsity, renormalize the touched
    effective atoms and compensate the codes, update the touched Gram
    rows/columns, and run replacement/pruning every maintenance period.
    Deterministic for a fixed config seed.
    """
    base = make_base(base)
    Y = np.asarray(samples, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != base.signal_dim:
        raise DimensionMismatchError("sample matrix must be signal_dim x N")
    sd = _as_sparse_dictionary(base, A0, config.atom_sparsity)
    m = sd.natoms
    N = Y.shape[1]
    rng = np.random.default_rng(config.seed)
    state = TrainerState(sd=sd, gram=EffectiveGram.full(sd),
                         usage=np.zeros(m), rng=rng)
    nbatches = int(np.ceil(N / config.minibatch))
    T = config.rate_decay_batches
    if T is None:
        T = 10.0 * config.epochs * nbatches
    gamma = config.momentum
    k = config.atom_sparsity

    for epoch in range(config.epochs):
        order = rng.permutation(N)
        for start in range(0, N, config.minibatch):
            chunk = order[start:start + config.minibatch]
            Yt = Y[:, chunk]
            nb = chunk.size
            alpha0 = sd.adjoint(Yt)
            norms2 = np.einsum("ij,ij->j", Yt, Yt)
            X = np.zeros((m, nb))
            for i in range(nb):
                code = batch_omp(state.gram.matrix, alpha0[:, i],
                                 float(norms2[i]),
                                 max_atoms=config.code_sparsity,
                                 resid_tol=config.resid_tol,
                                 check_gram=False)
                X[code.support, i] = code.values
            used_counts = (X != 0.0).sum(axis=1)
            state.usage += used_counts
            state.selections += int(used_counts.sum())
            S = np.where(used_counts > 0)[0]
            R = Yt - sd.apply(X)
            batch_cost = 0.5 * float(np.sum(R * R))

            if S.size:
                Xs = X[S, :]
                grad_S = -(base.adjoint(R)) @ Xs.T
                try:
                    eta = osdl_step_size(base, grad_S, Xs) / (1.0 + state.t / T)
                except DegenerateStepError:
                    eta = 0.0
                if eta > 0.0:
                    prop = eta * grad_S
                    for ci, j in enumerate(S):
                        if gamma and j in state.momentum:
                            prop[:, ci] += gamma * state.momentum[j]
                    # effective atoms of S, for candidate-cost evaluation
                    DS = np.column_stack([sd.column(int(j)) for j in S])
                    ES = R + DS @ Xs
                    best = None
                    for beta in config.step_ladder:
                        cols = np.zeros((sd.base_dim, S.size))
                        scales = np.ones(S.size)
                        for ci, j in enumerate(S):
                            a = sd.column_vec(int(j)) - beta * prop[:, ci]
                            tv = hard_threshold(a, k)
                            dense = tv.to_dense()
                            nrm2 = sd.base.quad_norm2(tv.support, tv.values)
                            if nrm2 <= 1e-24:
                                cols[:, ci] = sd.column_vec(int(j))
                                continue
                            nrm = np.sqrt(nrm2)
                            cols[:, ci] = dense / nrm
                            scales[ci] = nrm
                        R2 = ES - base.apply(cols) @ (Xs * scales[:, None])
                        c2 = 0.5 * float(np.sum(R2 * R2))
                        if best is None or c2 < best[0]:
                            best = (c2, beta, cols, scales)
                    c2, beta, cols, scales = best
                    if c2 <= batch_cost + 1e-12 * max(1.0, batch_cost):
                        for ci, j in enumerate(S):
                            j = int(j)
                            state.momentum[j] = beta * prop[:, ci]
                            idx = np.where(cols[:, ci] != 0.0)[0]
                            sd.set_column(j, idx, cols[idx, ci])
                        X[S, :] = Xs * scales[:, None]
                        state.gram.update(sd, S)

            state.t += 1
            if (config.maintenance_period
                    and state.t % config.maintenance_period == 0):
                replace_and_prune(state, Yt, X, config)
            if progress is not None:
                test_cost = ""
                _emit(progress, state.t, batch_cost / max(nb, 1), test_cost)
        if test_set is not None and progress is not None:
            tc = heldout_cost(sd, state.gram, np.asarray(test_set, dtype=float),
                              config.code_sparsity, config.resid_tol)
            _emit(progress, state.t, "", tc)
    return sd


def _emit(progress, t, batch_cost, test_cost):
    if callable(progress):
        progress(t, batch_cost, test_cost)
    else:
        progress.write(f"{t},{batch_cost},{test_cost}\n")


def heldout_cost(sd: SparseDictionary, gram: EffectiveGram | None,
                 Y: np.ndarray, p: int, resid_tol: float = 0.0) -> float:
    """Mean squared coding residual of Y under the current dictionary."""
    G = gram.matrix if gram is not None else EffectiveGram.full(sd).matrix
    tot = 0.0
    for i in range(Y.shape[1]):
        y = Y[:, i]
        code = batch_omp(G, sd.adjoint(y), float(y @ y), max_atoms=p,
                         resid_tol=resid_tol, check_gram=False)
        r = y - sd.apply_code(code)
        tot += float(r @ r)
    return tot / max(Y.shape[1], 1)
