"""Tanh MLP surrogate u(x, t) with exact jets (u, u_x, u_xx, u_t).

Derivatives are obtained by pushing truncated Taylor coefficients through the
network (second order in x, first order in t).  Parameter gradients of the
physics-informed loss are obtained by a hand-written reverse pass over that
propagation, so no generic autodiff package is needed.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numba import njit

DEFAULT_WIDTHS = (2, 32, 32, 32, 32, 1)


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class MlpParams:
    """Weights and biases stored in one flat vector; per-layer views on demand."""

    widths: tuple[int, ...]
    flat: np.ndarray
    seed: int | None = None
    activation: str = "tanh"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        _check_widths(self.widths)
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (param_count(self.widths),):
            raise ValueError(f"flat vector has shape {self.flat.shape}, "
                             f"expected ({param_count(self.widths)},)")

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        off = 0
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            W = self.flat[off:off + n_in * n_out].reshape(n_in, n_out)
            off += n_in * n_out
            b = self.flat[off:off + n_out]
            off += n_out
            out.append((W, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.widths, self.flat.copy(), self.seed, self.activation)

    def zeros_like(self) -> "MlpParams":
        return MlpParams(self.widths, np.zeros_like(self.flat), self.seed, self.activation)

    @property
    def size(self) -> int:
        return self.flat.size


def _check_widths(widths: Sequence[int]) -> None:
    if len(widths) < 2:
        raise ValueError(f"need at least input and output widths, got {widths!r}")
    if widths[0] != 2 or widths[-1] != 1:
        raise ValueError(f"widths must start with 2 and end with 1, got {widths!r}")
    if any(w < 1 for w in widths):
        raise ValueError(f"all widths must be positive, got {widths!r}")


def param_count(widths: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def init_params(widths: Sequence[int] = DEFAULT_WIDTHS, seed: int = 0) -> MlpParams:
    """Glorot-normal weights, zero biases."""
    widths = tuple(int(w) for w in widths)
    _check_widths(widths)
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        std = np.sqrt(2.0 / (n_in + n_out))
        chunks.append(rng.normal(0.0, std, size=n_in * n_out))
        chunks.append(np.zeros(n_out))
    return MlpParams(widths, np.concatenate(chunks), seed=seed)


class DerivativeBundle(NamedTuple):
    u: float
    u_x: float
    u_t: float
    u_xx: float


class Jets(NamedTuple):
    u: np.ndarray
    u_x: np.ndarray
    u_t: np.ndarray
    u_xx: np.ndarray


def _tanh_jet_forward(Z, nc, nv):
    H = np.tanh(Z[:nv])
    return _tanh_jet_fill(Z, H, nc, nv), H


@njit(cache=True)
def _tanh_jet_fill(Z, H, nc, nv):
    # rows: [values (nv); d/dx (nc); d2/dx2 (nc); d/dt (nc)]
    out = np.empty_like(Z)
    for i in range(nv):
        for k in range(Z.shape[1]):
            h = H[i, k]
            out[i, k] = h
            if i < nc:
                s = 1.0 - h * h
                sp = -2.0 * h * s
                zx = Z[nv + i, k]
                out[nv + i, k] = s * zx
                out[nv + nc + i, k] = s * Z[nv + nc + i, k] + sp * zx * zx
                out[nv + 2 * nc + i, k] = s * Z[nv + 2 * nc + i, k]
    return out


@njit(cache=True)
def _tanh_jet_backward(gA, Z, H, nc, nv):
    G = np.empty_like(gA)
    for i in range(nv):
        for k in range(gA.shape[1]):
            h = H[i, k]
            s = 1.0 - h * h
            g = gA[i, k] * s
            if i < nc:
                sp = -2.0 * h * s
                spp = s * (4.0 * h * h - 2.0 * s)
                zx = Z[nv + i, k]
                zxx = Z[nv + nc + i, k]
                zt = Z[nv + 2 * nc + i, k]
                ghx = gA[nv + i, k]
                ghxx = gA[nv + nc + i, k]
                ght = gA[nv + 2 * nc + i, k]
                g += ghx * sp * zx + ght * sp * zt + ghxx * (sp * zxx + spp * zx * zx)
                G[nv + i, k] = ghx * s + 2.0 * ghxx * sp * zx
                G[nv + nc + i, k] = ghxx * s
                G[nv + 2 * nc + i, k] = ght * s
            G[i, k] = g
    return G


def _forward(params: MlpParams, x_jet: np.ndarray, t_jet: np.ndarray,
             x_val: np.ndarray, t_val: np.ndarray, keep: bool):
    """Propagate the stacked jet block ``[value(all); d/dx; d2/dx2; d/dt]``.

    The first ``len(x_jet)`` value rows carry derivative jets; the trailing
    ``len(x_val)`` rows are value-only (data points).
    """
    nc = x_jet.size
    nv = nc + x_val.size
    A = np.zeros((nv + 3 * nc, 2))
    A[:nc, 0], A[:nc, 1] = x_jet, t_jet
    A[nc:nv, 0], A[nc:nv, 1] = x_val, t_val
    A[nv:nv + nc, 0] = 1.0           # d/dx of the input (x, t)
    A[nv + 2 * nc:, 1] = 1.0         # d/dt of the input
    tape = []
    layers = params.layers
    for li, (W, b) in enumerate(layers):
        Z = A @ W
        Z[:nv] += b
        if li == len(layers) - 1:
            if keep:
                tape.append((A, None, None))
            return Z, tape
        out, H = _tanh_jet_forward(Z, nc, nv)
        if keep:
            tape.append((A, Z, H))
        A = out
    raise AssertionError("unreachable")


def forward_jets(params: MlpParams, x, t) -> Jets:
    """Vectorized value and derivative jets at points ``(x, t)``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    nc = x.size
    Z, _ = _forward(params, x, t, np.empty(0), np.empty(0), keep=False)
    Z = Z[:, 0]
    return Jets(Z[:nc], Z[nc:2 * nc], Z[3 * nc:], Z[2 * nc:3 * nc])


def predict(params: MlpParams, x, t) -> np.ndarray:
    """Network values only (no derivative jets)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    A = np.column_stack([x, t])
    layers = params.layers
    for W, b in layers[:-1]:
        A = np.tanh(A @ W + b)
    W, b = layers[-1]
    return (A @ W + b)[:, 0]


def forward_with_derivatives(params: MlpParams, x: float, t: float) -> DerivativeBundle:
    j = forward_jets(params, [x], [t])
    return DerivativeBundle(float(j.u[0]), float(j.u_x[0]), float(j.u_t[0]), float(j.u_xx[0]))


def residual(params: MlpParams, x, t, nu: float):
    """Burgers residual u_t + u u_x - nu u_xx; scalar in, scalar out."""
    j = forward_jets(params, x, t)
    r = j.u_t + j.u * j.u_x - nu * j.u_xx
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return float(r[0])
    return r


@dataclass(frozen=True)
class LossWeights:
    lambda_ic: float = 1.0
    lambda_bc: float = 1.0
    lambda_pde: float = 1.0

    def __post_init__(self):
        vals = (self.lambda_ic, self.lambda_bc, self.lambda_pde)
        if any(v < 0 for v in vals):
            raise ValueError(f"loss weights must be nonnegative, got {vals}")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


@dataclass
class TrainingSets:
    """IC and BC points with targets, plus interior collocation points (arrays of (x, t))."""

    ic_points: np.ndarray
    ic_targets: np.ndarray
    bc_points: np.ndarray
    bc_targets: np.ndarray
    colloc: np.ndarray

    def __post_init__(self):
        self.ic_points = np.asarray(self.ic_points, dtype=np.float64).reshape(-1, 2)
        self.bc_points = np.asarray(self.bc_points, dtype=np.float64).reshape(-1, 2)
        self.colloc = np.asarray(self.colloc, dtype=np.float64).reshape(-1, 2)
        self.ic_targets = np.asarray(self.ic_targets, dtype=np.float64).ravel()
        self.bc_targets = np.asarray(self.bc_targets, dtype=np.float64).ravel()

    def with_colloc(self, colloc) -> "TrainingSets":
        return TrainingSets(self.ic_points, self.ic_targets, self.bc_points,
                            self.bc_targets, colloc)


def _check_sets(sets: TrainingSets, weights: LossWeights) -> None:
    for name, n, lam in (("IC", len(sets.ic_points), weights.lambda_ic),
                         ("BC", len(sets.bc_points), weights.lambda_bc),
                         ("collocation", len(sets.colloc), weights.lambda_pde)):
        if n == 0 and lam != 0:
            raise ValueError(f"{name} set is empty but its loss weight is {lam}")


def loss_and_gradient(params: MlpParams, sets: TrainingSets, weights: LossWeights,
                      nu: float, need_grad: bool = True):
    """Composite loss and (optionally) its exact gradient as an ``MlpParams``."""
    _check_sets(sets, weights)
    use_pde = weights.lambda_pde != 0 and len(sets.colloc) > 0
    use_ic = weights.lambda_ic != 0 and len(sets.ic_points) > 0
    use_bc = weights.lambda_bc != 0 and len(sets.bc_points) > 0
    colloc = sets.colloc if use_pde else np.empty((0, 2))
    data_pts = [p for p, on in ((sets.ic_points, use_ic), (sets.bc_points, use_bc)) if on]
    data = np.concatenate(data_pts) if data_pts else np.empty((0, 2))
    nc, nd = len(colloc), len(data)
    ni = len(sets.ic_points) if use_ic else 0
    nv = nc + nd

    Z, tape = _forward(params, colloc[:, 0], colloc[:, 1], data[:, 0], data[:, 1],
                       keep=need_grad)
    z = Z[:, 0]
    u_all = z[:nv]
    u, ux, uxx, ut = u_all[:nc], z[nv:nv + nc], z[nv + nc:nv + 2 * nc], z[nv + 2 * nc:]

    total = 0.0
    g = np.zeros_like(z) if need_grad else None
    if use_pde:
        r = ut + u * ux - nu * uxx
        total += weights.lambda_pde * float(np.mean(r * r))
        if need_grad:
            gr = 2.0 * weights.lambda_pde * r / nc
            g[:nc] += gr * ux
            g[nv:nv + nc] = gr * u
            g[nv + nc:nv + 2 * nc] = -nu * gr
            g[nv + 2 * nc:] = gr
    if use_ic:
        e = u_all[nc:nc + ni] - sets.ic_targets
        total += weights.lambda_ic * float(np.mean(e * e))
        if need_grad:
            g[nc:nc + ni] = 2.0 * weights.lambda_ic * e / ni
    if use_bc:
        nb = len(sets.bc_points)
        e = u_all[nc + ni:nv] - sets.bc_targets
        total += weights.lambda_bc * float(np.mean(e * e))
        if need_grad:
            g[nc + ni:nv] = 2.0 * weights.lambda_bc * e / nb
    if not need_grad:
        return total, None
    return total, _backward(params, tape, g[:, None], nc, nv)


def _backward(params: MlpParams, tape, G: np.ndarray, nc: int, nv: int) -> MlpParams:
    layers = params.layers
    grads: list[np.ndarray] = [None] * (2 * len(layers))
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        A, _, _ = tape[li]
        grads[2 * li] = A.T @ G
        grads[2 * li + 1] = G[:nv].sum(axis=0)
        if li == 0:
            break
        gA = G @ W.T
        _, Z, H = tape[li - 1]
        G = _tanh_jet_backward(gA, Z, H, nc, nv)
    flat = np.concatenate([gr.ravel() for gr in grads])
    return MlpParams(params.widths, flat, params.seed, params.activation)


def loss(params: MlpParams, sets: TrainingSets, weights: LossWeights, nu: float) -> float:
    return loss_and_gradient(params, sets, weights, nu, need_grad=False)[0]


def loss_gradient(params: MlpParams, sets: TrainingSets, weights: LossWeights,
                  nu: float) -> MlpParams:
    return loss_and_gradient(params, sets, weights, nu)[1]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    batch_size: int | None = None  # None: full batch over the collocation set
    lr_decay: float = 1.0  # multiplicative factor applied every `decay_every` steps
    decay_every: int = 1000
    record_every: int = 10

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr < 0:
            raise ValueError(f"learning rate must be nonnegative, got {self.lr}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(np.zeros(params.size), np.zeros(params.size))


# hook(step, params, train_seconds_so_far) may return replacement TrainingSets;
# time spent inside the hook is not counted as training time
StepHook = Callable[[int, MlpParams, float], "TrainingSets | None"]


def train(params: MlpParams, sets: TrainingSets, weights: LossWeights, config: TrainConfig,
          nu: float, hook: StepHook | None = None, hook_every: int = 0,
          state: AdamState | None = None):
    """Adam on the composite loss.

    Returns ``(params, history, elapsed_seconds)`` where history is a list of
    ``(step, loss)`` pairs recorded every ``config.record_every`` steps and at
    the last step.  ``state`` may be passed to continue a previous run.
    """
    params = params.copy()
    state = state or AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    history: list[tuple[int, float]] = []
    elapsed = 0.0
    for step in range(1, config.steps + 1):
        t0 = time.perf_counter()
        batch = sets
        if config.batch_size is not None and config.batch_size < len(sets.colloc):
            idx = rng.choice(len(sets.colloc), size=config.batch_size, replace=False)
            batch = sets.with_colloc(sets.colloc[idx])
        val, grad = loss_and_gradient(params, batch, weights, nu)
        if not np.isfinite(val):
            raise TrainingDivergence(f"non-finite loss at step {step}")
        if step == 1 or step % config.record_every == 0:
            history.append((step - 1, val))
        lr = config.lr * config.lr_decay ** ((step - 1) // config.decay_every)
        _adam_update(params.flat, grad.flat, state, lr, config)
        elapsed += time.perf_counter() - t0
        if hook is not None and hook_every and step % hook_every == 0:
            new_sets = hook(step, params, elapsed)
            if new_sets is not None:
                sets = new_sets
    final = loss(params, sets, weights, nu)
    if not np.isfinite(final):
        raise TrainingDivergence(f"non-finite loss at step {config.steps}")
    history.append((config.steps, final))
    return params, history, elapsed


def _adam_update(theta: np.ndarray, g: np.ndarray, st: AdamState, lr: float,
                 cfg: TrainConfig) -> None:
    st.t += 1
    st.m *= cfg.beta1
    st.m += (1.0 - cfg.beta1) * g
    st.v *= cfg.beta2
    st.v += (1.0 - cfg.beta2) * g * g
    mhat = st.m / (1.0 - cfg.beta1 ** st.t)
    vhat = st.v / (1.0 - cfg.beta2 ** st.t)
    theta -= lr * mhat / (np.sqrt(vhat) + cfg.eps)


_MAGIC = b"PSMLP1\n"


def save_params(params: MlpParams, path) -> None:
    """Flat little-endian float64 payload preceded by a JSON header."""
    header = json.dumps({"widths": list(params.widths), "seed": params.seed,
                         "activation": params.activation, "dtype": "<f8"}).encode()
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a parameter file")
    off = len(_MAGIC)
    (n,) = struct.unpack("<Q", raw[off:off + 8])
    header = json.loads(raw[off + 8:off + 8 + n])
    flat = np.frombuffer(raw[off + 8 + n:], dtype="<f8").astype(np.float64)
    return MlpParams(tuple(header["widths"]), flat, header.get("seed"),
                     header.get("activation", "tanh"))
