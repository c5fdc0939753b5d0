"""Variational quantum encoder with a classical decoder.

Feature vectors are angle-encoded into an exact statevector simulation
(qubit q gets RY(scale * x[q mod dim])), run through a hardware-efficient
ansatz (per layer: one RY per qubit, then a CNOT ring), and read out as
Pauli-Z expectations, which form the latent mean vector. A learned global
log-variance and the reparameterization trick produce sampled latents; a
two-layer tanh decoder reconstructs the input. Circuit angles train with the
exact parameter-shift rule, everything classical with reverse-mode autodiff.

Qubit q maps to axis q of the amplitude tensor, so basis index
sum_q(bit_q * 2^(n-1-q)) — ket |10> means qubit 0 is 1. Expectations are
computed exactly from amplitudes; there is no measurement sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .data_ingest import DatasetTable
from .diffcore import Graph, ParamStore, adam_step
from .errors import QubitOutOfRange

# --- gates ----------------------------------------------------------------


@dataclass(frozen=True)
class RY:
    theta: float
    qubit: int


@dataclass(frozen=True)
class CNOT:
    control: int
    target: int


@dataclass(frozen=True)
class H:
    qubit: int


@dataclass(frozen=True)
class X:
    qubit: int


@dataclass(frozen=True, eq=False)
class Statevector:
    """Complex amplitudes of an n-qubit pure state."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(f"amplitude vector must have length 2^{self.n_qubits}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amplitudes=amps, n_qubits=n_qubits)

    def norm(self) -> float:
        return float(np.sqrt((np.abs(self.amplitudes) ** 2).sum()))


# Batched kernels: states has shape (batch, 2**n) and is mutated in place.
# They are dtype-agnostic; the encode path runs them on float64 because the
# RY/CNOT circuit never leaves the real subspace, public gates use complex.


def _split_on_qubit(states: np.ndarray, q: int, n: int):
    """View grouping the target qubit's axis: (batch, 2^q, 2, 2^(n-q-1))."""
    batch = states.shape[0]
    return states.reshape(batch, 1 << q, 2, 1 << (n - q - 1))


def _apply_1q(states: np.ndarray, mat: np.ndarray, q: int, n: int):
    v = _split_on_qubit(states, q, n)
    a0 = v[:, :, 0, :]
    a1 = v[:, :, 1, :]
    new0 = mat[0, 0] * a0 + mat[0, 1] * a1
    v[:, :, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1
    v[:, :, 0, :] = new0


def _apply_ry(states: np.ndarray, theta, q: int, n: int):
    """RY with a scalar angle or one angle per batch row."""
    c = np.cos(np.asarray(theta) / 2.0)
    s = np.sin(np.asarray(theta) / 2.0)
    if c.ndim:
        c = c.reshape(-1, 1, 1)
        s = s.reshape(-1, 1, 1)
    v = _split_on_qubit(states, q, n)
    a0 = v[:, :, 0, :]
    a1 = v[:, :, 1, :]
    new0 = c * a0 - s * a1
    v[:, :, 1, :] = s * a0 + c * a1
    v[:, :, 0, :] = new0


def _apply_cnot(states: np.ndarray, control: int, target: int, n: int):
    batch = states.shape[0]
    lo, hi = sorted((control, target))
    v = states.reshape(batch, 1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - hi - 1))
    if control < target:
        tmp = v[:, :, 1, :, 0, :].copy()
        v[:, :, 1, :, 0, :] = v[:, :, 1, :, 1, :]
        v[:, :, 1, :, 1, :] = tmp
    else:
        tmp = v[:, :, 0, :, 1, :].copy()
        v[:, :, 0, :, 1, :] = v[:, :, 1, :, 1, :]
        v[:, :, 1, :, 1, :] = tmp


@lru_cache(maxsize=None)
def _z_signs(n: int) -> np.ndarray:
    """(2^n, n) matrix of +1/-1: sign of Z on qubit q for each basis state."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


_H_MAT = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)
_X_MAT = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)


def apply_gate(state: Statevector, gate) -> Statevector:
    """Apply one gate, returning a new statevector (norm is preserved)."""
    n = state.n_qubits

    def check(q):
        if not 0 <= q < n:
            raise QubitOutOfRange(q, n)

    amps = state.amplitudes.copy().reshape(1, -1)
    if isinstance(gate, RY):
        check(gate.qubit)
        _apply_ry(amps, gate.theta, gate.qubit, n)
    elif isinstance(gate, CNOT):
        check(gate.control)
        check(gate.target)
        if gate.control == gate.target:
            raise ValueError("CNOT control and target must differ")
        _apply_cnot(amps, gate.control, gate.target, n)
    elif isinstance(gate, H):
        check(gate.qubit)
        _apply_1q(amps, _H_MAT, gate.qubit, n)
    elif isinstance(gate, X):
        check(gate.qubit)
        _apply_1q(amps, _X_MAT, gate.qubit, n)
    else:
        raise TypeError(f"unsupported gate {gate!r}")
    return Statevector(amplitudes=amps.reshape(-1), n_qubits=n)


def z_expectations(state: Statevector) -> np.ndarray:
    """Exact <Z_q> for every qubit, each in [-1, 1]."""
    probs = np.abs(state.amplitudes) ** 2
    return probs @ _z_signs(state.n_qubits)


# --- model ------------------------------------------------------------------


@dataclass
class Ansatz:
    """RY-per-qubit layers joined by CNOT rings; angles live in `thetas`."""

    n_qubits: int
    n_layers: int
    thetas: np.ndarray  # shape (n_layers, n_qubits), shared with the ParamStore


@dataclass
class LatentVector:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray | None = None


@dataclass
class QvaeModel:
    ansatz: Ansatz
    encoding_scale: float
    beta: float
    n_features: int
    hidden: int
    params: ParamStore

    @classmethod
    def create(
        cls,
        n_features: int,
        n_qubits: int = 8,
        n_layers: int = 2,
        encoding_scale: float = 0.5,
        beta: float = 0.005,
        hidden: int = 32,
        seed: int = 0,
    ) -> "QvaeModel":
        rng = np.random.default_rng(seed)
        params = ParamStore()
        thetas = params.add("thetas", rng.normal(0.0, 0.1, size=(n_layers, n_qubits)))
        params.add("logvar", np.full((1, n_qubits), -6.0))
        params.add("dec.w1", rng.normal(0.0, 1.0, size=(n_qubits, hidden)) / np.sqrt(n_qubits))
        params.add("dec.b1", np.zeros((1, hidden)))
        params.add("dec.w2", rng.normal(0.0, 1.0, size=(hidden, n_features)) / np.sqrt(hidden))
        params.add("dec.b2", np.zeros((1, n_features)))
        ansatz = Ansatz(n_qubits=n_qubits, n_layers=n_layers, thetas=thetas)
        return cls(
            ansatz=ansatz,
            encoding_scale=encoding_scale,
            beta=beta,
            n_features=n_features,
            hidden=hidden,
            params=params,
        )

    @property
    def logvar(self) -> np.ndarray:
        return self.params.get("logvar").reshape(-1)

    @property
    def latent_dim(self) -> int:
        return self.ansatz.n_qubits


def _encode_mu(model: QvaeModel, x_batch: np.ndarray, thetas: np.ndarray | None = None) -> np.ndarray:
    """Run the circuit for a whole batch and return <Z> per qubit, (B, n_qubits)."""
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    n = model.ansatz.n_qubits
    angles = model.ansatz.thetas if thetas is None else thetas
    batch, dim = x_batch.shape
    # RY and CNOT are real matrices and the initial state is real, so the
    # whole encoding circuit stays in the real subspace.
    states = np.zeros((batch, 2**n))
    states[:, 0] = 1.0
    for q in range(n):
        _apply_ry(states, model.encoding_scale * x_batch[:, q % dim], q, n)
    for layer in range(model.ansatz.n_layers):
        for q in range(n):
            _apply_ry(states, angles[layer, q], q, n)
        if n > 1:
            for q in range(n):
                _apply_cnot(states, q, (q + 1) % n, n)
    return (states * states) @ _z_signs(n)


def encode(model: QvaeModel, x: np.ndarray) -> LatentVector:
    """Latent mean from the circuit; z stays unset until reparameterize."""
    mu = _encode_mu(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    return LatentVector(mu=mu, logvar=model.logvar.copy(), z=None)


def reparameterize(lat: LatentVector, eps: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * eps, with caller-supplied normal draws."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != lat.mu.shape:
        raise ValueError(f"eps shape {eps.shape} must match latent dim {lat.mu.shape}")
    return lat.mu + np.exp(lat.logvar / 2.0) * eps


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(q(z|x) || N(0, I)) for a diagonal Gaussian."""
    return float(0.5 * np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar))


def vae_loss(x: np.ndarray, x_hat: np.ndarray, lat: LatentVector, beta: float) -> float:
    """Reconstruction MSE plus beta-weighted KL to the unit Gaussian prior."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"x shape {x.shape} and x_hat shape {x_hat.shape} differ")
    return float(np.mean((x - x_hat) ** 2)) + beta * kl_divergence(lat.mu, lat.logvar)


def parameter_shift_grad(model: QvaeModel, x: np.ndarray, downstream_grad: np.ndarray) -> np.ndarray:
    """dLoss/dthetas via the exact +-pi/2 shift rule, chained with dLoss/dmu."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    downstream = np.asarray(downstream_grad, dtype=np.float64).reshape(1, -1)
    return _theta_shift_grads(model, x, downstream)


def _run_layer(states: np.ndarray, angles_row: np.ndarray, n: int):
    for q in range(n):
        _apply_ry(states, angles_row[q], q, n)
    if n > 1:
        for q in range(n):
            _apply_cnot(states, q, (q + 1) % n, n)


def _theta_shift_grads(model: QvaeModel, x_batch: np.ndarray, downstream: np.ndarray) -> np.ndarray:
    """Batched parameter-shift: two circuit evaluations per angle.

    The circuit prefix up to the shifted layer is identical across shifts,
    so it is computed once per layer; the cached states make each shifted
    evaluation bit-identical to a from-scratch run.
    """
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    thetas = model.ansatz.thetas
    n = model.ansatz.n_qubits
    n_layers, _ = thetas.shape
    batch, dim = x_batch.shape
    signs = _z_signs(n)

    prefix = np.zeros((batch, 2**n))
    prefix[:, 0] = 1.0
    for q in range(n):
        _apply_ry(prefix, model.encoding_scale * x_batch[:, q % dim], q, n)

    grads = np.zeros_like(thetas)
    for layer in range(n_layers):
        for q in range(n):
            mus = []
            for shift in (np.pi / 2.0, -np.pi / 2.0):
                states = prefix.copy()
                row = thetas[layer].copy()
                row[q] += shift
                _run_layer(states, row, n)
                for later in range(layer + 1, n_layers):
                    _run_layer(states, thetas[later], n)
                mus.append((states * states) @ signs)
            grads[layer, q] = np.sum(downstream * (mus[0] - mus[1]) / 2.0)
        _run_layer(prefix, thetas[layer], n)
    return grads


def decode_batch(model: QvaeModel, z_batch: np.ndarray) -> np.ndarray:
    """Decoder forward pass without graph bookkeeping."""
    p = model.params
    h = np.tanh(z_batch @ p.get("dec.w1") + p.get("dec.b1"))
    return h @ p.get("dec.w2") + p.get("dec.b2")


def train_qvae(
    data: DatasetTable,
    model: QvaeModel,
    epochs: int,
    batch_size: int,
    lr: float,
    weight_decay: float,
    seed: int,
) -> tuple[QvaeModel, list[float]]:
    """Minibatch ELBO-style training; returns the model and epoch-mean losses.

    Decoder weights and logvar update from autodiff gradients, circuit
    angles from parameter-shift gradients chained through dLoss/dmu. Fully
    deterministic for a fixed seed.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    X = data.features
    n_rows = X.shape[0]
    rng = np.random.default_rng(seed)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(n_rows)
        total, count = 0.0, 0
        for start in range(0, n_rows, batch_size):
            xb = X[order[start : start + batch_size]]
            b = xb.shape[0]
            mu = _encode_mu(model, xb)
            eps = rng.standard_normal(mu.shape)
            logvar = model.params.get("logvar")
            sigma = np.exp(logvar / 2.0)
            z = mu + sigma * eps

            graph = Graph()
            z_in = graph.input(z)
            h = graph.tanh(
                graph.add(
                    graph.matmul(z_in, graph.param("dec.w1", model.params.get("dec.w1"))),
                    graph.param("dec.b1", model.params.get("dec.b1")),
                )
            )
            x_hat = graph.add(
                graph.matmul(h, graph.param("dec.w2", model.params.get("dec.w2"))),
                graph.param("dec.b2", model.params.get("dec.b2")),
            )
            rec = graph.mse(x_hat, graph.input(xb))
            grads = graph.backward(rec)

            kl_mean = float(
                0.5 * np.mean(np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar, axis=1))
            )
            batch_loss = float(rec.value[0, 0]) + model.beta * kl_mean

            dz = z_in.grad
            dmu = dz + model.beta * mu / b
            grads["logvar"] = (dz * 0.5 * sigma * eps).sum(axis=0, keepdims=True) + (
                model.beta * 0.5 * (np.exp(logvar) - 1.0)
            )
            grads["thetas"] = _theta_shift_grads(model, xb, dmu)
            adam_step(model.params, grads, lr=lr, weight_decay=weight_decay)

            total += batch_loss * b
            count += b
        curve.append(total / count)
    return model, curve


def encode_table(model: QvaeModel, table: DatasetTable, batch_size: int = 256) -> np.ndarray:
    """Latent mean matrix for every row of a table."""
    out = np.empty((table.rows, model.latent_dim))
    for start in range(0, table.rows, batch_size):
        out[start : start + batch_size] = _encode_mu(model, table.features[start : start + batch_size])
    return out


# --- persistence -------------------------------------------------------------


def save_qvae(model: QvaeModel, bin_path: str, json_path: str):
    import json

    model.params.save(bin_path)
    sidecar = {
        "n_qubits": model.ansatz.n_qubits,
        "n_layers": model.ansatz.n_layers,
        "encoding_scale": model.encoding_scale,
        "beta": model.beta,
        "n_features": model.n_features,
        "hidden": model.hidden,
        "thetas": model.ansatz.thetas.reshape(-1).tolist(),
        "logvar": model.logvar.tolist(),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_qvae(bin_path: str, json_path: str) -> QvaeModel:
    import json

    with open(json_path, "r", encoding="utf-8") as fh:
        side = json.load(fh)
    params = ParamStore.load(bin_path)
    ansatz = Ansatz(
        n_qubits=side["n_qubits"], n_layers=side["n_layers"], thetas=params.get("thetas")
    )
    return QvaeModel(
        ansatz=ansatz,
        encoding_scale=side["encoding_scale"],
        beta=side["beta"],
        n_features=side["n_features"],
        hidden=side["hidden"],
        params=params,
    )
