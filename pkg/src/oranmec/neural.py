"""Minimal dense-network core for the branching Q agents.

A shared trunk (input layer plus two hidden layers, rectifier activations)
feeds one feature head per action branch.  Each head produces a feature
vector; in non-Bayesian operation a bias-free linear output layer on top of
the features yields that branch's Q row, so a branch's Q values are always
an exact linear transformation of its features.

Everything is explicit double-precision numpy: forward passes cache the
activations a subsequent backward pass needs, and gradients for all
parameters (branch errors flowing back into the shared trunk) are formed
without any autodiff dependency.  Networks are single-writer; cloned
target copies are fully independent.
"""
from __future__ import annotations

import copy
import json
import logging

import numpy as np

logger = logging.getLogger("oranmec.neural")

CHECKPOINT_VERSION = 1


class GradientError(ValueError):
    """Rejected update: non-finite gradient."""


class _Dense:
    """Fully connected layer, weights in scaled-uniform fan-in init."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(n_in)
        self.w = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = np.zeros(n_out) if bias else None
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b) if bias else None
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        out = x @ self.w
        if self.b is not None:
            out = out + self.b
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward called before forward")
        self.dw = self._x.T @ dout
        if self.b is not None:
            self.db = dout.sum(axis=0)
        return dout @ self.w.T


class _Relu:
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("backward called before forward")
        return dout * self._mask


class BranchingQNet:
    """Shared trunk with one feature head (and optional Q head) per branch.

    ``branch_sizes[j]`` is the number of sub-actions of branch j; its Q row
    has that many entries.  ``features()`` returns the per-branch feature
    vectors, ``q_values()`` the linear Q rows (requires ``with_heads``).
    """

    def __init__(
        self,
        state_dim: int,
        branch_sizes: list[int],
        trunk_widths: tuple[int, ...] = (256, 256, 256),
        feature_dim: int = 128,
        with_heads: bool = True,
        seed: int | None = None,
    ):
        if len(trunk_widths) < 1:
            raise ValueError("need at least the input-layer width")
        rng = np.random.default_rng(seed)
        self.state_dim = int(state_dim)
        self.branch_sizes = [int(n) for n in branch_sizes]
        self.trunk_widths = tuple(int(w) for w in trunk_widths)
        self.feature_dim = int(feature_dim)
        self.with_heads = bool(with_heads)

        self.trunk: list = []
        n_in = self.state_dim
        for width in self.trunk_widths:
            self.trunk.append(_Dense(n_in, width, rng))
            self.trunk.append(_Relu())
            n_in = width
        self.branch_feature = [
            (_Dense(n_in, self.feature_dim, rng), _Relu()) for _ in self.branch_sizes
        ]
        # Q(s, a) must equal exactly (feature . head-column), so no bias.
        self.heads = (
            [_Dense(self.feature_dim, n, rng, bias=False) for n in self.branch_sizes]
            if self.with_heads
            else []
        )
        self._last_was_forward = False

    @property
    def n_branches(self) -> int:
        return len(self.branch_sizes)

    # -- forward ----------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.state_dim:
            raise ValueError(f"input shape {x.shape}, expected (*, {self.state_dim})")
        return x

    def features(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-branch feature matrices, shape (batch, feature_dim)."""
        h = self._check_input(x)
        for layer in self.trunk:
            h = layer.forward(h)
        phis = []
        for dense, relu in self.branch_feature:
            phis.append(relu.forward(dense.forward(h)))
        self._last_was_forward = True
        return phis

    def q_values(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-branch Q matrices, shape (batch, branch_sizes[j])."""
        if not self.with_heads:
            raise RuntimeError("network was built without Q heads")
        phis = self.features(x)
        return [head.forward(phi) for head, phi in zip(self.heads, phis)]

    # -- backward ---------------------------------------------------------

    def backward_from_features(self, d_phis: list[np.ndarray]) -> None:
        """Backpropagate given the loss gradient at every branch's features."""
        if not self._last_was_forward:
            raise RuntimeError("backward called before forward")
        d_trunk = None
        for (dense, relu), d_phi in zip(self.branch_feature, d_phis):
            d = dense.backward(relu.backward(d_phi))
            d_trunk = d if d_trunk is None else d_trunk + d
        for layer in reversed(self.trunk):
            d_trunk = layer.backward(d_trunk)
        self._last_was_forward = False

    def backward_from_q(self, d_qs: list[np.ndarray]) -> None:
        """Backpropagate given the loss gradient at every branch's Q row."""
        if not self.with_heads:
            raise RuntimeError("network was built without Q heads")
        d_phis = [head.backward(d_q) for head, d_q in zip(self.heads, d_qs)]
        self.backward_from_features(d_phis)

    # -- parameter plumbing -------------------------------------------------

    def _layers(self) -> list[_Dense]:
        dense = [l for l in self.trunk if isinstance(l, _Dense)]
        dense += [d for d, _ in self.branch_feature]
        dense += list(self.heads)
        return dense

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self._layers():
            params.append(layer.w)
            if layer.b is not None:
                params.append(layer.b)
        return params

    def gradients(self) -> list[np.ndarray]:
        grads = []
        for layer in self._layers():
            grads.append(layer.dw)
            if layer.b is not None:
                grads.append(layer.db)
        return grads

    def clone(self) -> "BranchingQNet":
        """Independent deep copy (activation caches dropped)."""
        twin = copy.deepcopy(self)
        twin._last_was_forward = False
        for layer in twin.trunk:
            if isinstance(layer, _Dense):
                layer._x = None
            else:
                layer._mask = None
        for dense, relu in twin.branch_feature:
            dense._x = None
            relu._mask = None
        for head in twin.heads:
            head._x = None
        return twin

    def copy_from(self, other: "BranchingQNet") -> None:
        mine, theirs = self.parameters(), other.parameters()
        if len(mine) != len(theirs):
            raise ValueError("parameter lists differ")
        for p, q in zip(mine, theirs):
            if p.shape != q.shape:
                raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
            p[...] = q

    # -- serialization ------------------------------------------------------

    def arch(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "branch_sizes": self.branch_sizes,
            "trunk_widths": list(self.trunk_widths),
            "feature_dim": self.feature_dim,
            "with_heads": self.with_heads,
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        return {f"param_{i}": p for i, p in enumerate(self.parameters())}

    def load_state_dict(self, blobs: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if len(blobs) != len(params):
            raise ValueError(f"expected {len(params)} tensors, got {len(blobs)}")
        for i, p in enumerate(params):
            tensor = blobs[f"param_{i}"]
            if tensor.shape != p.shape:
                raise ValueError(
                    f"param_{i}: shape {tensor.shape} does not match {p.shape}"
                )
            p[...] = tensor


def clone_into_target(net: BranchingQNet) -> BranchingQNet:
    return net.clone()


class Adam:
    """Standard Adam with bias correction; rejects non-finite gradients."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match {p.shape}")
            if not np.all(np.isfinite(g)):
                raise GradientError("non-finite gradient, update rejected")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_dict(self) -> dict:
        out: dict[str, np.ndarray] = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam_m_{i}"] = m
            out[f"adam_v_{i}"] = v
        return {"tensors": out, "t": self.t}

    def load_state_dict(self, tensors: dict[str, np.ndarray], t: int) -> None:
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            src_m, src_v = tensors[f"adam_m_{i}"], tensors[f"adam_v_{i}"]
            if src_m.shape != m.shape or src_v.shape != v.shape:
                raise ValueError(f"adam moment {i}: shape mismatch")
            m[...] = src_m
            v[...] = src_v
        self.t = int(t)


def save_checkpoint(path, net: BranchingQNet, adam: Adam | None = None, extra: dict | None = None) -> None:
    """Dump network (and optionally optimizer/posterior state) to one file.

    The archive carries a json header with the architecture; loading
    validates every tensor shape against it.
    """
    blobs: dict[str, np.ndarray] = dict(net.state_dict())
    meta = {"version": CHECKPOINT_VERSION, "arch": net.arch(), "adam_t": None}
    if adam is not None:
        st = adam.state_dict()
        blobs.update(st["tensors"])
        meta["adam_t"] = st["t"]
    if extra:
        for key, arr in extra.items():
            blobs[f"extra_{key}"] = np.asarray(arr)
        meta["extra_keys"] = sorted(extra.keys())
    blobs["_meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **blobs)


def load_checkpoint(path) -> dict:
    """Read a checkpoint into {meta, params, adam, extra} dictionaries."""
    with np.load(path) as archive:
        blobs = {k: archive[k] for k in archive.files}
    meta = json.loads(bytes(blobs.pop("_meta")).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    params = {k: v for k, v in blobs.items() if k.startswith("param_")}
    adam = {k: v for k, v in blobs.items() if k.startswith("adam_")}
    extra = {k[len("extra_"):]: v for k, v in blobs.items() if k.startswith("extra_")}
    return {"meta": meta, "params": params, "adam": adam, "extra": extra}


def build_net_from_checkpoint(data: dict, with_adam: bool = True) -> tuple[BranchingQNet, Adam | None]:
    arch = data["meta"]["arch"]
    net = BranchingQNet(
        state_dim=arch["state_dim"],
        branch_sizes=arch["branch_sizes"],
        trunk_widths=tuple(arch["trunk_widths"]),
        feature_dim=arch["feature_dim"],
        with_heads=arch["with_heads"],
        seed=0,
    )
    net.load_state_dict(data["params"])
    adam = None
    if with_adam and data["meta"].get("adam_t") is not None:
        adam = Adam(net.parameters())
        adam.load_state_dict(data["adam"], data["meta"]["adam_t"])
    return net, adam
