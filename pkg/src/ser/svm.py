"""RBF-kernel SVM trained by simplified SMO, with one-vs-one multiclass voting."""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ser.rng import Rng
from ser.tensorfile import pack_tensor, unpack_tensor


class SvmError(ValueError):
    pass


def rbf_kernel(x, y, gamma: float) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise SvmError(f"dimension mismatch {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise SvmError("gamma must be positive")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(a, b, gamma: float) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SvmBinary:
    support_vectors: np.ndarray  # (n_sv, d)
    dual_coef: np.ndarray  # alpha_i * y_i, (n_sv,)
    bias: float
    gamma: float
    C: float

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if len(self.dual_coef) == 0:
            return np.full(len(x), self.bias)
        return rbf_matrix(x, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, x) -> np.ndarray:
        return np.where(self.decision_function(x) >= 0, 1, -1)


def kkt_violation(alpha, y, f, C, tol) -> np.ndarray:
    """Boolean mask of points whose margin y*f breaks the KKT conditions by more than tol."""
    r = y * f - 1.0
    return ((alpha < C) & (r < -tol)) | ((alpha > 0) & (r > tol))


def _snap(a: float, C: float) -> float:
    # pin roundoff-level distances to the box bounds exactly onto them
    eps = 1e-12 * C
    return 0.0 if a < eps else C if a > C - eps else float(a)


def smo_train_binary(X, y, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
                     max_passes: int = 1000, seed: int = 0, return_alpha: bool = False):
    """Simplified SMO.

    Each KKT-violating point i is paired with a random j; if that pair cannot
    move, the remaining j are tried in random order. Training stops after a
    full pass finds no violation, so the returned model satisfies the KKT
    conditions within ``tol`` unless ``max_passes`` runs out first.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise SvmError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise SvmError("features must be finite")
    if len(X) < 2 or not (np.any(y == 1) and np.any(y == -1)) or np.any(np.abs(y) != 1):
        raise SvmError("need at least one +1 and one -1 label")
    n = len(y)
    K = rbf_matrix(X, X, gamma)
    alpha = np.zeros(n)
    b = 0.0
    f = np.zeros(n)  # decision values without bias: sum_k alpha_k y_k K[k, i]
    rng = Rng(seed)

    def take_step(i, j):
        nonlocal b
        if i == j:
            return False
        Ei = f[i] + b - y[i]
        Ej = f[j] + b - y[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        if H - L < 1e-12:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= -1e-12:
            return False
        aj_new = float(np.clip(aj - y[j] * (Ei - Ej) / eta, L, H))
        if abs(aj_new - aj) < 1e-10 * (aj_new + aj + 1e-10):
            return False
        ai_new = _snap(ai + y[i] * y[j] * (aj - aj_new), C)
        aj_new = _snap(aj_new, C)
        b1 = b - Ei - y[i] * (ai_new - ai) * K[i, i] - y[j] * (aj_new - aj) * K[i, j]
        b2 = b - Ej - y[i] * (ai_new - ai) * K[i, j] - y[j] * (aj_new - aj) * K[j, j]
        if 0 < ai_new < C:
            b = b1
        elif 0 < aj_new < C:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        f[:] += y[i] * (ai_new - ai) * K[i] + y[j] * (aj_new - aj) * K[j]
        alpha[i], alpha[j] = ai_new, aj_new
        return True

    def refit_bias():
        # threshold consistent with the current alphas: mean over free vectors,
        # else the midpoint of the interval allowed by bound vectors
        free = (alpha > 0) & (alpha < C)
        if np.any(free):
            return float(np.mean(y[free] - f[free]))
        r = y - f
        # y=+1 at 0 and y=-1 at C need y*(f+b) >= 1 resp. <= 1, i.e. b >= r;
        # the other two cases give b <= r
        lower_side = ((y > 0) & (alpha == 0)) | ((y < 0) & (alpha >= C))
        lo = r[lower_side].max() if np.any(lower_side) else -np.inf
        hi = r[~lower_side].min() if np.any(~lower_side) else np.inf
        if np.isinf(lo) or np.isinf(hi):
            return float(hi if np.isinf(lo) else lo)
        return 0.5 * (lo + hi)

    for _ in range(max_passes):
        f[:] = K @ (alpha * y)  # refresh: incremental updates drift
        b = refit_bias()
        violators = np.flatnonzero(kkt_violation(alpha, y, f + b, C, tol))
        if len(violators) == 0:
            break
        for i in violators:
            if not kkt_violation(alpha[i : i + 1], y[i : i + 1], f[i : i + 1] + b, C, tol)[0]:
                continue
            j = rng.integers(0, n - 1)
            j = j + 1 if j >= i else j
            if take_step(i, j):
                continue
            for j in rng.permutation(n):
                if take_step(i, int(j)):
                    break
    keep = alpha > 0
    model = SvmBinary(X[keep].copy(), (alpha * y)[keep], float(b), float(gamma), float(C))
    return (model, alpha) if return_alpha else model


@dataclass
class SvmMulti:
    classes: list  # class codes, ascending
    models: dict  # (a, b) with a < b -> SvmBinary; +1 means class a
    mean: np.ndarray
    std: np.ndarray
    gamma: float
    C: float
    meta: dict = field(default_factory=dict)

    def standardize(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.mean) / self.std

    def votes(self, X) -> np.ndarray:
        Z = self.standardize(X)
        n_codes = max(self.classes) + 1
        votes = np.zeros((len(Z), n_codes), dtype=np.int64)
        for (a, b), m in self.models.items():
            win_a = m.decision_function(Z) >= 0
            votes[win_a, a] += 1
            votes[~win_a, b] += 1
        return votes

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lowest class code
        return self.votes(X).argmax(axis=1)

    def pair_predict(self, X, a: int, b: int) -> np.ndarray:
        """Prediction of the single binary model for the pair (a, b)."""
        m = self.models[(min(a, b), max(a, b))]
        return np.where(m.decision_function(self.standardize(X)) >= 0, min(a, b), max(a, b))


def ovo_train(X, labels, C: float = 1.0, gamma: float | None = None, tol: float = 1e-3,
              max_passes: int = 1000, seed: int = 0, classes=None) -> SvmMulti:
    """Standardize features, then train one binary SMO model per class pair.

    ``gamma`` defaults to 1 / (d * var(Z)) on the standardized training data.
    ``classes`` lists codes that must be present (default: the labels seen).
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    present = sorted(set(labels.tolist()))
    wanted = sorted(set(int(c) for c in classes)) if classes is not None else present
    missing = [c for c in wanted if c not in present]
    if missing:
        raise SvmError(f"classes absent at train time: {missing}")
    if len(wanted) < 2:
        raise SvmError("need at least two classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Z = (X - mean) / std
    if gamma is None:
        var = Z.var()
        gamma = 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
    models = {}
    for k, (a, b) in enumerate(itertools.combinations(wanted, 2)):
        mask = (labels == a) | (labels == b)
        y = np.where(labels[mask] == a, 1.0, -1.0)
        models[(a, b)] = smo_train_binary(Z[mask], y, C, gamma, tol, max_passes, seed=seed + k)
    return SvmMulti(wanted, models, mean, std, float(gamma), float(C))


def ovo_predict(m: SvmMulti, x) -> int:
    return int(m.predict(np.atleast_2d(x))[0])


# --- model file: u32 header length, JSON header, then SERT blocks ------------

def save_svm(m: SvmMulti) -> bytes:
    pairs = sorted(m.models)
    header = {
        "format": "ser-svm",
        "version": 1,
        "gamma": m.gamma,
        "C": m.C,
        "classes": m.classes,
        "pairs": [[a, b, m.models[(a, b)].bias] for a, b in pairs],
        "meta": m.meta,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blocks = [pack_tensor(m.mean), pack_tensor(m.std)]
    for p in pairs:
        sv = m.models[p].support_vectors
        blocks.append(pack_tensor(sv.reshape(len(sv), -1) if sv.size else np.zeros((0, len(m.mean)))))
        blocks.append(pack_tensor(m.models[p].dual_coef))
    return struct.pack("<I", len(head)) + head + b"".join(blocks)


def load_svm(data: bytes) -> SvmMulti:
    try:
        (hlen,) = struct.unpack_from("<I", data, 0)
        header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SvmError(f"not an SVM model file: {exc}") from None
    if header.get("format") != "ser-svm":
        raise SvmError("not an SVM model file")
    pos = 4 + hlen
    mean, pos = unpack_tensor(data, pos)
    std, pos = unpack_tensor(data, pos)
    models = {}
    for a, b, bias in header["pairs"]:
        sv, pos = unpack_tensor(data, pos)
        coef, pos = unpack_tensor(data, pos)
        models[(a, b)] = SvmBinary(sv.astype(np.float64), coef.astype(np.float64), float(bias),
                                   header["gamma"], header["C"])
    return SvmMulti(header["classes"], models, mean.astype(np.float64), std.astype(np.float64),
                    header["gamma"], header["C"], header.get("meta", {}))
