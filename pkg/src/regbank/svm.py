"""One-vs-one SVM classification over event descriptors.

Kernels: linear, RBF, exponential chi-square, histogram intersection, and
an extended Gaussian kernel that sums chi-square distances over named
descriptor channels, each scaled by the mean training distance of that
channel. Binary machines are trained by sequential minimal optimization on
a precomputed kernel matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (LengthMismatch, MissingChannel, NegativeEntry,
                     NoConvergence, SingleClass, TooFewSamples)
from .matcher import assign_folds

_BLOCK = 64  # row block size for pairwise distance computations


def chi2_distance(u: np.ndarray, v: np.ndarray) -> float:
    """sum (u_i - v_i)^2 / (u_i + v_i); terms with a zero sum contribute 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise LengthMismatch(f"shapes {u.shape} and {v.shape} differ")
    if (u < 0).any() or (v < 0).any():
        raise NegativeEntry("chi-square distance needs nonnegative entries")
    s = u + v
    diff_sq = (u - v) ** 2
    terms = np.divide(diff_sq, s, out=np.zeros_like(s), where=s > 0)
    return float(terms.sum())


def chi2_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise chi-square distances, shape (len(a), len(b))."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    out = np.empty((len(a), len(b)))
    for start in range(0, len(a), _BLOCK):
        blk = a[start:start + _BLOCK]
        s = blk[:, None, :] + b[None, :, :]
        diff_sq = (blk[:, None, :] - b[None, :, :]) ** 2
        terms = np.divide(diff_sq, s, out=np.zeros_like(s), where=s > 0)
        out[start:start + _BLOCK] = terms.sum(axis=2)
    return out


def hist_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise histogram-intersection values sum min(a_i, b_j)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    out = np.empty((len(a), len(b)))
    for start in range(0, len(a), _BLOCK):
        blk = a[start:start + _BLOCK]
        out[start:start + _BLOCK] = np.minimum(
            blk[:, None, :], b[None, :, :]).sum(axis=2)
    return out


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # linear | rbf | chi2 | hist | extended_gaussian
    gamma: float | None = None
    channels: tuple[str, ...] = ("phi",)
    scales: dict[str, float] | None = None

    def __post_init__(self):
        if self.kind in ("rbf", "chi2"):
            if self.gamma is None or self.gamma <= 0:
                raise ValueError(f"{self.kind} kernel needs gamma > 0")
        if self.kind == "extended_gaussian":
            if not self.scales:
                raise ValueError("extended_gaussian needs channel scales")
            if any(v <= 0 for v in self.scales.values()):
                raise ValueError("channel scales must be positive")

    def describe(self) -> str:
        if self.kind in ("rbf", "chi2"):
            return f"{self.kind}(gamma={self.gamma:g})"
        if self.kind == "extended_gaussian":
            return f"extended_gaussian({','.join(self.channels)})"
        return self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": None if self.gamma is None else float(self.gamma),
            "channels": list(self.channels),
            "scales": None if self.scales is None else
                      {k: float(v) for k, v in self.scales.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "KernelSpec":
        return KernelSpec(
            kind=d["kind"],
            gamma=d["gamma"],
            channels=tuple(d["channels"]),
            scales=d["scales"],
        )


def _channel_matrix(records, channel: str) -> np.ndarray:
    if isinstance(records, np.ndarray):
        return np.atleast_2d(records)
    rows = []
    for r in records:
        if isinstance(r, np.ndarray):
            rows.append(r)
        else:
            if channel not in r:
                raise MissingChannel(f"descriptor lacks channel {channel!r}")
            rows.append(r[channel])
    return np.vstack(rows)


def kernel_matrix(spec: KernelSpec, records_a,
                  records_b=None) -> np.ndarray:
    """Gram matrix between two record collections (or one with itself)."""
    if records_b is None:
        records_b = records_a
    if spec.kind == "extended_gaussian":
        total = None
        for ch in spec.channels:
            a = _channel_matrix(records_a, ch)
            b = _channel_matrix(records_b, ch)
            d = chi2_pairwise(a, b) / spec.scales[ch]
            total = d if total is None else total + d
        return np.exp(-total)
    ch = spec.channels[0]
    a = _channel_matrix(records_a, ch)
    b = _channel_matrix(records_b, ch)
    if spec.kind == "linear":
        return a @ b.T
    if spec.kind == "rbf":
        sq = ((a ** 2).sum(axis=1)[:, None] + (b ** 2).sum(axis=1)[None, :]
              - 2.0 * (a @ b.T))
        return np.exp(-spec.gamma * np.maximum(sq, 0.0))
    if spec.kind == "chi2":
        return np.exp(-spec.gamma * chi2_pairwise(a, b))
    if spec.kind == "hist":
        return hist_pairwise(a, b)
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


def kernel_eval(spec: KernelSpec, e_i, e_j) -> float:
    """Kernel value between two descriptor records."""
    return float(kernel_matrix(spec, [e_i], [e_j])[0, 0])


def channel_scales(records, channels) -> dict[str, float]:
    """Mean pairwise chi-square distance per channel, floored at 1e-12."""
    records = list(records)
    if len(records) < 2:
        raise TooFewSamples("need at least two training events")
    scales = {}
    for ch in channels:
        mat = _channel_matrix(records, ch)
        d = chi2_pairwise(mat, mat)
        n = len(mat)
        mean = d[np.triu_indices(n, k=1)].mean()
        scales[ch] = max(float(mean), 1e-12)
    return scales


def dual_objective(kernel: np.ndarray, y: np.ndarray,
                   alpha: np.ndarray) -> float:
    """Dual SVM objective sum(alpha) - 0.5 * alpha' (yy'K) alpha."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ kernel @ ay)


def kkt_violation(kernel: np.ndarray, y: np.ndarray, alpha: np.ndarray,
                  bias: float, c_reg: float) -> float:
    """Largest KKT violation of the dual solution."""
    f = kernel @ (alpha * y) + bias
    u = y * f
    at_zero = alpha <= 1e-8
    at_c = alpha >= c_reg - 1e-8
    interior = ~(at_zero | at_c)
    v = np.zeros(len(y))
    v[at_zero] = np.maximum(0.0, 1.0 - u[at_zero])
    v[at_c & ~at_zero] = np.maximum(0.0, u[at_c & ~at_zero] - 1.0)
    v[interior] = np.abs(u[interior] - 1.0)
    return float(v.max()) if len(v) else 0.0


class _Smo:
    """Working-set-of-2 SMO over a precomputed kernel matrix."""

    def __init__(self, kernel, y, c_reg, tol):
        self.k = kernel
        self.y = y.astype(np.float64)
        self.c = float(c_reg)
        self.tol = float(tol)
        n = len(y)
        self.alpha = np.zeros(n)
        self.b = 0.0
        self.errors = -self.y.copy()  # f = 0 at the start
        self._pos = 0  # rolling scan offset, keeps selection deterministic

    def _non_bound(self) -> np.ndarray:
        return np.nonzero((self.alpha > 0) & (self.alpha < self.c))[0]

    def _take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - self.c), min(self.c, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(self.c, self.c + a2 - a1)
        if lo >= hi:
            return False
        k11 = self.k[i1, i1]
        k12 = self.k[i1, i2]
        k22 = self.k[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(hi, max(lo, a2_new))
        else:
            # flat direction: evaluate the objective at both clip ends
            f1 = y1 * (e1 + self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (e2 + self.b) - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            lobj = (l1 * f1 + lo * f2 + 0.5 * l1 ** 2 * k11
                    + 0.5 * lo ** 2 * k22 + s * lo * l1 * k12)
            hobj = (h1 * f1 + hi * f2 + 0.5 * h1 ** 2 * k11
                    + 0.5 * hi ** 2 * k22 + s * hi * h1 * k12)
            if lobj < hobj - 1e-12:
                a2_new = lo
            elif lobj > hobj + 1e-12:
                a2_new = hi
            else:
                a2_new = a2
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        d1 = a1_new - a1
        d2 = a2_new - a2
        b1 = self.b - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = self.b - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1_new < self.c:
            b_new = b1
        elif 0.0 < a2_new < self.c:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        self.errors += (y1 * d1 * self.k[i1] + y2 * d2 * self.k[i2]
                        + (b_new - self.b))
        self.alpha[i1] = a1_new
        self.alpha[i2] = a2_new
        self.b = b_new
        return True

    def _examine(self, i2: int) -> int:
        y2 = self.y[i2]
        a2 = self.alpha[i2]
        e2 = self.errors[i2]
        r2 = e2 * y2
        if not ((r2 < -self.tol and a2 < self.c)
                or (r2 > self.tol and a2 > 0)):
            return 0
        non_bound = self._non_bound()
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(self.errors[non_bound] - e2))])
            if self._take_step(i1, i2):
                return 1
        self._pos += 1
        for i1 in np.roll(non_bound, -self._pos):
            if self._take_step(int(i1), i2):
                return 1
        for i1 in np.roll(np.arange(len(self.y)), -self._pos):
            if self._take_step(int(i1), i2):
                return 1
        return 0

    def solve(self, max_sweeps: int = 2000) -> tuple[np.ndarray, float]:
        num_changed = 0
        examine_all = True
        sweeps = 0
        while num_changed > 0 or examine_all:
            sweeps += 1
            if sweeps > max_sweeps:
                raise NoConvergence(
                    f"SMO did not converge within {max_sweeps} sweeps")
            num_changed = 0
            targets = range(len(self.y)) if examine_all else self._non_bound()
            for i2 in targets:
                num_changed += self._examine(int(i2))
            if examine_all:
                examine_all = False
            elif num_changed == 0:
                examine_all = True
        return self.alpha, self.b


def smo_train_binary(kernel: np.ndarray, y: np.ndarray, c_reg: float,
                     tol: float = 1e-3,
                     max_sweeps: int = 2000) -> tuple[np.ndarray, float]:
    """Solve the binary dual problem; returns (alphas, bias).

    The decision function is f(x) = sum_i alpha_i y_i K(x_i, x) + bias.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if kernel.shape != (len(y), len(y)):
        raise LengthMismatch("kernel matrix and labels disagree")
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClass("both labels must be present")
    return _Smo(kernel, y, c_reg, tol).solve(max_sweeps)


@dataclass
class BinaryMachine:
    class_pos: int
    class_neg: int
    sv_records: list
    coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float

    def decision(self, spec: KernelSpec, records) -> np.ndarray:
        k = kernel_matrix(spec, self.sv_records, records)
        return self.coef @ k + self.bias


@dataclass
class SvmModel:
    classes: list[int]
    spec: KernelSpec
    c_reg: float
    machines: list[BinaryMachine] = field(default_factory=list)

    def to_dict(self) -> dict:
        def rec_to_obj(r):
            if isinstance(r, np.ndarray):
                return [float(v) for v in r]
            return {k: [float(v) for v in vec] for k, vec in r.items()}

        return {
            "classes": [int(c) for c in self.classes],
            "spec": self.spec.to_dict(),
            "c_reg": float(self.c_reg),
            "machines": [
                {
                    "class_pos": m.class_pos,
                    "class_neg": m.class_neg,
                    "sv_records": [rec_to_obj(r) for r in m.sv_records],
                    "coef": [float(v) for v in m.coef],
                    "bias": float(m.bias),
                }
                for m in self.machines
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "SvmModel":
        def obj_to_rec(o):
            if isinstance(o, list):
                return np.asarray(o, dtype=np.float64)
            return {k: np.asarray(v, dtype=np.float64) for k, v in o.items()}

        model = SvmModel(
            classes=[int(c) for c in d["classes"]],
            spec=KernelSpec.from_dict(d["spec"]),
            c_reg=float(d["c_reg"]),
        )
        for m in d["machines"]:
            model.machines.append(BinaryMachine(
                class_pos=int(m["class_pos"]),
                class_neg=int(m["class_neg"]),
                sv_records=[obj_to_rec(r) for r in m["sv_records"]],
                coef=np.asarray(m["coef"], dtype=np.float64),
                bias=float(m["bias"]),
            ))
        return model


def _take_records(records, indices):
    return [records[i] for i in indices]


def _train_machines(gram: np.ndarray, labels: np.ndarray, classes: list[int],
                    indices: np.ndarray, c_reg: float,
                    tol: float) -> list[tuple[int, int, np.ndarray,
                                              np.ndarray, float]]:
    """Pairwise machines over a Gram matrix restricted to ``indices``.

    Returns (pos, neg, sv_global_indices, coef, bias) per class pair; the
    positive label goes to the lower class id.
    """
    machines = []
    for a_pos in range(len(classes)):
        for b_pos in range(a_pos + 1, len(classes)):
            ca, cb = classes[a_pos], classes[b_pos]
            sub = indices[(labels[indices] == ca) | (labels[indices] == cb)]
            y = np.where(labels[sub] == ca, 1.0, -1.0)
            k = gram[np.ix_(sub, sub)]
            alpha, bias = smo_train_binary(k, y, c_reg, tol)
            sv = alpha > 1e-8
            machines.append((ca, cb, sub[sv], alpha[sv] * y[sv], bias))
    return machines


def ovo_train(records, labels, spec: KernelSpec, c_reg: float,
              tol: float = 1e-3) -> SvmModel:
    """One binary machine per class pair, trained on a shared Gram matrix."""
    records = list(records)
    labels = np.asarray(labels, dtype=np.int64)
    classes = sorted(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise SingleClass("one-vs-one needs at least two classes")
    gram = kernel_matrix(spec, records)
    model = SvmModel(classes=classes, spec=spec, c_reg=float(c_reg))
    for ca, cb, sv_idx, coef, bias in _train_machines(
            gram, labels, classes, np.arange(len(records)), c_reg, tol):
        model.machines.append(BinaryMachine(
            class_pos=ca, class_neg=cb,
            sv_records=_take_records(records, sv_idx),
            coef=coef, bias=bias))
    return model


def _vote(model: SvmModel, decisions: list[np.ndarray],
          column: int) -> int:
    votes = {c: 0 for c in model.classes}
    magnitude = {c: 0.0 for c in model.classes}
    for machine, dec in zip(model.machines, decisions):
        f = float(dec[column])
        winner = machine.class_pos if f >= 0 else machine.class_neg
        votes[winner] += 1
        magnitude[winner] += abs(f)
    # most votes, then largest summed |decision|, then lowest class id
    return min(model.classes,
               key=lambda c: (-votes[c], -magnitude[c], c))


def ovo_predict(model: SvmModel, record) -> int:
    """Majority vote over the pairwise machines for a single record."""
    return predict_many(model, [record])[0]


def predict_many(model: SvmModel, records) -> list[int]:
    records = list(records)
    decisions = [m.decision(model.spec, records) for m in model.machines]
    return [_vote(model, decisions, j) for j in range(len(records))]


@dataclass
class TuneResult:
    spec: KernelSpec
    c_reg: float
    accuracy: float
    n_fits: int


def tune(records, labels, grid, folds: int = 5, loo: bool = False,
         seed: int = 0, tol: float = 1e-3) -> TuneResult:
    """Cross-validated grid search over (KernelSpec, C) pairs.

    Ties prefer the smallest C, then the smallest kernel parameter. With
    ``loo`` every event forms its own fold.
    """
    records = list(records)
    labels = np.asarray(labels, dtype=np.int64)
    if not grid:
        raise ValueError("grid must be non-empty")
    n = len(records)
    if loo:
        fold_of = np.arange(n)
        k = n
    else:
        k = min(folds, n)
        fold_of = assign_folds([int(v) for v in labels], k,
                               np.random.default_rng([seed, 17]))
    classes = sorted(int(c) for c in np.unique(labels))

    best: TuneResult | None = None
    n_fits = 0
    for spec, c_reg in grid:
        gram = kernel_matrix(spec, records)
        correct = 0
        failed = False
        for fold in range(k):
            train_idx = np.nonzero(fold_of != fold)[0]
            test_idx = np.nonzero(fold_of == fold)[0]
            if len(test_idx) == 0:
                continue
            try:
                machines = _train_machines(gram, labels, classes, train_idx,
                                           c_reg, tol)
            except (SingleClass, NoConvergence):
                failed = True
                break
            n_fits += 1
            decisions = [coef @ gram[np.ix_(sv, test_idx)] + bias
                         for _, _, sv, coef, bias in machines]
            stub = SvmModel(classes=classes,
                            spec=spec, c_reg=c_reg,
                            machines=[BinaryMachine(ca, cb, [], None, 0.0)
                                      for ca, cb, *_ in machines])
            for j, t in enumerate(test_idx):
                if _vote(stub, decisions, j) == labels[t]:
                    correct += 1
        if failed:
            continue
        acc = correct / n
        gamma = spec.gamma if spec.gamma is not None else 0.0
        if best is None:
            best = TuneResult(spec, c_reg, acc, 0)
        else:
            best_gamma = best.spec.gamma if best.spec.gamma is not None else 0.0
            if (acc, -c_reg, -gamma) > (best.accuracy, -best.c_reg,
                                        -best_gamma):
                best = TuneResult(spec, c_reg, acc, 0)
    if best is None:
        raise NoConvergence("no grid point could be fitted")
    best.n_fits = n_fits
    return best
