"""Matrix operations with hand-derived backward rules on a replay tape.

Values are 2-D float64 numpy arrays wrapped in :class:`Tensor`; sparse
operands are scipy CSR matrices and are never differentiated. Every forward
op optionally records one backward callback on a :class:`GradTape`; calling
``tape.backward(loss)`` replays the callbacks in strict reverse order of the
forward execution and accumulates gradients into ``Tensor.grad``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class ConfigError(ValueError):
    """A configuration value is outside its legal range."""


def _check_finite(name: str, arr: np.ndarray) -> None:
    # Debug assertion: forward passes must stay NaN/Inf-free on finite inputs.
    # A finite sum proves all entries finite; on a non-finite sum, re-check
    # precisely so a merely overflowing sum of finite values cannot raise.
    if __debug__ and not np.isfinite(arr.sum()):
        if not np.all(np.isfinite(arr)):
            raise ArithmeticError(f"non-finite values in output of {name}")


class Tensor:
    """A 2-D float64 value with a lazily allocated gradient buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim != 2:
            raise ShapeError(f"Tensor wants a matrix, got ndim={v.ndim}")
        self.value = v
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    # ``own=True`` promises g is a freshly allocated temporary that nobody
    # else references, so the first contribution can be adopted without a
    # copy; shared buffers (e.g. the upstream grad itself) must stay
    # copy-on-first-write because later contributions add in place.
    if t.grad is None:
        t.grad = g if own else np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


class GradTape:
    """Ordered log of (op name, backward callback), replayed in reverse."""

    def __init__(self):
        self._records: list[tuple[str, object]] = []

    def record(self, name: str, backward) -> None:
        self._records.append((name, backward))

    def __len__(self) -> int:
        return len(self._records)

    def op_names(self) -> list[str]:
        return [name for name, _ in self._records]

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and replay all backward rules."""
        if loss.grad is None:
            loss.grad = np.ones_like(loss.value)
        for _, fn in reversed(self._records):
            fn()


def validate_csr(a: sp.csr_matrix) -> sp.csr_matrix:
    """Enforce the sparse-matrix invariants: canonical CSR, finite values."""
    if not sp.issparse(a):
        raise TypeError("expected a scipy sparse matrix")
    a = a.tocsr()
    a.sum_duplicates()
    a.sort_indices()
    if a.indices.size and int(a.indices.max()) >= a.shape[1]:
        raise ShapeError("sparse column index out of range")
    if not np.all(np.isfinite(a.data)):
        raise ValueError("sparse matrix holds non-finite values")
    return a


# ---------------------------------------------------------------------------
# forward ops, each with its backward rule
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    """C = A @ B; backward dA = dC @ B^T, dB = A^T @ dC."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = Tensor(a.value @ b.value)
    _check_finite("matmul", out.value)
    if tape is not None:
        def backward():
            _accumulate(a, out.grad @ b.value.T, own=True)
            _accumulate(b, a.value.T @ out.grad, own=True)
        tape.record("matmul", backward)
    return out


def const_matmul(x: np.ndarray, b: Tensor, tape: GradTape | None = None) -> Tensor:
    """C = x @ B with a non-learnable left operand; backward only into B."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != b.rows:
        raise ShapeError(f"const_matmul: {x.shape} @ {b.shape}")
    out = Tensor(x @ b.value)
    _check_finite("const_matmul", out.value)
    if tape is not None:
        def backward():
            _accumulate(b, x.T @ out.grad, own=True)
        tape.record("const_matmul", backward)
    return out


def sparse_dense_matmul(a: sp.csr_matrix, b: Tensor,
                        tape: GradTape | None = None) -> Tensor:
    """C = A @ B for sparse A; A is non-learnable so backward flows into B only."""
    if a.shape[1] != b.rows:
        raise ShapeError(f"sparse_dense_matmul: {a.shape} @ {b.shape}")
    out = Tensor(a @ b.value)
    _check_finite("sparse_dense_matmul", out.value)
    if tape is not None:
        def backward():
            _accumulate(b, a.T @ out.grad, own=True)
        tape.record("sparse_dense_matmul", backward)
    return out


def add(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} + {b.shape}")
    out = Tensor(a.value + b.value)
    _check_finite("add", out.value)
    if tape is not None:
        def backward():
            _accumulate(a, out.grad)
            _accumulate(b, out.grad)
        tape.record("add", backward)
    return out


def add_bias(x: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    """Row-broadcast bias: C = X + b with b of shape 1 x d."""
    if b.rows != 1 or b.cols != x.cols:
        raise ShapeError(f"add_bias: {x.shape} + {b.shape}")
    out = Tensor(x.value + b.value)
    _check_finite("add_bias", out.value)
    if tape is not None:
        def backward():
            _accumulate(x, out.grad)
            _accumulate(b, out.grad.sum(axis=0, keepdims=True), own=True)
        tape.record("add_bias", backward)
    return out


def add_const(x: Tensor, c: float, tape: GradTape | None = None) -> Tensor:
    out = Tensor(x.value + c)
    _check_finite("add_const", out.value)
    if tape is not None:
        def backward():
            _accumulate(x, out.grad)
        tape.record("add_const", backward)
    return out


def scale_const(x: Tensor, c: float, tape: GradTape | None = None) -> Tensor:
    out = Tensor(x.value * c)
    _check_finite("scale_const", out.value)
    if tape is not None:
        def backward():
            _accumulate(x, c * out.grad, own=True)
        tape.record("scale_const", backward)
    return out


def scale(x: Tensor, s: Tensor, tape: GradTape | None = None) -> Tensor:
    """C = s * X for a learnable 1x1 scalar s."""
    if s.shape != (1, 1):
        raise ShapeError(f"scale wants a 1x1 scalar, got {s.shape}")
    out = Tensor(s.item() * x.value)
    _check_finite("scale", out.value)
    if tape is not None:
        def backward():
            _accumulate(x, s.item() * out.grad, own=True)
            _accumulate(s, np.array([[np.sum(out.grad * x.value)]]), own=True)
        tape.record("scale", backward)
    return out


def scale_rows(x: Tensor, w: Tensor, tape: GradTape | None = None) -> Tensor:
    """C[u, :] = w[u] * X[u, :] for a learnable n x 1 column of row weights."""
    if w.cols != 1 or w.rows != x.rows:
        raise ShapeError(f"scale_rows: weights {w.shape} on {x.shape}")
    out = Tensor(x.value * w.value)
    _check_finite("scale_rows", out.value)
    if tape is not None:
        def backward():
            _accumulate(x, out.grad * w.value, own=True)
            _accumulate(w, (out.grad * x.value).sum(axis=1, keepdims=True), own=True)
        tape.record("scale_rows", backward)
    return out


def concat_cols(parts: list[Tensor], tape: GradTape | None = None) -> Tensor:
    """C = [P0 | P1 | ...]; backward slices dC back to each part."""
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols: row counts differ")
    out = Tensor(np.hstack([p.value for p in parts]))
    if tape is not None:
        widths = [p.cols for p in parts]
        def backward():
            j = 0
            for p, w in zip(parts, widths):
                _accumulate(p, out.grad[:, j:j + w].copy(), own=True)
                j += w
        tape.record("concat_cols", backward)
    return out


def split_cols(x: Tensor, widths: list[int],
               tape: GradTape | None = None) -> list[Tensor]:
    """Inverse of concat_cols: cut x into contiguous column blocks.

    One backward record reassembles the block gradients, so splitting stays
    O(total size) instead of one full-width buffer per block.
    """
    if sum(widths) != x.cols:
        raise ShapeError(f"split_cols: widths {widths} do not cover {x.cols}")
    outs = []
    j = 0
    for w in widths:
        outs.append(Tensor(x.value[:, j:j + w].copy()))
        j += w
    if tape is not None:
        def backward():
            pieces = [o.grad if o.grad is not None
                      else np.zeros_like(o.value) for o in outs]
            _accumulate(x, np.hstack(pieces), own=True)
        tape.record("split_cols", backward)
    return outs


def slice_cols(x: Tensor, j0: int, j1: int, tape: GradTape | None = None) -> Tensor:
    if not (0 <= j0 < j1 <= x.cols):
        raise ShapeError(f"slice_cols [{j0}:{j1}] on {x.shape}")
    out = Tensor(x.value[:, j0:j1].copy())
    if tape is not None:
        def backward():
            g = np.zeros_like(x.value)
            g[:, j0:j1] = out.grad
            _accumulate(x, g, own=True)
        tape.record("slice_cols", backward)
    return out


def relu(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """Elementwise max(0, x); gradient is masked where x <= 0."""
    out = Tensor(np.maximum(x.value, 0.0))
    _check_finite("relu", out.value)
    if tape is not None:
        mask = x.value > 0.0
        def backward():
            _accumulate(x, out.grad * mask, own=True)
        tape.record("relu", backward)
    return out


def dropout(x: Tensor, rate: float, training: bool,
            rng: np.random.Generator | None = None,
            tape: GradTape | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); eval is identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    keep = rng.random(x.shape) >= rate
    factor = keep / (1.0 - rate)
    out = Tensor(x.value * factor)
    _check_finite("dropout", out.value)
    if tape is not None:
        def backward():
            _accumulate(x, out.grad * factor, own=True)
        tape.record("dropout", backward)
    return out


def row_softmax(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """Row-wise softmax with max-subtraction for overflow stability."""
    if x.cols < 1:
        raise ShapeError("row_softmax needs at least one column")
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=1, keepdims=True))
    _check_finite("row_softmax", out.value)
    if tape is not None:
        y = out.value
        def backward():
            # dX = Y * (dY - rowsum(dY * Y))
            inner = (out.grad * y).sum(axis=1, keepdims=True)
            _accumulate(x, y * (out.grad - inner), own=True)
        tape.record("row_softmax", backward)
    return out


def cross_entropy(logits: Tensor, labels: np.ndarray, mask: np.ndarray,
                  tape: GradTape | None = None) -> Tensor:
    """Mean negative log-likelihood of ``labels`` over the ``mask`` rows.

    Gradient on masked rows is (softmax - one_hot) / |mask|, zero elsewhere.
    """
    mask = np.asarray(mask, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("no supervised nodes")
    if mask.max() >= logits.rows or mask.min() < 0:
        raise ShapeError("mask index out of range for logits")
    y = labels[mask]
    if y.min() < 0 or y.max() >= logits.cols:
        raise ValueError("label outside [0, n_classes)")
    z = logits.value[mask]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    log_p = z - lse
    loss = -log_p[np.arange(mask.size), y].mean()
    out = Tensor([[loss]])
    _check_finite("cross_entropy", out.value)
    if tape is not None:
        probs = np.exp(log_p)
        def backward():
            g = probs.copy()
            g[np.arange(mask.size), y] -= 1.0
            g /= mask.size
            full = np.zeros_like(logits.value)
            full[mask] = g * out.grad[0, 0]
            _accumulate(logits, full, own=True)
        tape.record("cross_entropy", backward)
    return out
