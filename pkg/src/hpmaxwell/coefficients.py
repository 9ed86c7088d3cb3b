"""Problem data: piecewise tensor coefficients, impedance, wavenumber and sources."""

from dataclasses import dataclass, field
import warnings

import numpy as np

ALPHA_GRID = 360


@dataclass(frozen=True)
class Wavenumber:
    value: complex

    def __post_init__(self):
        v = complex(self.value)
        if not np.isfinite(v) or abs(v) < 1.0:
            raise ValueError(f"wavenumber must satisfy |k| >= 1, got {v}")
        object.__setattr__(self, "value", v)

    def __abs__(self):
        return abs(self.value)

    def __complex__(self):
        return self.value


def as_wavenumber(k):
    return k if isinstance(k, Wavenumber) else Wavenumber(k)


@dataclass(frozen=True)
class TensorPiece:
    """A 3x3 tensor-valued function on one subdomain.

    ``fn`` maps points of shape (..., 3) to tensors of shape (..., 3, 3).
    ``degree`` is the declared polynomial degree used to size quadrature
    (0 for constants).
    """

    fn: object
    constant: bool = False
    degree: int = 2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x))
        if out.shape != x.shape[:-1] + (3, 3):
            out = np.broadcast_to(out, x.shape[:-1] + (3, 3))
        return out

    def value(self):
        if not self.constant:
            raise ValueError("piece is not constant")
        return np.asarray(self.fn(np.zeros((1, 3))))[0]


def constant_piece(matrix):
    M = np.array(matrix, dtype=complex if np.iscomplexobj(matrix) else float)
    if M.ndim == 0:
        M = M * np.eye(3)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise ValueError("constant coefficient must be a finite scalar or 3x3 matrix")
    M.flags.writeable = False
    return TensorPiece(lambda x, M=M: np.broadcast_to(M, np.shape(x)[:-1] + (3, 3)), True, 0)


def scalar_piece(fn, degree=2):
    """Tensor ``fn(x) * I`` from a scalar function of position."""
    eye = np.eye(3)
    return TensorPiece(lambda x: np.asarray(fn(x))[..., None, None] * eye, False, degree)


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise tensor field keyed by subdomain tag."""

    pieces: dict

    @property
    def constant(self):
        return all(p.constant for p in self.pieces.values())

    @property
    def degree(self):
        return max(p.degree for p in self.pieces.values())

    @property
    def is_complex(self):
        return any(np.iscomplexobj(p(np.zeros((1, 3)))) for p in self.pieces.values())

    def piece(self, tag):
        try:
            return self.pieces[int(tag)]
        except KeyError:
            raise KeyError(f"coefficient undefined on subdomain tag {tag}") from None

    def evaluate(self, tags, x):
        """Evaluate on elements with subdomain ``tags`` (E,) at points ``x`` (E, nq, 3)."""
        tags = np.asarray(tags)
        first = self.piece(tags[0])(x[:1])
        dtype = complex if any(
            np.iscomplexobj(self.piece(t)(x[:1])) for t in np.unique(tags)
        ) else first.dtype
        out = np.empty(x.shape[:-1] + (3, 3), dtype=dtype)
        for t in np.unique(tags):
            sel = tags == t
            out[sel] = self.piece(t)(x[sel])
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite coefficient value")
        return out


def uniform(matrix, tags=(1, 2)):
    piece = constant_piece(matrix)
    return CoefficientField({int(t): piece for t in tags})


@dataclass(frozen=True)
class ImpedanceField:
    """Boundary impedance: a scalar (times identity) or a tensor function.

    The tensor form must map tangent vectors to tangent vectors; see
    :meth:`check_tangential`.
    """

    value: object = 1.0

    @property
    def is_scalar(self):
        return np.isscalar(self.value) or np.ndim(self.value) == 0

    @property
    def is_complex(self):
        if self.is_scalar:
            return isinstance(self.value, complex)
        return np.iscomplexobj(self(np.zeros((1, 3))))

    def __call__(self, x):
        """Tensor values at boundary points (..., 3) -> (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        if self.is_scalar:
            return np.broadcast_to(self.value * np.eye(3), x.shape[:-1] + (3, 3))
        if callable(self.value):
            return np.asarray(self.value(x))
        return np.broadcast_to(np.asarray(self.value), x.shape[:-1] + (3, 3))

    def apply(self, x, v):
        return np.einsum("...ab,...b->...a", self(x), v)

    def check_tangential(self, x, normals, samples=8, seed=0, tol=1e-12):
        """Largest normal component of ``zeta t`` over random tangents ``t``."""
        rng = np.random.default_rng(seed)
        n = np.asarray(normals, dtype=float)
        worst = 0.0
        for _ in range(samples):
            z = rng.standard_normal(n.shape) + 1j * rng.standard_normal(n.shape)
            t = z - np.sum(z * n, axis=-1, keepdims=True) * n
            w = self.apply(x, t)
            scale = np.maximum(np.linalg.norm(t, axis=-1), 1e-300)
            worst = max(worst, float(np.max(np.abs(np.sum(w * n, axis=-1)) / scale)))
        return worst


@dataclass(frozen=True)
class ProblemData:
    """Everything needed to assemble the discrete problem.

    ``f(x)`` returns the volume source (N, 3); ``g(x, n)`` returns tangential
    impedance data (N, 3) at boundary points with unit outer normals ``n``.
    """

    name: str
    mu_inv: CoefficientField
    eps: CoefficientField
    zeta: ImpedanceField
    f: object
    g: object
    k: Wavenumber
    tags: tuple = (1,)
    exact: object = field(default=None, compare=False)

    def with_k(self, k):
        from dataclasses import replace

        return replace(self, k=as_wavenumber(k))


def _zero_field(x, *args):
    return np.zeros(np.shape(x), dtype=complex)


def coercivity_probe(field, samples=64, seed=0, c0=1e-6, tags=None):
    """Sampled check of uniform coercivity up to a unimodular rotation.

    For alpha on a 360-point grid of the unit circle, evaluates the minimum of
    Re <alpha M z, z> over sampled points and all unit vectors z (the smallest
    eigenvalue of the Hermitian part of alpha M), then maximizes over alpha.

    Returns
    -------
    (passed, c, alpha)
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(field, CoefficientField):
        pieces = [field.piece(t) for t in (tags or sorted(field.pieces))]
    elif isinstance(field, TensorPiece):
        pieces = [field]
    else:
        pieces = [constant_piece(field)]
    mats = []
    for piece in pieces:
        x = rng.random((samples, 3))
        mats.append(piece(x))
    M = np.concatenate(mats).astype(complex)
    alphas = np.exp(2j * np.pi * np.arange(ALPHA_GRID) / ALPHA_GRID)
    alphas[0], alphas[ALPHA_GRID // 2] = 1.0, -1.0
    best_c, best_alpha = -np.inf, 1.0
    for alpha in alphas:
        A = alpha * M
        H = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
        c = float(np.linalg.eigvalsh(H)[:, 0].min())
        if c > best_c + 1e-15:
            best_c, best_alpha = c, complex(alpha)
    return best_c >= c0, best_c, best_alpha


def exp1_interface(k=10.0):
    """Cube-with-inner-cube transplant of the piecewise constant interface test."""
    mu_out = np.array([[3.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 3.0]])
    eps_out = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
    ident = constant_piece(np.eye(3))
    return ProblemData(
        name="exp1_interface",
        mu_inv=CoefficientField({1: ident, 2: constant_piece(mu_out)}),
        eps=CoefficientField({1: ident, 2: constant_piece(eps_out)}),
        zeta=ImpedanceField(1.0),
        f=lambda x: np.stack([x[..., 2], np.zeros_like(x[..., 0]), np.zeros_like(x[..., 0])], axis=-1).astype(complex),
        g=_zero_field,
        k=as_wavenumber(k),
        tags=(1, 2),
    )


def exp2_smooth(k=10.0):
    """Unit cube, mu^{-1} = (1 + x^2) I, eps = I, f = (z, 2x, 0)."""
    mu = scalar_piece(lambda x: 1.0 + x[..., 0] ** 2, degree=2)
    return ProblemData(
        name="exp2_smooth",
        mu_inv=CoefficientField({1: mu, 2: mu}),
        eps=uniform(np.eye(3)),
        zeta=ImpedanceField(1.0),
        f=lambda x: np.stack([x[..., 2], 2.0 * x[..., 0], np.zeros_like(x[..., 0])], axis=-1).astype(complex),
        g=_zero_field,
        k=as_wavenumber(k),
        tags=(1,),
    )


BUILTIN_PROBLEMS = ("exp1_interface", "exp2_smooth", "manufactured_linear", "manufactured_trig")


def builtin_problem(name, k=10.0):
    if name == "exp1_interface":
        return exp1_interface(k)
    if name == "exp2_smooth":
        return exp2_smooth(k)
    if name in ("manufactured_linear", "manufactured_trig"):
        from .verification import builtin_manufactured

        return builtin_manufactured(name).problem(k)
    raise ValueError(f"unknown problem {name!r}; choose from {', '.join(BUILTIN_PROBLEMS)}")


def check_problem(problem, c0=0.5, samples=64, seed=0):
    """Run the coercivity probes for mu^{-1} and eps; warn when one fails."""
    results = {}
    for label, fld in (("mu_inv", problem.mu_inv), ("eps", problem.eps)):
        ok, c, alpha = coercivity_probe(fld, samples=samples, seed=seed, c0=c0, tags=problem.tags)
        results[label] = (ok, c, alpha)
        if not ok:
            warnings.warn(f"{problem.name}: coercivity probe for {label} failed (c = {c:.3g})")
    return results
