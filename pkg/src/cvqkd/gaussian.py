"""Gaussian-state calculus on covariance matrices.

Conventions used everywhere in the package:

* quadrature ordering ``(q1, p1, q2, p2, ...)``;
* hbar = 1, so the vacuum covariance matrix is ``I / 2`` and physical
  symplectic eigenvalues satisfy ``nu >= 1/2``;
* entropies are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.linalg
from scipy.special import xlogy

from cvqkd.errors import DegenerateMeasurementError, NumericalError, UnphysicalStateError

VACUUM_VARIANCE = 0.5
PHYSICALITY_TOL = 1e-9
SYMMETRY_TOL = 1e-12


def symplectic_form(modes: int) -> np.ndarray:
    """Standard symplectic form ``Omega = diag([[0, 1], [-1, 0]], ...)``."""
    return np.kron(np.eye(modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _spectrum(matrix: np.ndarray) -> np.ndarray:
    modes = matrix.shape[0] // 2
    eig = np.linalg.eigvals(1j * symplectic_form(modes) @ matrix)
    # eigenvalues come in +/- nu pairs
    return np.sort(np.abs(eig.real))[::-1][::2]


@dataclass(frozen=True)
class SymplecticSpectrum:
    """Symplectic eigenvalues of a covariance matrix, in descending order."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(sorted((float(v) for v in self.values), reverse=True)))

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, item):
        return self.values[item]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)

    @property
    def is_pure(self) -> bool:
        return bool(np.all(np.abs(self.as_array() - VACUUM_VARIANCE) < 1e-8))


class CovarianceMatrix:
    """Real symmetric ``2m x 2m`` quadrature covariance matrix of a zero-mean Gaussian state.

    The matrix is symmetrized on construction and stored read-only. Pass
    ``check=False`` to skip the physicality test (used internally when the
    caller has already established it).
    """

    __slots__ = ("_matrix",)

    def __init__(self, matrix, check: bool = True):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError(f"covariance matrix must be 2m x 2m, got shape {m.shape}")
        asym = np.max(np.abs(m - m.T)) if m.size else 0.0
        scale = max(1.0, float(np.max(np.abs(m))))
        if asym > 1e-6 * scale:
            raise ValueError(f"covariance matrix is not symmetric (max asymmetry {asym:.3g})")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        self._matrix = m
        if check:
            self.check_physical()

    @classmethod
    def vacuum(cls, modes: int) -> "CovarianceMatrix":
        return cls(VACUUM_VARIANCE * np.eye(2 * modes), check=False)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def modes(self) -> int:
        return self._matrix.shape[0] // 2

    def __array__(self, dtype=None, copy=None):
        return self._matrix if dtype is None else self._matrix.astype(dtype)

    def __repr__(self):
        return f"CovarianceMatrix(modes={self.modes}, matrix={self._matrix.tolist()!r})"

    def __eq__(self, other):
        if not isinstance(other, CovarianceMatrix):
            return NotImplemented
        return self._matrix.shape == other._matrix.shape and np.array_equal(self._matrix, other._matrix)

    __hash__ = None

    def check_physical(self) -> None:
        try:
            np.linalg.cholesky(self._matrix)
        except np.linalg.LinAlgError:
            raise UnphysicalStateError("covariance matrix is not positive definite") from None
        nu = _spectrum(self._matrix)
        if nu.min() < VACUUM_VARIANCE - PHYSICALITY_TOL:
            raise UnphysicalStateError(
                f"symplectic eigenvalue {nu.min():.12g} below 1/2", nu_min=float(nu.min())
            )

    def submatrix(self, modes: Sequence[int]) -> "CovarianceMatrix":
        """Marginal covariance matrix on the listed modes (in the given order)."""
        idx = np.ravel([[2 * k, 2 * k + 1] for k in modes])
        return CovarianceMatrix(self._matrix[np.ix_(idx, idx)], check=False)

    def quadrature_variance(self, mode: int, quadrature: Literal["q", "p"] = "q") -> float:
        i = 2 * mode + _quadrature_offset(quadrature)
        return float(self._matrix[i, i])


def _quadrature_offset(quadrature: str) -> int:
    if quadrature not in ("q", "p"):
        raise ValueError(f"quadrature must be 'q' or 'p', got {quadrature!r}")
    return 0 if quadrature == "q" else 1


def two_mode_squeezed_source(squeezing_db: float, antisqueezing_db: float) -> CovarianceMatrix:
    """Two squeezed vacua mixed on a balanced beam splitter.

    ``q_A, q_B`` come out correlated and ``p_A, p_B`` anticorrelated.

    Args:
        squeezing_db: squeezing below shot noise, in dB (>= 0).
        antisqueezing_db: antisqueezing above shot noise, in dB (>= squeezing_db).
    """
    if squeezing_db < 0:
        raise ValueError("squeezing_db must be nonnegative")
    if antisqueezing_db < squeezing_db:
        raise UnphysicalStateError("antisqueezing must be at least as large as squeezing")
    v_sq = VACUUM_VARIANCE * 10.0 ** (-squeezing_db / 10.0)
    v_anti = VACUUM_VARIANCE * 10.0 ** (antisqueezing_db / 10.0)
    v = 0.5 * (v_sq + v_anti)
    z = 0.5 * (v_anti - v_sq)
    return tmsv_like(v, v, z)


def tmsv_like(v_a: float, v_b: float, z: float, check: bool = True) -> CovarianceMatrix:
    """Symmetric-in-quadratures two-mode matrix with blocks ``diag(V_a, V_a)``, ``diag(V_b, V_b)``
    and correlation block ``diag(Z, -Z)``."""
    return CovarianceMatrix(
        [
            [v_a, 0.0, z, 0.0],
            [0.0, v_a, 0.0, -z],
            [z, 0.0, v_b, 0.0],
            [0.0, -z, 0.0, v_b],
        ],
        check=check,
    )


def apply_loss_excess(cov: CovarianceMatrix, loss: float, excess_noise: float) -> CovarianceMatrix:
    """Symmetric loss and excess-noise channel on every mode:
    ``Gamma -> (1 - loss) Gamma + (loss + excess_noise) Gamma_vac``."""
    if not 0.0 <= loss <= 1.0:
        raise ValueError(f"loss must lie in [0, 1], got {loss}")
    if excess_noise < 0.0:
        raise ValueError(f"excess noise must be nonnegative, got {excess_noise}")
    m = (1.0 - loss) * cov.matrix + (loss + excess_noise) * VACUUM_VARIANCE * np.eye(2 * cov.modes)
    return CovarianceMatrix(m, check=False)


def symplectic_eigenvalues(cov: CovarianceMatrix) -> SymplecticSpectrum:
    """Moduli of the eigenvalues of ``i Omega Gamma``, one per mode."""
    nu = _spectrum(cov.matrix)
    if nu.min() < VACUUM_VARIANCE - PHYSICALITY_TOL:
        raise UnphysicalStateError(f"symplectic eigenvalue {nu.min():.12g} below 1/2", nu_min=float(nu.min()))
    return SymplecticSpectrum(tuple(nu))


def entropy_of_symplectic_eigenvalue(nu) -> np.ndarray:
    """``g(nu) = (nu + 1/2) log2(nu + 1/2) - (nu - 1/2) log2(nu - 1/2)``, with ``g(1/2) = 0``."""
    nu = np.maximum(np.asarray(nu, dtype=float), VACUUM_VARIANCE)
    return (xlogy(nu + 0.5, nu + 0.5) - xlogy(nu - 0.5, nu - 0.5)) / np.log(2.0)


def gaussian_entropy(cov: CovarianceMatrix) -> float:
    """Von Neumann entropy in bits."""
    return float(np.sum(entropy_of_symplectic_eigenvalue(symplectic_eigenvalues(cov).as_array())))


def williamson(cov: CovarianceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Williamson normal form ``Gamma = S diag(nu_1, nu_1, ..., nu_m, nu_m) S^T``.

    Returns ``(S, nu)`` with ``S`` symplectic with respect to :func:`symplectic_form`.
    """
    gam = cov.matrix
    modes = cov.modes
    root = scipy.linalg.sqrtm(gam).real
    root_inv = np.linalg.inv(root)
    k = root_inv @ symplectic_form(modes) @ root_inv
    k = 0.5 * (k - k.T)
    t, o = scipy.linalg.schur(k, output="real")
    nu = np.empty(modes)
    for j in range(modes):
        b = t[2 * j, 2 * j + 1]
        if b < 0:
            o[:, [2 * j, 2 * j + 1]] = o[:, [2 * j + 1, 2 * j]]
            b = -b
        nu[j] = 1.0 / b
    off = t.copy()
    for j in range(modes):
        off[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = 0.0
    if np.max(np.abs(off)) > 1e-8 * np.max(np.abs(t)):
        raise NumericalError(
            f"symplectic diagonalization failed: off-block residue {np.max(np.abs(off)):.3g}, "
            f"condition number {np.linalg.cond(gam):.3g}"
        )
    s = root @ o @ np.diag(np.repeat(1.0 / np.sqrt(nu), 2))
    return s, nu


def gaussian_purification(cov: CovarianceMatrix) -> CovarianceMatrix:
    """Pure Gaussian state on ``m + m`` modes (system first, purifier second) with marginal ``cov``.

    Each thermal mode of the Williamson form is purified by a two-mode
    squeezer with one fresh environment mode.
    """
    modes = cov.modes
    s, nu = williamson(cov)
    # snap round-off purity: sqrt(nu^2 - 1/4) would blow 1e-15 noise up to 1e-8
    nu = np.where(nu - VACUUM_VARIANCE < 1e-12, VACUUM_VARIANCE, nu)
    size = 4 * modes
    pure = np.zeros((size, size))
    zmat = np.diag([1.0, -1.0])
    for j, v in enumerate(nu):
        a = slice(2 * j, 2 * j + 2)
        e = slice(2 * (modes + j), 2 * (modes + j) + 2)
        c = np.sqrt(max(v * v - 0.25, 0.0))
        pure[a, a] = v * np.eye(2)
        pure[e, e] = v * np.eye(2)
        pure[a, e] = c * zmat
        pure[e, a] = c * zmat
    big_s = scipy.linalg.block_diag(s, np.eye(2 * modes))
    out = big_s @ pure @ big_s.T
    # reinstate the exact input marginal, removing round-off from S D S^T
    out[: 2 * modes, : 2 * modes] = cov.matrix
    return CovarianceMatrix(out, check=False)


def condition_on_homodyne(
    cov: CovarianceMatrix, measured_mode: int, quadrature: Literal["q", "p"] = "q"
) -> CovarianceMatrix:
    """Covariance of the remaining modes after homodyning one quadrature of ``measured_mode``.

    The result does not depend on the measured value (only the mean shifts).
    """
    if not 0 <= measured_mode < cov.modes:
        raise IndexError(f"mode {measured_mode} out of range for a {cov.modes}-mode state")
    gam = cov.matrix
    c = 2 * measured_mode + _quadrature_offset(quadrature)
    var = gam[c, c]
    if var < 1e-12:
        raise DegenerateMeasurementError(f"measured quadrature variance {var:.3g} is degenerate")
    keep = [i for i in range(gam.shape[0]) if i // 2 != measured_mode]
    g_r = gam[np.ix_(keep, keep)]
    g_rc = gam[keep, c]
    return CovarianceMatrix(g_r - np.outer(g_rc, g_rc) / var, check=False)
