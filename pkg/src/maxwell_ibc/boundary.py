"""Pointwise impedance algebra: kernel split of Lambda, Sigma/Theta, validators.

All matrices are complex 3x3 acting on C^3. For an admissible impedance
``lam`` with kernel Z the boundary pair is ``theta = P_Z`` and ``sigma`` the
inverse of ``lam`` restricted to Z-perp, extended by zero on Z.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_TOL = 1e-9

PEC = "pec"
MIXED = "mixed"
FULL = "full_impedance"


class AdmissibilityError(ValueError):
    """Impedance matrix fails the admissibility conditions."""


@dataclass(frozen=True)
class KernelDecomposition:
    Z_basis: np.ndarray  # (3, k) orthonormal columns
    Zperp_basis: np.ndarray  # (3, 3-k)
    rank: int
    tol: float

    @property
    def proj_Z(self) -> np.ndarray:
        Q = self.Z_basis
        return Q @ Q.conj().T

    @property
    def proj_Zperp(self) -> np.ndarray:
        Q = self.Zperp_basis
        return Q @ Q.conj().T


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)
    # smallest eigenvalue of the relevant Hermitian form, None when vacuous
    coercivity: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def as_mat3(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _unit(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float).reshape(3)
    return nu / np.linalg.norm(nu)


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def kernel_decomposition(lam, tol: float = DEFAULT_TOL) -> KernelDecomposition:
    """Split C^3 into ker(lam) and its orthogonal complement via the SVD.

    Singular values below ``tol * s_max`` count as zero; ``lam = 0`` has the
    whole space as kernel.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    lam = as_mat3(lam)
    _, s, vh = np.linalg.svd(lam)
    smax = s[0]
    if smax == 0:
        rank = 0
    else:
        rank = int(np.sum(s > tol * smax))
    v = vh.conj().T
    return KernelDecomposition(Z_basis=v[:, rank:], Zperp_basis=v[:, :rank], rank=rank, tol=tol)


def validate_lambda(lam, nu, c0: float = DEFAULT_TOL, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check the three admissibility conditions for an impedance matrix.

    (i) the normal lies in the kernel, (ii) the range is orthogonal to the
    kernel, (iii) the restriction to the kernel complement is Hermitian with
    smallest eigenvalue at least ``c0``.
    """
    lam = as_mat3(lam)
    nu = _unit(nu)
    scale = max(1.0, np.linalg.norm(lam, 2))
    dec = kernel_decomposition(lam, tol)
    rep = ValidationReport()

    r1 = float(np.linalg.norm(lam @ nu))
    rep.checks.append(Check("(i)", r1 <= tol * scale, r1, "normal vector in kernel: |Lambda nu|"))
    r2 = float(np.linalg.norm(dec.proj_Z @ lam, 2))
    rep.checks.append(Check("(ii)", r2 <= tol * scale, r2, "range orthogonal to kernel: |P_Z Lambda|"))

    Q = dec.Zperp_basis
    if dec.rank == 0:
        rep.checks.append(Check("(iii)", True, np.inf, "coercive on kernel complement (vacuous)"))
        return rep
    block = Q.conj().T @ lam @ Q
    asym = float(np.linalg.norm(block - block.conj().T, 2))
    herm = asym <= tol * scale
    lmin = float(np.linalg.eigvalsh(hermitian_part(block)).min())
    rep.coercivity = lmin
    ok = herm and lmin >= c0
    detail = "coercive on kernel complement"
    if not herm:
        detail += f" (not Hermitian, asymmetry {asym:.3e})"
    elif lmin < c0:
        detail += f" (min eigenvalue {lmin:.6g} < {c0:.3g})"
    rep.checks.append(Check("(iii)", ok, lmin, detail))
    return rep


def build_sigma_theta(lam, nu=None, tol: float = DEFAULT_TOL):
    """Return ``(sigma, theta)`` for an admissible impedance matrix."""
    lam = as_mat3(lam)
    dec = kernel_decomposition(lam, tol)
    theta = dec.proj_Z
    Q = dec.Zperp_basis
    if dec.rank == 0:
        return np.zeros((3, 3), dtype=complex), theta
    block = Q.conj().T @ lam @ Q
    s = np.linalg.svd(block, compute_uv=False)
    if s[-1] <= tol * max(s[0], 1e-300):
        raise AdmissibilityError("impedance restricted to the kernel complement is singular")
    sigma = Q @ np.linalg.solve(block, Q.conj().T)
    return sigma, theta


def validate_sigma_theta(sigma, theta, c0: float = DEFAULT_TOL, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Coercivity of ``sigma + theta`` on all of C^3."""
    s = as_mat3(sigma) + as_mat3(theta)
    scale = max(1.0, np.linalg.norm(s, 2))
    asym = float(np.linalg.norm(s - s.conj().T, 2))
    lmin = float(np.linalg.eigvalsh(hermitian_part(s)).min())
    rep = ValidationReport(coercivity=lmin)
    rep.checks.append(Check("hermitian", asym <= tol * scale, asym, "Sigma + Theta Hermitian"))
    rep.checks.append(Check("coercive", lmin >= c0, lmin, f"min eigenvalue of Sigma + Theta >= {c0:.3g}"))
    return rep


def classify(rank: int) -> str:
    return {0: PEC, 1: MIXED, 2: FULL}.get(rank, "invalid")


@dataclass(frozen=True)
class ImpedancePatch:
    """Constant impedance data of one boundary patch with outward normal ``nu``.

    Box faces are planar, so a single normal per patch is stored.
    """

    id: int
    lam: np.ndarray
    nu: np.ndarray
    decomposition: KernelDecomposition
    theta: np.ndarray
    sigma: np.ndarray
    eta: float = 0.0
    kind: str = PEC

    @classmethod
    def from_lambda(cls, pid: int, lam, nu, tol: float = DEFAULT_TOL, c0: float = DEFAULT_TOL):
        lam = as_mat3(lam)
        nu = _unit(nu)
        rep = validate_lambda(lam, nu, c0, tol)
        if not rep.passed:
            bad = rep.failures()[0]
            raise AdmissibilityError(f"patch {pid}: condition {bad.name} fails: {bad.detail}")
        dec = kernel_decomposition(lam, tol)
        sigma, theta = build_sigma_theta(lam, nu, tol)
        return cls(pid, lam, nu, dec, theta, sigma, 0.0, classify(dec.rank))

    @property
    def tangential_kernel_projector(self) -> np.ndarray:
        """Projector onto the kernel directions inside the tangent plane."""
        return self.decomposition.proj_Z - np.outer(self.nu, self.nu)


def regularize_lambda(patch: ImpedancePatch, eta: float, nu=None) -> ImpedancePatch:
    """Fill the tangential kernel of Lambda with ``eta`` (penalty ``1/eta`` in Sigma)."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    nu = patch.nu if nu is None else _unit(nu)
    P = patch.decomposition.proj_Z - np.outer(nu, nu)
    lam_eta = patch.lam + eta * P
    sigma_eta = patch.sigma + P / eta
    theta_eta = np.outer(nu, nu).astype(complex)
    Zb = nu.reshape(3, 1).astype(complex)
    # orthonormal basis of the tangent plane
    _, _, vh = np.linalg.svd(np.outer(nu, nu))
    Zp = vh[1:].conj().T.astype(complex)
    dec = KernelDecomposition(Zb, Zp, 2, patch.decomposition.tol)
    return replace(patch, lam=lam_eta, nu=nu, decomposition=dec, theta=theta_eta,
                   sigma=sigma_eta, eta=float(eta), kind=FULL)


def validate_material(m, c0: float = DEFAULT_TOL, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Coercivity of a bulk coefficient: Hermitian and positive definite."""
    m = as_mat3(m)
    scale = max(1.0, np.linalg.norm(m, 2))
    asym = float(np.linalg.norm(m - m.conj().T, 2))
    lmin = float(np.linalg.eigvalsh(hermitian_part(m)).min())
    rep = ValidationReport(coercivity=lmin)
    rep.checks.append(Check("hermitian", asym <= tol * scale, asym, "coefficient Hermitian"))
    rep.checks.append(Check("coercive", lmin >= c0, lmin, f"min eigenvalue >= {c0:.3g}"))
    return rep


@dataclass(frozen=True)
class MaterialSpec:
    """Per-region constant permittivity and permeability."""

    region: int
    eps: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eps", as_mat3(self.eps))
        object.__setattr__(self, "mu", as_mat3(self.mu))

    def validate(self, c0: float = DEFAULT_TOL, tol: float = DEFAULT_TOL) -> dict[str, ValidationReport]:
        return {"eps": validate_material(self.eps, c0, tol), "mu": validate_material(self.mu, c0, tol)}


def vacuum(region: int = 0) -> MaterialSpec:
    return MaterialSpec(region, np.eye(3), np.eye(3))
