"""Description of the small convex programs solved by the SCA steps.

Everything is stored over the reals. Complex vectors are interleaved as
``[Re u0, Im u0, Re u1, Im u1, ...]``; a Hermitian M x M matrix is stored by
its M**2 real coordinates in :func:`hermitian_basis`, and its PSD constraint
is imposed on the real symmetric 2M x 2M embedding ``[[Re, -Im], [Im, Re]]``.

The program is::

    maximize    c @ x + c0 + sum_l w_l * D_l * log2(A_l / D_l + s_l)
    subject to  G @ x <= h,  A_eq @ x == b_eq
                x[re]**2 + x[im]**2 <= bound**2          (modulus blocks)
                x[I] @ Q @ x[I] + q @ x[I] + r <= 0      (quadratic, Q PSD)
                F0 + sum_m x[I_m] F_m  >= 0              (LMIs)

with ``A_l``, ``D_l`` affine in x. The perspective terms are jointly concave
in ``(A, D)`` on ``D > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


# ----------------------------------------------------------- realification

def hermitian_basis(M: int) -> np.ndarray:
    """Real-coordinate basis of M x M Hermitian matrices, shape (M*M, M, M).

    Order: diagonal entries, then for each ``a < b`` the real and the
    imaginary part of entry ``(a, b)``.
    """
    basis = []
    for a in range(M):
        B = np.zeros((M, M), dtype=complex)
        B[a, a] = 1
        basis.append(B)
    for a in range(M):
        for b in range(a + 1, M):
            B = np.zeros((M, M), dtype=complex)
            B[a, b] = B[b, a] = 1
            basis.append(B)
            B = np.zeros((M, M), dtype=complex)
            B[a, b] = 1j
            B[b, a] = -1j
            basis.append(B)
    return np.array(basis)


def hermitian_to_coords(S: np.ndarray) -> np.ndarray:
    M = S.shape[0]
    out = [S[a, a].real for a in range(M)]
    for a in range(M):
        for b in range(a + 1, M):
            out.extend([S[a, b].real, S[a, b].imag])
    return np.array(out, dtype=float)


def coords_to_hermitian(x: np.ndarray, M: int) -> np.ndarray:
    return np.tensordot(np.asarray(x, dtype=float), hermitian_basis(M), axes=1)


def realify_matrix(A: np.ndarray) -> np.ndarray:
    """Real 2M x 2M embedding of a complex matrix."""
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def trace_coeffs(A: np.ndarray) -> np.ndarray:
    """Coefficients ``c`` with ``Re tr(A S) = c @ coords(S)`` for Hermitian S."""
    return np.real(np.einsum("ab,lba->l", A, hermitian_basis(A.shape[0])))


def complex_to_interleaved(u: np.ndarray) -> np.ndarray:
    out = np.empty(2 * u.size)
    out[0::2] = u.real
    out[1::2] = u.imag
    return out


def interleaved_to_complex(x: np.ndarray) -> np.ndarray:
    return x[0::2] + 1j * x[1::2]


def real_linear(beta: np.ndarray) -> np.ndarray:
    """Coefficients ``c`` with ``Re(beta^H u) = c @ x`` for interleaved x."""
    return complex_to_interleaved(np.asarray(beta, dtype=complex))


def real_quadratic(Q: np.ndarray) -> np.ndarray:
    """Symmetric R with ``u^H Q u = x @ R @ x`` for Hermitian Q, interleaved x."""
    n = Q.shape[0]
    Qh = (Q + Q.conj().T) / 2
    R = np.empty((2 * n, 2 * n))
    R[0::2, 0::2] = Qh.real
    R[1::2, 1::2] = Qh.real
    R[0::2, 1::2] = -Qh.imag
    R[1::2, 0::2] = Qh.imag
    return R


# --------------------------------------------------------------- the program

@dataclass
class PerspectiveLog:
    """``weight * D * log2(A / D + shift)`` with A, D affine in x."""

    weight: float
    arg: np.ndarray
    arg0: float
    scale: np.ndarray
    scale0: float
    shift: float


@dataclass
class QuadConstraint:
    idx: np.ndarray
    Q: np.ndarray
    q: np.ndarray
    r: float
    name: str = ""


@dataclass
class LMI:
    idx: np.ndarray
    F0: np.ndarray
    F: np.ndarray  # (len(idx), d, d)
    name: str = ""


@dataclass
class ConicProgram:
    n: int
    c: np.ndarray
    c0: float = 0.0
    logs: list[PerspectiveLog] = field(default_factory=list)
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    lin_names: list[str] = field(default_factory=list)
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    mod_re: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    mod_im: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    mod_bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    quads: list[QuadConstraint] = field(default_factory=list)
    lmis: list[LMI] = field(default_factory=list)
    x0: np.ndarray | None = None
    variables: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.G is None:
            self.G = np.zeros((0, self.n))
            self.h = np.zeros(0)
        if self.A_eq is None:
            self.A_eq = np.zeros((0, self.n))
            self.b_eq = np.zeros(0)

    # -- evaluation --------------------------------------------------------
    def objective(self, x: np.ndarray) -> float:
        """Objective value; perspective terms with ``D == 0`` count as 0."""
        val = float(self.c @ x + self.c0)
        for t in self.logs:
            A = float(t.arg @ x + t.arg0)
            D = float(t.scale @ x + t.scale0)
            if D > 0:
                val += t.weight * D * np.log2(A / D + t.shift)
            elif D < 0:
                return -np.inf
        return val

    def constraint_values(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Constraint functions in ``<= 0`` form (LMIs as minus the min eigenvalue)."""
        out = {"linear": self.G @ x - self.h, "equality": np.abs(self.A_eq @ x - self.b_eq)}
        if self.mod_re.size:
            out["modulus"] = x[self.mod_re] ** 2 + x[self.mod_im] ** 2 - self.mod_bound**2
        out["quadratic"] = np.array(
            [x[qc.idx] @ qc.Q @ x[qc.idx] + qc.q @ x[qc.idx] + qc.r for qc in self.quads]
        )
        out["lmi"] = np.array(
            [-np.linalg.eigvalsh(lmi.F0 + np.tensordot(x[lmi.idx], lmi.F, axes=1))[0] for lmi in self.lmis]
        )
        return out

    def max_violation(self, x: np.ndarray) -> float:
        vals = [np.max(v) for v in self.constraint_values(x).values() if v.size]
        return max(0.0, max(vals)) if vals else 0.0

    @property
    def barrier_degree(self) -> int:
        return (
            self.G.shape[0]
            + self.mod_re.size
            + len(self.quads)
            + sum(lmi.F0.shape[0] for lmi in self.lmis)
        )

    def describe(self) -> str:
        """Human-readable listing for cross-checking against external solvers."""
        np_opts = dict(precision=6, suppress_small=False, max_line_width=160)
        lines = [f"ConicProgram: {self.n} real variables"]
        for name, info in self.variables.items():
            lines.append(f"  var {name}: {info}")
        lines.append(f"maximize c @ x + {self.c0!r}")
        lines.append("  c = " + np.array2string(self.c, **np_opts))
        for k, t in enumerate(self.logs):
            lines.append(
                f"  + {t.weight!r} * D{k} * log2(A{k} / D{k} + {t.shift!r})"
            )
            lines.append(f"    A{k} = a @ x + {t.arg0!r}, a = " + np.array2string(t.arg, **np_opts))
            lines.append(f"    D{k} = d @ x + {t.scale0!r}, d = " + np.array2string(t.scale, **np_opts))
        lines.append(f"subject to ({self.G.shape[0]} linear rows, G @ x <= h)")
        for r in range(self.G.shape[0]):
            name = self.lin_names[r] if r < len(self.lin_names) else f"row{r}"
            nz = np.flatnonzero(self.G[r])
            terms = " + ".join(f"{self.G[r, j]!r}*x[{j}]" for j in nz) or "0"
            lines.append(f"  [{name}] {terms} <= {self.h[r]!r}")
        for r in range(self.A_eq.shape[0]):
            nz = np.flatnonzero(self.A_eq[r])
            terms = " + ".join(f"{self.A_eq[r, j]!r}*x[{j}]" for j in nz) or "0"
            lines.append(f"  [eq] {terms} == {self.b_eq[r]!r}")
        for a, b, bd in zip(self.mod_re, self.mod_im, self.mod_bound):
            lines.append(f"  [modulus] x[{a}]^2 + x[{b}]^2 <= {bd!r}^2")
        for qc in self.quads:
            lines.append(f"  [quad {qc.name}] on x{list(map(int, qc.idx))}: r = {qc.r!r}")
            lines.append("    Q = " + np.array2string(qc.Q, **np_opts).replace("\n", "\n        "))
            lines.append("    q = " + np.array2string(qc.q, **np_opts))
        for lmi in self.lmis:
            lines.append(f"  [lmi {lmi.name}] F0 + sum x[m] F_m >= 0 over x{list(map(int, lmi.idx))}")
        return "\n".join(lines)


class ProgramBuilder:
    """Small helper that allocates variables and accumulates constraints."""

    def __init__(self):
        self.n = 0
        self.variables: dict[str, Any] = {}
        self._lin: list[tuple[dict[int, float], float, str]] = []
        self._eq: list[tuple[dict[int, float], float]] = []
        self._obj: dict[int, float] = {}
        self.c0 = 0.0
        self._logs: list[tuple[float, dict[int, float], float, dict[int, float], float, float]] = []
        self._mod: list[tuple[int, int, float]] = []
        self._quads: list[QuadConstraint] = []
        self._lmis: list[LMI] = []

    def _alloc(self, size: int) -> np.ndarray:
        idx = np.arange(self.n, self.n + size)
        self.n += size
        return idx

    def scalar(self, name: str, nonneg: bool = True) -> int:
        (i,) = self._alloc(1)
        self.variables[name] = {"kind": "scalar", "index": int(i), "nonneg": nonneg}
        if nonneg:
            self.linear_le({i: -1.0}, 0.0, f"{name}>=0")
        return int(i)

    def complex_vector(self, name: str, size: int, bound: float | None = 1.0, pinned: dict | None = None) -> np.ndarray:
        """Free entries of a complex vector; ``pinned`` maps position -> constant."""
        idx = self._alloc(2 * size)
        self.variables[name] = {
            "kind": "complex",
            "index": idx,
            "size": size,
            "bound": bound,
            "pinned": dict(pinned or {}),
        }
        if bound is not None:
            for a in range(size):
                self._mod.append((int(idx[2 * a]), int(idx[2 * a + 1]), float(bound)))
        return idx

    def hermitian_psd(self, name: str, M: int) -> np.ndarray:
        idx = self._alloc(M * M)
        self.variables[name] = {"kind": "hermitian", "index": idx, "M": M}
        F = np.array([realify_matrix(B) for B in hermitian_basis(M)])
        self._lmis.append(LMI(idx, np.zeros((2 * M, 2 * M)), F, name))
        return idx

    def linear_le(self, coeffs: dict[int, float], rhs: float, name: str = "") -> None:
        self._lin.append((dict(coeffs), float(rhs), name))

    def linear_eq(self, coeffs: dict[int, float], rhs: float) -> None:
        self._eq.append((dict(coeffs), float(rhs)))

    def add_objective(self, coeffs: dict[int, float], const: float = 0.0) -> None:
        for i, c in coeffs.items():
            self._obj[i] = self._obj.get(i, 0.0) + c
        self.c0 += const

    def perspective_log(self, weight, arg: dict[int, float], arg0, scale: dict[int, float], scale0, shift) -> None:
        self._logs.append((float(weight), dict(arg), float(arg0), dict(scale), float(scale0), float(shift)))

    def quadratic_le(self, idx, Q, q, r, name: str = "") -> None:
        self._quads.append(QuadConstraint(np.asarray(idx), np.asarray(Q, float), np.asarray(q, float), float(r), name))

    def build(self, x0: np.ndarray | None = None) -> ConicProgram:
        n = self.n

        def dense(d: dict[int, float]) -> np.ndarray:
            out = np.zeros(n)
            for i, c in d.items():
                out[i] += c
            return out

        G = np.array([dense(c) for c, _, _ in self._lin]).reshape(len(self._lin), n)
        h = np.array([r for _, r, _ in self._lin])
        A_eq = np.array([dense(c) for c, _ in self._eq]).reshape(len(self._eq), n)
        b_eq = np.array([r for _, r in self._eq])
        logs = [PerspectiveLog(w, dense(a), a0, dense(d), d0, s) for w, a, a0, d, d0, s in self._logs]
        mod = np.array(self._mod, dtype=float).reshape(-1, 3)
        return ConicProgram(
            n=n,
            c=dense(self._obj),
            c0=self.c0,
            logs=logs,
            G=G,
            h=h,
            lin_names=[name for _, _, name in self._lin],
            A_eq=A_eq,
            b_eq=b_eq,
            mod_re=mod[:, 0].astype(int),
            mod_im=mod[:, 1].astype(int),
            mod_bound=mod[:, 2],
            quads=list(self._quads),
            lmis=list(self._lmis),
            x0=x0,
            variables=self.variables,
        )


def read_complex(prog: ConicProgram, name: str, x: np.ndarray) -> np.ndarray:
    """Complex vector value of ``name`` with pinned entries restored."""
    info = prog.variables[name]
    free = interleaved_to_complex(x[info["index"]])
    pinned = info["pinned"]
    out = np.empty(info["size"] + len(pinned), dtype=complex)
    free_pos = [p for p in range(out.size) if p not in pinned]
    out[free_pos] = free
    for pos, val in pinned.items():
        out[pos] = val
    return out


def read_hermitian(prog: ConicProgram, name: str, x: np.ndarray) -> np.ndarray:
    info = prog.variables[name]
    return coords_to_hermitian(x[info["index"]], info["M"])
