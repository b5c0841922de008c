"""Node geometry, path loss, Rician fading and composite channel assembly.

All quantities are linear-scale SI. dB / dBm values are accepted only at the
config boundary (:meth:`ScenarioConfig.from_dict`) and converted immediately.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

D_MIN = 0.1
RICIAN_CAP = 1e12
CHANNEL_FORMAT = "irs-wpcn-channels"
CHANNEL_VERSION = 1


class InvalidGeometryError(ValueError):
    """Raised when a link distance is not positive."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def _per_hap(value, K: int, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, K)
    if arr.size != K:
        raise ValueError(f"{name} needs 1 or K={K} entries, got {arr.size}")
    return tuple(float(a) for a in arr)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and geometric parameters of one experiment instance.

    ``P`` and ``sigma2`` hold one entry per HAP (watts). A scalar passed to
    the constructor is broadcast to all K HAPs.
    """

    K: int = 4
    L: int = 4
    M: int = 2
    N_per_irs: int = 10
    T: float = 1.0
    eta: float = 0.7
    P: tuple[float, ...] | float = dbm_to_watts(33.0)
    sigma2: tuple[float, ...] | float = dbm_to_watts(-80.0)
    d_hap: float = 3.0
    d_wd: float = 7.0
    d_i: float = 7.0
    d_h: float = 2.0
    alpha_irs: float = 2.2
    alpha_direct: float = 3.5
    rician_irs: float = db_to_linear(3.0)
    rician_direct: float = 0.0
    ref_loss: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", _per_hap(self.P, self.K, "P"))
        object.__setattr__(self, "sigma2", _per_hap(self.sigma2, self.K, "sigma2"))
        if min(self.K, self.L, self.M, self.N_per_irs) < 1:
            raise ValueError("K, L, M and N_per_irs must all be >= 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if min(self.P) < 0 or min(self.sigma2) < 0 or self.ref_loss < 0:
            raise ValueError("powers must be non-negative")
        if self.rician_irs < 0 or self.rician_direct < 0:
            raise ValueError("Rician factors must be non-negative")

    @property
    def N(self) -> int:
        return self.L * self.N_per_irs

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["P"] = list(self.P)
        d["sigma2"] = list(self.sigma2)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        """Build a config from JSON-shaped data.

        Power fields may be given in dBm with a ``_dbm`` suffix (``P_dbm``,
        ``sigma2_dbm``); ``ref_loss``, ``rician_irs`` and ``rician_direct``
        may be given in dB with a ``_db`` suffix.
        """
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key.endswith("_dbm"):
                base = key[: -len("_dbm")]
                conv = np.vectorize(dbm_to_watts)(np.asarray(value, dtype=float))
            elif key.endswith("_db"):
                base = key[: -len("_db")]
                conv = np.vectorize(db_to_linear)(np.asarray(value, dtype=float))
            else:
                base, conv = key, value
            if base not in names:
                raise ValueError(f"unknown scenario field {key!r}")
            if base in kwargs:
                raise ValueError(f"field {base!r} given twice")
            if isinstance(conv, np.ndarray):
                conv = conv.tolist()
            kwargs[base] = conv
        for key in ("K", "L", "M", "N_per_irs", "seed"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class NodePositions:
    hap: np.ndarray  # (K, 3)
    wd: np.ndarray  # (K, 3)
    irs: np.ndarray  # (L, 3)


@dataclass(frozen=True)
class ChannelSet:
    """Sampled UL channels and the composite matrices built from them.

    Index conventions: ``e[k, l]`` WD k -> IRS l (length N_per_irs),
    ``H[l, i]`` IRS l -> HAP i (M x N_per_irs), ``g[k, i]`` WD k -> HAP i
    (length M), ``psi[k, i]`` the M x (N+1) composite ``[H_i diag(e_k), g_ki]``.
    DL channels are the transposes (reciprocity); only UL is stored.
    """

    e: np.ndarray
    H: np.ndarray
    g: np.ndarray
    psi: np.ndarray = field(init=False)

    def __post_init__(self):
        psi = compose_psi(self.e, self.H, self.g)
        for arr in (self.e, self.H, self.g, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def K(self) -> int:
        return self.e.shape[0]

    @property
    def M(self) -> int:
        return self.g.shape[2]

    @property
    def N(self) -> int:
        return self.e.shape[1] * self.e.shape[2]

    def without_irs(self) -> "ChannelSet":
        """Copy with every IRS link zeroed, leaving only direct links."""
        return ChannelSet(np.zeros_like(self.e), np.zeros_like(self.H), self.g.copy())


def compose_psi(e: np.ndarray, H: np.ndarray, g: np.ndarray) -> np.ndarray:
    K, L, Nl = e.shape
    M = g.shape[2]
    # H_i = [H_{1,i}, ..., H_{L,i}]  (M x N), e_k stacked over IRSs (N,)
    H_cat = np.transpose(H, (1, 2, 0, 3)).reshape(K, M, L * Nl)
    e_cat = e.reshape(K, L * Nl)
    psi = np.empty((K, K, M, L * Nl + 1), dtype=complex)
    psi[:, :, :, :-1] = H_cat[None, :, :, :] * e_cat[:, None, None, :]
    psi[:, :, :, -1] = g
    return psi


def place_nodes(cfg: ScenarioConfig) -> NodePositions:
    """Place HAPs, WDs (z = 0 plane) and IRSs (height ``d_h``).

    Pair k sits at azimuth 2*pi*k/K; a negative ``d_hap`` puts HAP k on the
    opposite side of the origin. IRS l sits at radial distance ``d_i`` and
    azimuth 2*pi*l/L.
    """
    K, L = cfg.K, cfg.L
    ang = 2 * np.pi * np.arange(K) / K
    hap_ang = ang + (np.pi if cfg.d_hap < 0 else 0.0)
    r = abs(cfg.d_hap)
    hap = np.stack([r * np.cos(hap_ang), r * np.sin(hap_ang), np.zeros(K)], axis=1)
    wd = np.stack([cfg.d_wd * np.cos(ang), cfg.d_wd * np.sin(ang), np.zeros(K)], axis=1)
    irs_ang = 2 * np.pi * np.arange(L) / L
    irs = np.stack(
        [cfg.d_i * np.cos(irs_ang), cfg.d_i * np.sin(irs_ang), np.full(L, cfg.d_h)], axis=1
    )
    # exact zeros instead of 1e-16 residue from cos/sin
    for arr in (hap, wd, irs):
        arr[np.abs(arr) < 1e-12] = 0.0
    return NodePositions(hap=hap, wd=wd, irs=irs)


def path_loss(distance: float, exponent: float, ref_loss: float, d_min: float = D_MIN) -> float:
    """Linear power gain ``ref_loss * d**-exponent`` with d clamped at ``d_min``."""
    if not float(distance) >= 0:
        raise InvalidGeometryError(f"invalid link distance {distance!r}")
    d = max(float(distance), d_min)
    if not d > 0:
        raise InvalidGeometryError(f"non-positive link distance {distance!r}")
    return ref_loss * d ** (-exponent)


def steering(n: int, cos_angle: float) -> np.ndarray:
    """Half-wavelength ULA response along the x axis, unit-modulus entries."""
    return np.exp(-1j * np.pi * np.arange(n) * cos_angle)


def sample_rician(
    rows: int,
    cols: int,
    gain: float,
    kappa: float,
    rng: np.random.Generator,
    los: np.ndarray | None = None,
) -> np.ndarray:
    """Draw ``sqrt(gain) * (sqrt(k/(1+k)) H_los + sqrt(1/(1+k)) H_nlos)``.

    ``los`` defaults to the all-ones matrix. ``kappa`` is capped at 1e12 so
    that ``inf`` yields the LoS-only limit.
    """
    if gain < 0 or kappa < 0:
        raise ValueError("gain and kappa must be non-negative")
    kappa = min(float(kappa), RICIAN_CAP)
    if los is None:
        los = np.ones((rows, cols), dtype=complex)
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    return np.sqrt(gain) * (np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * nlos)


def _cos_x(src: np.ndarray, dst: np.ndarray) -> float:
    d = dst - src
    n = np.linalg.norm(d)
    return float(d[0] / n) if n > 0 else 0.0


def assemble_channels(
    cfg: ScenarioConfig, positions: NodePositions | None = None, rng: np.random.Generator | None = None
) -> ChannelSet:
    """Sample every UL channel of the scenario.

    The LoS component of a link is the rank-one outer product of ULA
    responses evaluated at the link direction (x-axis arrays, half-wavelength
    spacing). Sampling order is fixed, so the result is a pure function of
    ``(cfg, seed)``.
    """
    if positions is None:
        positions = place_nodes(cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    K, L, M, Nl = cfg.K, cfg.L, cfg.M, cfg.N_per_irs
    e = np.empty((K, L, Nl), dtype=complex)
    H = np.empty((L, K, M, Nl), dtype=complex)
    g = np.empty((K, K, M), dtype=complex)

    for k in range(K):
        for l in range(L):
            src, dst = positions.wd[k], positions.irs[l]
            gain = path_loss(np.linalg.norm(dst - src), cfg.alpha_irs, cfg.ref_loss)
            los = steering(Nl, _cos_x(dst, src))[:, None]
            e[k, l] = sample_rician(Nl, 1, gain, cfg.rician_irs, rng, los)[:, 0]
    for l in range(L):
        for i in range(K):
            src, dst = positions.irs[l], positions.hap[i]
            gain = path_loss(np.linalg.norm(dst - src), cfg.alpha_irs, cfg.ref_loss)
            los = np.outer(steering(M, _cos_x(dst, src)), steering(Nl, _cos_x(src, dst)).conj())
            H[l, i] = sample_rician(M, Nl, gain, cfg.rician_irs, rng, los)
    for k in range(K):
        for i in range(K):
            src, dst = positions.wd[k], positions.hap[i]
            gain = path_loss(np.linalg.norm(dst - src), cfg.alpha_direct, cfg.ref_loss)
            los = steering(M, _cos_x(dst, src))[:, None]
            g[k, i] = sample_rician(M, 1, gain, cfg.rician_direct, rng, los)[:, 0]
    return ChannelSet(e=e, H=H, g=g)


def generate(cfg: ScenarioConfig, seed: int | None = None) -> ChannelSet:
    """Convenience wrapper: positions from ``cfg`` and an RNG from ``seed``."""
    seed = cfg.seed if seed is None else seed
    return assemble_channels(cfg, place_nodes(cfg), np.random.default_rng(seed))


# ---------------------------------------------------------------- serialization

def complex_to_pairs(arr: np.ndarray) -> list[list[float]]:
    flat = np.asarray(arr, dtype=complex).ravel()
    return [[float(z.real), float(z.imag)] for z in flat]


def pairs_to_complex(pairs, shape) -> np.ndarray:
    a = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return (a[:, 0] + 1j * a[:, 1]).reshape(shape)


def channels_to_dict(ch: ChannelSet, cfg: ScenarioConfig | None = None) -> dict[str, Any]:
    K, L, Nl = ch.e.shape
    return {
        "format": CHANNEL_FORMAT,
        "version": CHANNEL_VERSION,
        "dims": {"K": K, "L": L, "M": ch.M, "N_per_irs": Nl},
        "config": None if cfg is None else cfg.to_dict(),
        "e": complex_to_pairs(ch.e),
        "H": complex_to_pairs(ch.H),
        "g": complex_to_pairs(ch.g),
    }


def channels_from_dict(data: dict[str, Any]) -> tuple[ChannelSet, ScenarioConfig | None]:
    if data.get("format") != CHANNEL_FORMAT:
        raise ValueError("not a channel file")
    if data.get("version") != CHANNEL_VERSION:
        raise ValueError(f"unsupported channel file version {data.get('version')!r}")
    d = data["dims"]
    K, L, M, Nl = d["K"], d["L"], d["M"], d["N_per_irs"]
    ch = ChannelSet(
        e=pairs_to_complex(data["e"], (K, L, Nl)),
        H=pairs_to_complex(data["H"], (L, K, M, Nl)),
        g=pairs_to_complex(data["g"], (K, K, M)),
    )
    cfg = None if data.get("config") is None else ScenarioConfig.from_dict(data["config"])
    return ch, cfg


def save_channels(path, ch: ChannelSet, cfg: ScenarioConfig | None = None) -> None:
    Path(path).write_text(json.dumps(channels_to_dict(ch, cfg)))


def load_channels(path) -> tuple[ChannelSet, ScenarioConfig | None]:
    return channels_from_dict(json.loads(Path(path).read_text()))
