"""Synthetic multipath CSI, imperfect-CSI perturbation and the CSID dataset file."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SystemConfig:
    K: int = 4
    N_T: int = 8
    N_F: int = 4
    P_max: float = 1.0
    sigma2: float = 1.0
    paths: int = 10
    seed: int = 0
    # physical settings kept as metadata only; no absolute pathloss is applied
    bandwidth_hz: float = 0.5e9
    noise_psd_dbm_hz: float = -174.0

    def __post_init__(self):
        if not (self.N_T >= self.N_F >= self.K >= 1):
            raise ValueError(f"need N_T >= N_F >= K >= 1, got N_T={self.N_T} N_F={self.N_F} K={self.K}")
        if self.P_max <= 0 or self.sigma2 <= 0:
            raise ValueError("P_max and sigma2 must be positive")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ErrorLevel:
    delta2_E: float

    def __post_init__(self):
        if self.delta2_E < 0:
            raise ValueError("error variance must be nonnegative")

    @classmethod
    def from_db(cls, db: float) -> "ErrorLevel":
        return cls(10.0 ** (db / 10.0))

    @property
    def db(self) -> float:
        return 10.0 * np.log10(self.delta2_E)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.delta2_E))


def steering_vector(theta: np.ndarray, n_t: int) -> np.ndarray:
    """Half-wavelength ULA response; ``theta`` of shape (...,) gives (..., n_t)."""
    t = np.arange(n_t)
    return np.exp(1j * np.pi * t * np.sin(np.asarray(theta))[..., None])


def synth_channel(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """One N_T x K channel: h_k = P^-1/2 sum_p alpha_kp a(theta_kp)."""
    K, P = config.K, config.paths
    theta = rng.uniform(-np.pi / 2, np.pi / 2, size=(K, P))
    alpha = (rng.standard_normal((K, P)) + 1j * rng.standard_normal((K, P))) / np.sqrt(2)
    h = np.einsum("kp,kpt->kt", alpha, steering_vector(theta, config.N_T)) / np.sqrt(P)
    return h.T.copy()


def sample_rng(seed: int, index: int) -> np.random.Generator:
    # one stream per (seed, index) so generation order never matters
    return np.random.default_rng([seed, index])


def synth_samples(config: SystemConfig, n: int, seed: int | None = None, start: int = 0) -> np.ndarray:
    seed = config.seed if seed is None else seed
    out = np.empty((n, config.N_T, config.K), dtype=np.complex128)
    for i in range(n):
        out[i] = synth_channel(config, sample_rng(seed, start + i))
    return out


def perturb_csi(H: np.ndarray, level: ErrorLevel | float, rng: np.random.Generator) -> np.ndarray:
    """Imperfect CSI H + E with E i.i.d. CN(0, delta2_E)."""
    d2 = level.delta2_E if isinstance(level, ErrorLevel) else float(level)
    if d2 < 0:
        raise ValueError("error variance must be nonnegative")
    H = np.asarray(H)
    if d2 == 0:
        return H.copy()
    s = np.sqrt(d2 / 2)
    E = s * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))
    return H + E


def split_dataset(n: int) -> tuple[range, range, range]:
    """8:1:1 split by floor allocation; the remainder goes to train."""
    if n < 10:
        raise ValueError("need at least 10 samples to split")
    n_val = n_test = n // 10
    n_train = n - n_val - n_test
    return range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n)


@dataclass
class CsiDataset:
    config: SystemConfig
    samples: np.ndarray  # (n, N_T, K) complex
    split: tuple[range, range, range] | None = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128).reshape(-1, self.config.N_T, self.config.K)
        if self.split is None and len(self.samples) >= 10:
            self.split = split_dataset(len(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def _part(self, i: int) -> np.ndarray:
        if self.split is None:
            raise ValueError("dataset has no split (fewer than 10 samples)")
        r = self.split[i]
        return self.samples[r.start:r.stop]

    @property
    def train(self) -> np.ndarray:
        return self._part(0)

    @property
    def val(self) -> np.ndarray:
        return self._part(1)

    @property
    def test(self) -> np.ndarray:
        return self._part(2)

    def manifest(self) -> dict:
        out = {"count": len(self), "config": self.config.to_dict()}
        if self.split is not None:
            out["split"] = {name: [r.start, r.stop] for name, r in zip(("train", "val", "test"), self.split)}
        return out


def make_dataset(config: SystemConfig, n: int, seed: int | None = None) -> CsiDataset:
    return CsiDataset(config, synth_samples(config, n, seed))


# -- CSID file -------------------------------------------------------------------------

_CSID_MAGIC = b"CSID"
_CSID_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


def write_csid(path, samples: np.ndarray) -> None:
    """Write (n, N_T, K) complex samples as float32 real then imaginary blocks."""
    samples = np.asarray(samples)
    if samples.ndim != 3:
        raise ValueError("samples must have shape (n, N_T, K)")
    n, n_t, k = samples.shape
    body = np.empty((n, 2, n_t, k), dtype="<f4")
    body[:, 0] = samples.real
    body[:, 1] = samples.imag
    Path(path).write_bytes(_HEADER.pack(_CSID_MAGIC, _CSID_VERSION, k, n_t, n) + body.tobytes())


def read_csid(path, expect: SystemConfig | None = None) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != _CSID_MAGIC:
        raise ValueError("bad magic")
    if len(buf) < _HEADER.size:
        raise ValueError("truncated payload")
    _, version, k, n_t, n = _HEADER.unpack_from(buf)
    if version != _CSID_VERSION:
        raise ValueError(f"unsupported version {version}")
    if expect is not None and (expect.K, expect.N_T) != (k, n_t):
        raise ValueError(f"config mismatch: file has K={k}, N_T={n_t}; expected K={expect.K}, N_T={expect.N_T}")
    need = n * 2 * n_t * k * 4
    payload = buf[_HEADER.size:]
    if len(payload) != need:
        raise ValueError("truncated payload")
    body = np.frombuffer(payload, dtype="<f4").reshape(n, 2, n_t, k).astype(np.float64)
    return body[:, 0] + 1j * body[:, 1]


def manifest_path(path) -> Path:
    return Path(str(path) + ".json")


def save_dataset(path, ds: CsiDataset) -> None:
    """Write the CSID file plus a JSON split manifest beside it."""
    write_csid(path, ds.samples)
    manifest_path(path).write_text(json.dumps(ds.manifest(), indent=2) + "\n")


def load_dataset(path, config: SystemConfig) -> CsiDataset:
    samples = read_csid(path, expect=config)
    split = None
    mp = manifest_path(path)
    if mp.exists():
        parts = json.loads(mp.read_text()).get("split")
        if parts:
            split = tuple(range(*parts[name]) for name in ("train", "val", "test"))
            if split[-1].stop != len(samples):
                raise ValueError("split manifest does not match sample count")
    return CsiDataset(config, samples, split)
