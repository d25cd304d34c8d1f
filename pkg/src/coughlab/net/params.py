"""Network configuration and weight containers.

Gate blocks are stacked along the first axis in the order
``input, forget, cell, output``; ``LstmCellParams.gate`` slices them back out.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..errors import ConfigError

GATES = ("input", "forget", "cell", "output")
DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 42
    hidden_units: int = 50
    num_bilstm_layers: int = 2
    dropout_rate: float = 0.3
    num_classes: int = 2
    seed: int = 0
    standardize_inputs: bool = False

    def __post_init__(self):
        if min(self.input_dim, self.hidden_units, self.num_bilstm_layers) < 1:
            raise ConfigError("input_dim, hidden_units and num_bilstm_layers must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")

    def replace(self, **kw) -> "NetworkConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def layer_input_dim(self, layer: int) -> int:
        return self.input_dim if layer == 0 else 2 * self.hidden_units

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every trainable array, in canonical order."""
        h = self.hidden_units
        out = {}
        for layer in range(self.num_bilstm_layers):
            d = self.layer_input_dim(layer)
            for direction in DIRECTIONS:
                p = f"l{layer}.{direction}"
                out[f"{p}.W"] = (4 * h, d)
                out[f"{p}.U"] = (4 * h, h)
                out[f"{p}.b"] = (4 * h,)
        out["out.W"] = (2 * h, self.num_classes)
        out["out.b"] = (self.num_classes,)
        return out

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.shapes().values()))


@dataclass
class LstmCellParams:
    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = self.hidden
        k = GATES.index(name)
        s = slice(k * h, (k + 1) * h)
        return self.W[s], self.U[s], self.b[s]


class NetworkParams:
    """Ordered name -> array mapping for all weights.

    Names ``l{layer}.{fwd|bwd}.{W|U|b}`` for the recurrent cells and
    ``out.W``/``out.b`` for the classifier. Optional non-trainable buffers
    ``in.mean``/``in.std`` hold input standardisation statistics.
    """

    BUFFERS = ("in.mean", "in.std")

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = dict(arrays)

    def __getitem__(self, name):
        return self.arrays[name]

    def __setitem__(self, name, value):
        self.arrays[name] = value

    def __contains__(self, name):
        return name in self.arrays

    def trainable(self):
        return [k for k in self.arrays if k not in self.BUFFERS]

    def cell(self, layer: int, direction: str) -> LstmCellParams:
        p = f"l{layer}.{direction}"
        return LstmCellParams(self.arrays[f"{p}.W"], self.arrays[f"{p}.U"], self.arrays[f"{p}.b"])

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams({k: np.zeros_like(self.arrays[k]) for k in self.trainable()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self.trainable()])

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(self.arrays[k], self.arrays[k]) for k in self.trainable())))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def equals(self, other: "NetworkParams") -> bool:
        if list(self.arrays) != list(other.arrays):
            return False
        return all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)


def glorot_range(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(cfg: NetworkConfig) -> NetworkParams:
    """Glorot-uniform weights per gate matrix, zero biases, forget bias 1."""
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden_units
    arrays = {}
    for name, shape in cfg.shapes().items():
        if name == "out.W":
            r = glorot_range(shape[0], shape[1])
            arrays[name] = rng.uniform(-r, r, size=shape)
        elif name.endswith(".W") or name.endswith(".U"):
            fan_in = shape[1]
            blocks = [rng.uniform(-glorot_range(fan_in, h), glorot_range(fan_in, h), size=(h, fan_in))
                      for _ in GATES]
            arrays[name] = np.vstack(blocks)
        else:
            b = np.zeros(shape)
            if name != "out.b":
                b[h : 2 * h] = 1.0
            arrays[name] = b
    return NetworkParams(arrays)


def check_shapes(params: NetworkParams, cfg: NetworkConfig) -> list[str]:
    """Return a list of human-readable shape problems (empty if consistent)."""
    problems = []
    for name, shape in cfg.shapes().items():
        if name not in params:
            problems.append(f"missing array {name}")
        elif params[name].shape != shape:
            problems.append(f"{name}: expected {shape}, found {params[name].shape}")
    for name in NetworkParams.BUFFERS:
        if name in params and params[name].shape != (cfg.input_dim,):
            problems.append(f"{name}: expected ({cfg.input_dim},), found {params[name].shape}")
    return problems
