"""Shared types, config validation and the seeded randomness contract."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence as Seq

import numpy as np

BOS, EOS, MASK = 0, 1, 2
RESERVED_SYMBOLS = ("<bos>", "<eos>", "<mask>")

# floor used instead of -inf for zero-probability tokens
LOGPROB_FLOOR = -1e9

UINT64_MAX = 2**64 - 1


class SpecDecError(ValueError):
    """Error with a stable machine-readable ``code``.

    ``where`` locates the problem (a field name, line number, context key...).
    ``exit_code`` is what the CLI returns for it: 2 for invalid arguments and
    configurations, 1 for unreadable files and model problems.
    """

    exit_code = 1

    def __init__(self, code: str, message: str = "", where=None):
        self.code = code
        self.where = where
        text = code if not message else f"{code}: {message}"
        if where is not None:
            text += f" (at {where})"
        super().__init__(text)


class ConfigError(SpecDecError):
    exit_code = 2


class Strategy(str, enum.Enum):
    AR_GREEDY = "ar-greedy"
    AR_BEAM = "ar-beam"
    SPECDEC_VANILLA = "specdec-vanilla"
    SPECDEC_RELAXED = "specdec-relaxed"

    @property
    def is_speculative(self) -> bool:
        return self in (Strategy.SPECDEC_VANILLA, Strategy.SPECDEC_RELAXED)


@dataclass(frozen=True)
class Vocabulary:
    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if len(symbols) < 4:
            raise SpecDecError("VOCAB_TOO_SMALL", f"need >= 4 symbols, got {len(symbols)}")
        if symbols[:3] != RESERVED_SYMBOLS:
            raise SpecDecError("BAD_RESERVED_TOKENS",
                               f"first symbols must be {list(RESERVED_SYMBOLS)}", where="vocab[0:3]")
        if len(set(symbols)) != len(symbols):
            seen = set()
            for i, s in enumerate(symbols):
                if s in seen:
                    raise SpecDecError("DUPLICATE_SYMBOL", repr(s), where=f"vocab[{i}]")
                seen.add(s)

    @classmethod
    def from_content(cls, content: Seq[str]) -> "Vocabulary":
        return cls(RESERVED_SYMBOLS + tuple(content))

    @classmethod
    def synthetic(cls, size: int) -> "Vocabulary":
        """Reserved symbols followed by ``t3``, ``t4``, ... up to ``size`` entries."""
        return cls(RESERVED_SYMBOLS + tuple(f"t{i}" for i in range(3, size)))

    def __len__(self):
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self._lookup()[symbol]

    def _lookup(self) -> dict:
        try:
            return self.__dict__["_index"]
        except KeyError:
            idx = {s: i for i, s in enumerate(self.symbols)}
            object.__setattr__(self, "_index", idx)
            return idx

    def __contains__(self, symbol) -> bool:
        return symbol in self._lookup()

    def encode(self, symbols: Seq[str]) -> list:
        lookup = self._lookup()
        return [lookup[s] for s in symbols]

    def decode(self, ids: Seq[int]) -> list:
        return [self.symbols[i] for i in ids]


def check_sequence(tokens: Seq[int], vocab_size: int, where: str = "sequence") -> None:
    """Raise unless ``tokens`` are in range and EOS only appears last."""
    if not tokens:
        return
    if min(tokens) >= 0 and max(tokens) < vocab_size and EOS not in tokens[:-1]:
        return
    for i, t in enumerate(tokens):
        if not 0 <= t < vocab_size:
            raise SpecDecError("TOKEN_OUT_OF_RANGE", f"token {t} not in [0, {vocab_size})",
                               where=f"{where}[{i}]")
        if t == EOS and i != len(tokens) - 1:
            raise SpecDecError("MISPLACED_EOS", "EOS must be the final token", where=f"{where}[{i}]")


@dataclass(frozen=True)
class CostModel:
    """Simulated time units per drafting event, verification event and AR step."""

    t_d: float = 1.0
    t_v: float = 2.0
    t_ar: float = 2.0

    def __post_init__(self):
        for name in ("t_d", "t_v", "t_ar"):
            v = getattr(self, name)
            if not v >= 0:
                raise ConfigError("NEGATIVE_COST", f"{name}={v}", where=name)

    @classmethod
    def parse(cls, text: str) -> "CostModel":
        parts = text.split(",")
        if len(parts) != 3:
            raise ConfigError("BAD_COSTS", f"expected td,tv,tar; got {text!r}", where="costs")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as exc:
            raise ConfigError("BAD_COSTS", str(exc), where="costs") from None


@dataclass(frozen=True)
class DecodeConfig:
    k: int = 25
    beta: int = 3
    tau: float = 1.0
    max_len: int = 256
    strategy: Strategy = Strategy.SPECDEC_RELAXED
    beam_width: int = 5
    seed: int = 0

    def to_dict(self) -> dict:
        return {"k": self.k, "beta": self.beta, "tau": self.tau, "max_len": self.max_len,
                "strategy": self.strategy.value, "beam_width": self.beam_width, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "DecodeConfig":
        d = dict(d)
        d["strategy"] = Strategy(d["strategy"])
        return cls(**d)


def validate_config(cfg: DecodeConfig, vocab_size: int) -> DecodeConfig:
    if cfg.k < 1:
        raise ConfigError("NONPOSITIVE_K", f"k={cfg.k}", where="k")
    if cfg.beta < 1:
        raise ConfigError("NONPOSITIVE_BETA", f"beta={cfg.beta}", where="beta")
    if cfg.beta > vocab_size:
        raise ConfigError("BETA_EXCEEDS_VOCAB", f"beta={cfg.beta} > vocab size {vocab_size}",
                          where="beta")
    if not cfg.tau >= 0:  # also rejects NaN
        raise ConfigError("NEGATIVE_TAU", f"tau={cfg.tau}", where="tau")
    if cfg.max_len < 1:
        raise ConfigError("ZERO_MAX_LEN", f"max_len={cfg.max_len}", where="max_len")
    if cfg.beam_width < 1:
        raise ConfigError("NONPOSITIVE_BEAM_WIDTH", f"beam_width={cfg.beam_width}",
                          where="beam_width")
    if not 0 <= cfg.seed <= UINT64_MAX:
        raise ConfigError("BAD_SEED", f"seed={cfg.seed} is not a 64-bit unsigned value",
                          where="seed")
    if not isinstance(cfg.strategy, Strategy):
        raise ConfigError("BAD_STRATEGY", repr(cfg.strategy), where="strategy")
    return cfg


@dataclass(frozen=True)
class IterationRecord:
    drafted: int
    emitted: int
    bifurcation: int
    draft_cost: float
    verify_cost: float

    def to_dict(self) -> dict:
        return {"drafted": self.drafted, "emitted": self.emitted, "bifurcation": self.bifurcation,
                "draft_cost": self.draft_cost, "verify_cost": self.verify_cost}


def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent PCG64 stream keyed by ``(seed, stream_id)``.

    Draw raw 64-bit values with ``rng.integers(0, 2**64, dtype=np.uint64)``.
    """
    for name, v in (("seed", seed), ("stream_id", stream_id)):
        if not 0 <= v <= UINT64_MAX:
            raise ConfigError("BAD_SEED", f"{name}={v}", where=name)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream_id])))
