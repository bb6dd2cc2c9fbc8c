"""Model configuration."""

from dataclasses import dataclass

from ..errors import InvalidConfig


@dataclass(frozen=True)
class ModelConfig:
    """Shape and seed of the toy transformer.

    Layer/head-adaptive policies need plurality to be meaningful, so at
    least 2 layers and 2 heads are required. Identical (config, seed)
    pairs yield bit-identical weights.
    """

    num_layers: int = 3
    num_heads: int = 4
    head_dim: int = 16
    vocab_size: int = 512
    seed: int = 0
    max_seq_len: int = 4096

    def __post_init__(self):
        if self.num_layers < 2:
            raise InvalidConfig(f"num_layers must be >= 2, got {self.num_layers}")
        if self.num_heads < 2:
            raise InvalidConfig(f"num_heads must be >= 2, got {self.num_heads}")
        if self.head_dim < 1:
            raise InvalidConfig(f"head_dim must be >= 1, got {self.head_dim}")
        if self.vocab_size < 8:
            raise InvalidConfig(f"vocab_size must be >= 8, got {self.vocab_size}")
        if self.max_seq_len < 1:
            raise InvalidConfig("max_seq_len must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must fit in 64 unsigned bits")

    @property
    def hidden_dim(self):
        return self.num_heads * self.head_dim

    def to_dict(self):
        return {
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "head_dim": self.head_dim,
            "vocab_size": self.vocab_size,
            "seed": self.seed,
            "max_seq_len": self.max_seq_len,
        }

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in (
            "num_layers", "num_heads", "head_dim", "vocab_size", "seed", "max_seq_len"
        ) if k in d}
        return cls(**known)
