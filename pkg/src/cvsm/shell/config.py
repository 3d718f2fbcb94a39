"""Run configuration with range and path validation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from ..errors import InvalidConfiguration

SEED_ENV = "CVSM_SEED"

# name -> (lower bound, inclusive?)
_RANGES = {
    "dim": (1, True),
    "margin": (0.0, False),
    "noise": (1, True),
    "lambda": (0.0, True),
    "step": (0.0, False),
    "batch": (1, True),
    "epochs": (0, True),
    "k": (1, True),
}


def resolve_seed(cli_seed: int | None, env=None) -> int:
    """``CVSM_SEED`` wins over the command-line seed; the default is 0."""
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw is not None and raw.strip():
        try:
            return int(raw)
        except ValueError:
            raise InvalidConfiguration(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return 0 if cli_seed is None else cli_seed


@dataclass
class RunConfig:
    family: str
    hyper: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)  # role -> path or list of paths, all must exist
    seed: int = 0

    def validate(self):
        for name, value in self.hyper.items():
            if value is None or name not in _RANGES:
                continue
            lo, inclusive = _RANGES[name]
            if value < lo or (not inclusive and value == lo):
                op = ">=" if inclusive else ">"
                raise InvalidConfiguration(f"--{name} must be {op} {lo}, got {value}")
        alpha = self.hyper.get("alpha")
        if alpha is not None and not 0.0 <= alpha <= 1.0:
            raise InvalidConfiguration(f"--alpha must lie in [0, 1], got {alpha}")
        for role, p in self.paths.items():
            for path in p if isinstance(p, (list, tuple)) else [p]:
                if path is not None and not os.path.isfile(path):
                    raise InvalidConfiguration(f"{role} file not found: {path}")
        return self
