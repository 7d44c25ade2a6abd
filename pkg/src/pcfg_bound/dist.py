from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.special import logsumexp

EOS = "</s>"


@dataclass(frozen=True)
class TokenDistribution:
    """Normalized distribution over terminals at one (1-based) position.

    Only outcomes with positive mass are stored.  ``eos`` is the log-probability
    that the sentence ends here; it is ``None`` for masked distributions.
    """

    position: int
    logprobs: dict[str, float] = field(default_factory=dict)
    eos: float | None = None

    def logprob(self, token: str) -> float:
        if token == EOS and self.eos is not None:
            return self.eos
        return self.logprobs.get(token, -math.inf)

    def prob(self, token: str) -> float:
        return math.exp(self.logprob(token))

    def log_total(self) -> float:
        vals = list(self.logprobs.values())
        if self.eos is not None:
            vals.append(self.eos)
        return float(logsumexp(vals)) if vals else -math.inf

    def probs(self) -> dict[str, float]:
        out = {k: math.exp(v) for k, v in self.logprobs.items()}
        if self.eos is not None:
            out[EOS] = math.exp(self.eos)
        return out
