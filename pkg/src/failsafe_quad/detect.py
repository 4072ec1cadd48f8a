"""Motor-failure identification from the sign pattern of state spikes.

Each failure combination pushes ``(p, q, r, phi, theta)`` in a characteristic
direction right after the cut. A blank cell in the signature table means the
channel is unconstrained. When several rows match, the row constraining the
most channels wins; equally specific matches are reported as ambiguous.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError

CHANNELS = ("p", "q", "r", "phi", "theta")
UP, NONE, DOWN = 1, 0, -1

# failed motors -> required trend per channel (absent = don't care)
SIGNATURES: dict[frozenset, dict[str, int]] = {
    frozenset({1}): {"q": UP, "r": DOWN, "theta": UP},
    frozenset({2}): {"p": DOWN, "r": UP, "phi": DOWN},
    frozenset({3}): {"q": DOWN, "r": DOWN, "theta": DOWN},
    frozenset({4}): {"p": UP, "r": UP, "phi": UP},
    frozenset({1, 3}): {"r": DOWN},
    frozenset({2, 4}): {"r": UP},
    frozenset({2, 3, 4}): {"q": DOWN, "r": UP, "theta": DOWN},
    frozenset({1, 3, 4}): {"p": UP, "r": DOWN, "phi": UP},
    frozenset({1, 2, 4}): {"q": UP, "r": UP, "theta": UP},
    frozenset({1, 2, 3}): {"p": DOWN, "r": DOWN, "phi": DOWN},
}


@dataclass(frozen=True)
class SpikeSignature:
    p: int = NONE
    q: int = NONE
    r: int = NONE
    phi: int = NONE
    theta: int = NONE

    def __post_init__(self):
        for ch in CHANNELS:
            if getattr(self, ch) not in (UP, NONE, DOWN):
                raise ValueError(f"trend for {ch} must be -1, 0 or 1")

    def as_dict(self) -> dict[str, int]:
        return {ch: getattr(self, ch) for ch in CHANNELS}

    def __str__(self):
        mark = {UP: "up", DOWN: "down", NONE: "-"}
        return " ".join(f"{ch}:{mark[getattr(self, ch)]}" for ch in CHANNELS)


@dataclass(frozen=True)
class FailureVerdict:
    """Classifier output.

    ``failed`` is the identified motor set, an empty set when nothing moved,
    or ``None`` when the pattern is unknown or ambiguous (``ties`` then lists
    the equally good candidates).
    """

    failed: frozenset | None
    detection_time: float = math.nan
    confidence: int = 0
    ties: tuple = field(default=())

    @property
    def unknown(self) -> bool:
        return self.failed is None

    def label(self) -> str:
        if self.failed is None:
            return "unknown"
        if not self.failed:
            return "none"
        return ",".join(str(i) for i in sorted(self.failed))


def classify(sig: SpikeSignature, t: float = math.nan) -> FailureVerdict:
    trends = sig.as_dict()
    if all(v == NONE for v in trends.values()):
        return FailureVerdict(frozenset(), t, 0)
    matches = [
        (len(row), failed)
        for failed, row in SIGNATURES.items()
        if all(trends[ch] == want for ch, want in row.items())
    ]
    if not matches:
        return FailureVerdict(None, t, 0)
    best = max(n for n, _ in matches)
    top = [failed for n, failed in matches if n == best]
    if len(top) > 1:
        return FailureVerdict(None, t, best, tuple(sorted(tuple(sorted(f)) for f in top)))
    return FailureVerdict(top[0], t, best)


@dataclass(frozen=True)
class DetectorConfig:
    window: float = 0.1
    thresholds: tuple[float, float, float, float, float] = (1.0, 1.0, 0.1, 0.05, 0.05)
    hold: float = 0.05
    sample_period: float = 1.0 / 450.0

    @property
    def window_samples(self) -> int:
        return int(round(self.window / self.sample_period)) + 1

    @property
    def hold_samples(self) -> int:
        return max(1, int(round(self.hold / self.sample_period)))


def extract_signature(window, thresholds, min_samples: int = 2) -> SpikeSignature:
    """Trend of each channel from first to last row of ``window`` (rows of p, q, r, phi, theta)."""
    w = np.asarray(window, float)
    if w.ndim != 2 or w.shape[1] != 5 or w.shape[0] < max(2, min_samples):
        raise InsufficientDataError(f"need at least {max(2, min_samples)} samples of 5 channels")
    change = w[-1] - w[0]
    # Angles may wrap at +-pi between the two samples.
    change[3:] = (change[3:] + math.pi) % (2 * math.pi) - math.pi
    trends = {}
    for ch, d, thr in zip(CHANNELS, change, thresholds):
        trends[ch] = UP if d > thr else (DOWN if d < -thr else NONE)
    return SpikeSignature(**trends)


class FailureDetector:
    """Streaming detector: sliding window, classification, then a short confirmation hold.

    The first confirmed failure verdict is latched and returned by every
    later ``update`` call.
    """

    def __init__(self, config: DetectorConfig | None = None):
        self.config = config or DetectorConfig()
        self._buf: deque = deque(maxlen=self.config.window_samples)
        self._candidate: frozenset | None = None
        self._count = 0
        self.verdict: FailureVerdict | None = None

    def update(self, t: float, p: float, q: float, r: float, phi: float, theta: float) -> FailureVerdict | None:
        if self.verdict is not None:
            return self.verdict
        self._buf.append((p, q, r, phi, theta))
        if len(self._buf) < self._buf.maxlen:
            return None
        v = classify(extract_signature(self._buf, self.config.thresholds), t)
        if v.failed:
            if v.failed == self._candidate:
                self._count += 1
            else:
                self._candidate, self._count = v.failed, 1
            if self._count >= self.config.hold_samples:
                self.verdict = FailureVerdict(v.failed, t, v.confidence)
                return self.verdict
        else:
            self._candidate, self._count = None, 0
        return None


def replay(rows, config: DetectorConfig | None = None) -> list[FailureVerdict]:
    """Run the detector over ``(t, p, q, r, phi, theta)`` rows; returns the latched verdicts."""
    det = FailureDetector(config)
    for t, p, q, r, phi, theta in rows:
        v = det.update(t, p, q, r, phi, theta)
        if v is not None:
            return [v]
    return []
