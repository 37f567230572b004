"""Input signals for the plant harness.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` (what
``numpy.random.default_rng(seed)`` returns), so a run is reproducible from
its seed.
"""

import math

import numpy as np

INPUT_KINDS = ("constant", "white", "multisine", "prbs")


def default_frequencies(count):
    """``count`` incommensurate frequencies in (0, pi)."""
    return [0.3 + 2.3 * i / max(count, 1) + 0.07 * math.sqrt(i + 2) for i in range(count)]


def make_input(spec, length, seed=0, dim=None):
    """Return ``length`` input samples.

    ``spec`` keys: ``kind`` (one of ``INPUT_KINDS``), ``amplitude``,
    ``offset`` and ``gate`` (``[start, stop)``, zero outside) for all kinds;
    ``frequencies``/``phases`` for multisine (default: ``ceil(dim/2) + 1``
    frequencies), ``hold`` for PRBS, ``distribution`` (``uniform`` or
    ``normal``) for white noise.
    """
    kind = spec.get("kind", "multisine")
    amp = float(spec.get("amplitude", 1.0))
    offset = float(spec.get("offset", 0.0))
    rng = np.random.default_rng(seed)
    k = np.arange(length, dtype=float)
    if kind == "constant":
        u = np.full(length, amp)
    elif kind == "white":
        if spec.get("distribution", "uniform") == "normal":
            u = amp * rng.standard_normal(length)
        else:
            u = amp * rng.uniform(-1.0, 1.0, length)
    elif kind == "multisine":
        freqs = spec.get("frequencies")
        if freqs is None:
            freqs = default_frequencies(math.ceil((dim or 2) / 2) + 1)
        phases = spec.get("phases")
        if phases is None:
            phases = rng.uniform(0.0, 2.0 * math.pi, len(freqs))
        u = amp * sum(np.sin(w * k + ph) for w, ph in zip(freqs, phases))
    elif kind == "prbs":
        hold = int(spec.get("hold", 1))
        bits = rng.integers(0, 2, math.ceil(length / hold))
        u = amp * np.repeat(2.0 * bits - 1.0, hold)[:length]
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    u = u + offset
    gate = spec.get("gate")
    if gate is not None:
        start, stop = gate
        mask = (k >= start) & (k < stop)
        u = np.where(mask, u, 0.0)
    return u
