"""Counter-based uniforms and the standard normal quantile.

Every exogenous value is a pure function of ``(seed, unit_index, position)``:

    key  = mix64(mix64(seed) + GAMMA * (position + 1))
    bits = mix64(key + GAMMA * (unit_index + 1))
    u    = ((bits >> 11) + 0.5) * 2**-53          # in (0, 1)

``mix64`` is the splitmix64 finalizer. Because no generator state is carried
between units, blocks of units can be drawn in any order or in parallel and
still reproduce the same values.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64).copy()
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def mix_int(*values: int) -> int:
    """Fold integers into one 64-bit key; used to derive seeds and stream keys."""
    h = int(mix64(np.array([values[0] & MASK64], dtype=np.uint64))[0])
    for v in values[1:]:
        h = (h + GAMMA * ((v + 1) & MASK64)) & MASK64
        h = int(mix64(np.array([h], dtype=np.uint64))[0])
    return h


def stream_key(seed: int, position: int) -> int:
    return mix_int(seed, position)


def uniforms(seed: int, position: int, start: int, stop: int) -> np.ndarray:
    """Uniforms in (0, 1) for units ``start..stop-1`` of one exogenous stream."""
    key = np.uint64(stream_key(seed, position))
    idx = np.arange(start + 1, stop + 1, dtype=np.uint64)
    bits = mix64(key + idx * np.uint64(GAMMA))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# Wichura (1988), algorithm AS 241, PPND16.
_A = (3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
      13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
      33430.575583588128105, 2509.0809287301226727)
_B = (1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
      21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
      5226.495278852545925)
_C = (1.42343711074968357734, 4.6303378461565452959, 5.7694972214606914055,
      3.64784832476320460504, 1.27045825245236838258, 0.24178072517745061177,
      0.0227238449892691845833, 7.7454501427834140764e-4)
_D = (1.0, 2.05319162663775882187, 1.6763848301838038494, 0.68976733498510000455,
      0.14810397642748007459, 0.0151986665636164571966, 5.475938084995344946e-4,
      1.05075007164441684324e-9)
_E = (6.6579046435011037772, 5.4637849111641143699, 1.7848265399172913358,
      0.29656057182850489123, 0.026532189526576123093, 0.0012426609473880784386,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 0.59983220655588793769, 0.13692988092273580531, 0.0148753612908506148525,
      7.868691311456132591e-4, 1.8463183175100546818e-5, 1.4215117583164458887e-7,
      2.04426310338993978564e-15)


def _poly(coefs, x):
    out = np.zeros_like(x)
    for c in reversed(coefs):
        out = out * x + c
    return out


def normal_quantile(p):
    """Inverse standard normal CDF, vectorised. ``p`` must lie in (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        pt = p[tail]
        r = np.where(q[tail] < 0, pt, 1.0 - pt)
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.where(
            near,
            _poly(_C, r - 1.6) / _poly(_D, r - 1.6),
            _poly(_E, r - 5.0) / _poly(_F, r - 5.0),
        )
        out[tail] = np.where(q[tail] < 0, -val, val)
    return out[()] if out.ndim == 0 else out
