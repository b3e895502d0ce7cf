"""Named source presets used by the command line and the test-suite."""
from __future__ import annotations

import numpy as np

from .assembly import SourceField


def constant(value) -> SourceField:
    return SourceField.constant(value)


def gaussian(amplitude, center, width: float, wavevector=(0.0, 0.0, 0.0)) -> SourceField:
    """``amplitude * exp(-|x-c|^2 / (2 w^2)) * exp(i k.x)``."""
    amp = np.asarray(amplitude, dtype=complex).reshape(3)
    c = np.asarray(center, dtype=float).reshape(3)
    k = np.asarray(wavevector, dtype=float).reshape(3)
    if not width > 0:
        raise ValueError("gaussian width must be positive")

    def fn(x):
        r2 = np.sum((x - c) ** 2, axis=1)
        return amp[None, :] * (np.exp(-r2 / (2 * width * width)) * np.exp(1j * (x @ k)))[:, None]

    return SourceField(fn)


def cavity_mode(lengths=(1.0, 1.0, 1.0), amplitude: complex = 1.0) -> SourceField:
    """Divergence-free field ``(0, 0, sin(pi x/Lx) sin(pi y/Ly))``.

    It is the shape of the lowest (1, 1, 0) mode of a PEC box.
    """
    Lx, Ly, _ = (float(v) for v in lengths)

    def fn(x):
        out = np.zeros((len(x), 3), dtype=complex)
        out[:, 2] = amplitude * np.sin(np.pi * x[:, 0] / Lx) * np.sin(np.pi * x[:, 1] / Ly)
        return out

    return SourceField(fn)


def element_table(values) -> SourceField:
    """Per-element constant values, shape (T, 3)."""
    return SourceField(elementwise=np.asarray(values, dtype=complex).reshape(-1, 3))


def load_table(path) -> SourceField:
    """Read ``re_x im_x re_y im_y re_z im_z`` per line, one line per tet."""
    raw = np.loadtxt(path, comments="#", ndmin=2)
    if raw.shape[1] != 6:
        raise ValueError(f"{path}: expected 6 columns per element, got {raw.shape[1]}")
    return element_table(raw[:, 0::2] + 1j * raw[:, 1::2])
