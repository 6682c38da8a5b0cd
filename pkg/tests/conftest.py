"""Shared fixtures and numerical helpers for the test suite."""

import numpy as np
import pytest

from viewalign import synth
from viewalign.geometry import Intrinsics

K_SMALL = Intrinsics(60.0, 60.0, 31.5, 23.5)
W_SMALL, H_SMALL = 64, 48


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        step = h[i] if np.ndim(h) else h
        old = flat[i]
        flat[i] = old + step
        fp = f(x)
        flat[i] = old - step
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * step)
    return g


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def sphere_scene(seed=0, n_cams=4):
    """Checkered back wall at z=6 with a gradient sphere in front of it."""
    prims = [
        synth.Plane((0, 0, 6), (0, 0, -1), (1, 0, 0), None,
                    synth.Texture("checker", ((0.9, 0.8, 0.2), (0.1, 0.3, 0.7)), 0.5)),
        synth.Sphere((0.2, 0.1, 4), 0.8, synth.Texture("gradient", ((1, 0, 0), (0, 1, 0)), 1.0, (0, 1, 0))),
    ]
    return synth.SceneSpec(prims, synth.orbit_rig(n_cams, K_SMALL, W_SMALL, H_SMALL, (0, 0, 5), 0.8), seed)


@pytest.fixture(scope="session")
def scene():
    return sphere_scene()


@pytest.fixture(scope="session")
def anchor_render(scene):
    return synth.raycast(scene, scene.rig[0])


# acceptance criterion -> (passed, description, seconds); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, desc, secs = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {desc}  ({secs:.1f} s)")
