import numpy as np
import pytest

import vortexlayer as vl


@pytest.fixture(scope="session")
def suite_cache():
    """Bundled scenario runs shared by the acceptance criteria."""
    from vortexlayer.acceptance import SuiteCache

    return SuiteCache()


@pytest.fixture(scope="session")
def unit_circle_config():
    curve = vl.make_circle((0.0, 0.0), 1.0)
    return vl.SheetConfiguration([(curve, vl.ConstantStrength(1.0))], omega=0.0)


@pytest.fixture(scope="session")
def segment_config():
    curve = vl.make_segment(1.0)
    return vl.SheetConfiguration([(curve, vl.SemicircleStrength(1.0, 1.0))], omega=1.0)


def circle_layer(eps, n_alpha=256, n_eta=16, radius=1.0, center=(0.0, 0.0), gamma=1.0):
    curve = vl.make_circle(center, radius)
    return vl.build_layer(curve, vl.ConstantStrength(gamma), eps,
                          n_alpha=n_alpha, n_eta=n_eta)


def assert_close(actual, expected, tol, label=""):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    gap = float(np.max(np.abs(actual - expected)))
    assert gap <= tol, f"{label}: |{actual} - {expected}| = {gap} > {tol}"
