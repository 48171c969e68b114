import numpy as np
import pytest

from lunar_odts.dynamics import ForceModel
from lunar_odts.gravity import default_gravity_path, load_gravity_field, point_mass_field
from lunar_odts.timeframes import (
    Epoch,
    TabulatedEphemeris,
    TimeFrames,
    default_ephemeris_path,
    tt_to_tdb_j2000,
)

REFERENCE = "2025-03-01T12:00:18"


@pytest.fixture(scope="session")
def ephemeris():
    return TabulatedEphemeris.from_csv(default_ephemeris_path())


@pytest.fixture(scope="session")
def tdb0():
    return tt_to_tdb_j2000(TimeFrames().convert(Epoch.from_iso(REFERENCE), "TT"))


@pytest.fixture(scope="session")
def point_mass_model(ephemeris, tdb0):
    return ForceModel(point_mass_field(), ephemeris, tdb0, (0.0, 250 * 3600.0),
                      third_body_earth=False, third_body_sun=False, srp=False)


@pytest.fixture(scope="session")
def full_model(ephemeris, tdb0):
    field = load_gravity_field(default_gravity_path(), 8)
    return ForceModel(field, ephemeris, tdb0, (0.0, 250 * 3600.0))


def random_orbit_states(rng, n, gamma=2.1e-3):
    """Plausible lunar-orbit states with random clock and SRP entries."""
    out = []
    for _ in range(n):
        r = rng.uniform(2.5e6, 1.9e7)
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        w = np.cross(u, rng.standard_normal(3))
        w /= np.linalg.norm(w)
        v = np.sqrt(4.9e12 / r) * rng.uniform(0.7, 1.3) * w + rng.normal(0, 50, 3)
        clk = [rng.normal(0, 1e3), rng.normal(0, 1.0), rng.normal(0, 1e-3)]
        out.append(np.concatenate([r * u, v, clk, [gamma * rng.uniform(0.8, 1.2)]]))
    return out


@pytest.fixture(scope="session")
def minimal_config():
    from lunar_odts.config import bundled_config, load_config
    return load_config(bundled_config("minimal"))


@pytest.fixture(scope="session")
def minimal_scenario(minimal_config):
    from lunar_odts.pipeline import build_scenario
    return build_scenario(minimal_config)


# criterion number -> list of (label, passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=int):
        parts = ACCEPTANCE[crit]
        status = "PASS" if all(p[1] for p in parts) else "FAIL"
        detail = "; ".join(f"{label}: {'ok' if ok else 'FAIL'} {text}".strip() for label, ok, text in parts)
        terminalreporter.write_line(f"criterion {crit:>2}  {status}  {detail}")
