import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: dict[int, str] = {}


@contextmanager
def _criterion(number: int, title: str, budget_s: float):
    """Run one acceptance criterion and record a single PASS/FAIL line for it.

    The body may add ``detail`` text to the yielded dict. Any exception, or a
    runtime over budget, makes the criterion fail.
    """
    info = {"detail": ""}
    t0 = time.perf_counter()
    status = "FAIL"
    try:
        yield info
        elapsed = time.perf_counter() - t0
        if elapsed >= budget_s:
            info["detail"] += f" (runtime {elapsed:.2f}s over the {budget_s}s budget)"
            raise AssertionError(f"criterion {number} took {elapsed:.2f}s, budget {budget_s}s")
        status = "PASS"
    except BaseException as exc:
        if not info["detail"]:
            info["detail"] = f"{type(exc).__name__}: {exc}"[:200]
        raise
    finally:
        elapsed = time.perf_counter() - t0
        line = f"[{status}] criterion {number:2d} - {title}: {info['detail'].strip()} [{elapsed:.3f}s]"
        _ACCEPTANCE[number] = line
        print(line)


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])


@pytest.fixture
def spike_segment():
    from tsanom.ingest import InjectedAnomaly, SynthSpec, Waveform, synth_series

    return synth_series(SynthSpec(length=400, base=Waveform("constant", level=5.0), noise_sigma=0.0,
                                  anomaly=InjectedAnomaly("spike", 181, 200, 10.0), seed=3, id="spike"))
