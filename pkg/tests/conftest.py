import numpy as np
import pytest

import hawkeslim as hl

E = float(np.e)

# closed forms for the linear rate nu=1, slope=1 with kernel e^{-2t}, T=1:
# rate 2 - e^{-t}, path 2t + e^{-t} - 1, terminal 1 + 1/e,
# terminal fluctuation variance 15/e - 3
LINEXP_RATE = lambda t: 2.0 - np.exp(-t)  # noqa: E731
LINEXP_PATH = lambda t: 2.0 * t + np.exp(-t) - 1.0  # noqa: E731
LINEXP_TERMINAL = 1.0 + 1.0 / E
LINEXP_VAR_T = 15.0 / E - 3.0


_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Registry for one verdict line per acceptance criterion; the collected
    lines are echoed after the test run so they survive output capture."""
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def linexp():
    return hl.exponential_kernel(beta=2.0), hl.linear_intensity(nu=1.0, slope=1.0)


@pytest.fixture(scope="session")
def poisson():
    return hl.zero_kernel(), hl.constant_intensity(1.0)


@pytest.fixture(scope="session")
def linexp_limit(linexp):
    kernel, phi = linexp
    z0, report = hl.solve_limit(kernel, phi, 1.0, n=2048)
    assert report.residual <= report.tol
    return z0


@pytest.fixture()
def ini_config(tmp_path):
    """Write an INI config assembled from section dicts; returns the path."""

    def write(name="exp.ini", **sections):
        lines = []
        for sec, items in sections.items():
            lines.append(f"[{sec}]")
            for key, value in items.items():
                lines.append(f"{key} = {value}")
            lines.append("")
        path = tmp_path / name
        path.write_text("\n".join(lines), encoding="utf-8")
        return path

    return write


def minimal_sections(**overrides):
    """A valid lln config; overrides merge section dicts."""
    sections = {
        "config": {"schema_version": "hawkeslim.config.v1"},
        "model": {"builtin": "linear-exp", "horizon": "1.0"},
        "experiment": {"kind": "lln", "epsilon": "0.1", "replicas": "8"},
        "output": {"seed": "1", "directory": "out"},
    }
    for sec, items in overrides.items():
        sections.setdefault(sec, {}).update(items)
    return sections
