import numpy as np
import pytest

from rw2cf.data_io import CalendarMonth, Dataset, MonthlySeries, PreparedModelInput, month_range

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20200301)


def make_input(T=6, k=1, seed=0, mask=None, use_lag12=True):
    """Small hand-built model input; lag column is arbitrary data, not a true lag."""
    r = np.random.default_rng(seed)
    months = month_range(CalendarMonth(2000, 1), T)
    X = r.standard_normal((T, k))
    lag = r.standard_normal(T)
    y = 0.5 + X @ np.linspace(0.8, -0.4, k) + 0.3 * lag + 0.2 * r.standard_normal(T)
    if mask is None:
        mask = np.ones(T, dtype=bool)
    return PreparedModelInput(months, y, X, lag, mask, tuple(f"x{j}" for j in range(k)), use_lag12=use_lag12)


def tfl_shaped_dataset(seed=1):
    """126 months Jul 2010 - Dec 2020 with TfL-like column names and magnitudes."""
    r = np.random.default_rng(seed)
    n = 126
    start = CalendarMonth(2010, 7)
    t = np.arange(n)
    season = np.sin(2 * np.pi * (t + 6) / 12)
    temp = 12 + 5 * season + r.normal(0, 1, n)
    rain = 1.7 + r.gamma(2, 0.5, n) - 1.0
    wind = 4.9 + r.normal(0, 1, n)
    hum = 75 - 6 * season + r.normal(0, 3, n)
    hires = 780000 + 200000 * season + 1500 * t + r.normal(0, 40000, n)
    time_ = 19 + 2 * season + r.normal(0, 1, n)
    mk = lambda name, v: MonthlySeries(name, start, v)
    return Dataset(mk("hires", hires), (mk("hire_time", time_), mk("temperature", temp), mk("rainfall", rain),
                                       mk("wind", wind), mk("humidity", hum)), label="tfl-shaped")
