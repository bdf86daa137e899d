import numpy as np
import pytest

from equibound import bundled_model_path, load_model, parse_model
from equibound.bounding import assemble_bounds, build_generator_block, build_W, solve_column_bounds
from equibound.lyapunov import DriftParams, drift_maximizers
from equibound.statespace import enumerate_window

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def birth_death():
    return load_model(bundled_model_path("birth_death"))


@pytest.fixture(scope="session")
def exclusive_switch():
    return load_model(bundled_model_path("exclusive_switch"))


def run_pipeline(m, epsilon, lambda_factor=1.001, keep_columns=False, g=None):
    g = m.lyapunov if g is None else g
    maximum = drift_maximizers(m, g)
    params = DriftParams.from_epsilon(maximum.c, epsilon)
    C = enumerate_window(m, g, params, maximum)
    w = build_W(build_generator_block(m, C), lambda_factor)
    cols = solve_column_bounds(w, keep_columns=keep_columns)
    return params, C, w, cols, assemble_bounds(cols, params, C, w.lam)


def random_model(seed):
    """Ergodic 1- or 2-species model with negative quadratic drift at infinity."""
    rng = np.random.default_rng(seed)
    u = lambda lo, hi: float(np.round(rng.uniform(lo, hi), 3))
    if seed % 2 == 0:
        a0, a1 = u(0.5, 5.0), u(0.0, 0.5)
        b = u(a1 + 0.3, a1 + 2.0)
        lines = [
            "species: X",
            f"class birth: rate = {a0} + {a1}*X ; change = (+1)",
            f"class death: rate = {b}*X ; change = (-1)",
        ]
        if rng.random() < 0.5:
            k = u(0.01, 0.2)
            lines.append(f"class dimer: rate = {k}*X^2 - {k}*X ; change = (-2)")
        lines += ["init: (0)", "lyapunov: X^2"]
    else:
        while True:
            a, b1, b2, c, k = u(0.5, 4.0), u(0.2, 2.0), u(0.2, 2.0), u(0.0, 1.5), u(0.0, 1.0)
            if 4 * (b1 + c) * b2 > (c + k) ** 2 * 1.2:
                break
        lines = [
            "species: X Y",
            f"class prod: rate = {a} ; change = (+1, 0)",
            f"class degx: rate = {b1}*X ; change = (-1, 0)",
            f"class degy: rate = {b2}*Y ; change = (0, -1)",
        ]
        if c > 0:
            lines.append(f"class conv: rate = {c}*X ; change = (-1, +1)")
        if k > 0:
            lines.append(f"class cat: rate = {k}*X ; change = (0, +1)")
        if rng.random() < 0.5:
            lines.append(f"class annih: rate = {u(0.01, 0.2)}*X*Y ; change = (-1, -1)")
        lines += ["init: (0, 0)", "lyapunov: X^2 + Y^2"]
    return parse_model("\n".join(lines) + "\n")
