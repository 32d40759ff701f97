import numpy as np
import pytest

from pfmalware.neural import network
from pfmalware.neural.gradcheck import grad_check, relative_error


def test_float32_passes_at_1e_3():
    report = grad_check(tolerance=1e-3, dtype="float32")
    assert report.passed, report.lines()


def test_float64_passes_at_1e_5():
    report = grad_check(tolerance=1e-5, dtype="float64")
    assert report.passed, report.lines()


def test_zero_tolerance_fails():
    assert not grad_check(tolerance=0.0).passed


def test_conv_sign_flip_fails_only_conv(monkeypatch):
    original = network.conv1d_backward

    def flipped(*args):
        dx, dkernel, dbias = original(*args)
        return dx, -dkernel, -dbias

    monkeypatch.setattr(network, "conv1d_backward", flipped)
    report = grad_check(tolerance=1e-3)
    assert set(report.failed_blocks) == {"conv_kernel", "conv_bias"}


def test_relative_error_definition():
    assert relative_error([1.0], [1.1], 1e-6) == pytest.approx(0.1 / 1.1, rel=1e-12)
    assert relative_error([0.0], [1e-9], 1e-6) == 1e-3
    assert relative_error([], [], 1e-6) == 0.0


def test_report_lines():
    lines = grad_check(tolerance=1e-3).lines()
    assert len(lines) == len(network.PARAM_NAMES) + 1
    assert lines[-1].startswith("PASS")
