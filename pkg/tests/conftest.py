import pytest

from poshyp import kernels

BACKENDS = sorted(kernels.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the solvers through one kernel implementation."""
    impl = kernels.available_backends()[request.param]
    for name in ("feedback_trace", "delay_trace", "upwind_feedback", "upwind_delay"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param
