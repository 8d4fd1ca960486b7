import numpy as np
import pytest
import torch

_ACCEPTANCE_VERDICTS = []


@pytest.fixture(autouse=True)
def _deterministic():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def acceptance_log():
    """Shared registry the acceptance tests append their verdict lines to."""
    return _ACCEPTANCE_VERDICTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_VERDICTS):
            terminalreporter.write_line(line)


def fd_gradient(fn, x, eps=1e-6):
    """Central finite-difference gradient of scalar fn w.r.t. every entry of x."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    for j in range(flat.numel()):
        orig = flat[j].item()
        flat[j] = orig + eps
        hi = fn(x).item()
        flat[j] = orig - eps
        lo = fn(x).item()
        flat[j] = orig
        gflat[j] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(a, b, floor=1e-12):
    a = torch.as_tensor(a, dtype=torch.float64)
    b = torch.as_tensor(b, dtype=torch.float64)
    denom = torch.maximum(torch.maximum(a.abs(), b.abs()), torch.tensor(floor))
    return ((a - b).abs() / denom).max().item()
