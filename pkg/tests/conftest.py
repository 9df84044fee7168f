import numpy as np
import pytest

from npfx.synthdata import generate, mask, preset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_windows():
    """A handful of domain-A windows for fast pipeline tests."""
    return generate(preset("domain-A"), 6, 10, seed=7)


@pytest.fixture
def interp_seq(small_windows):
    return mask(small_windows[0], 0.5, "interp", seed=3)


def naive_conv2d(x, k, stride=1, padding=0):
    """Quadruple-loop cross-correlation oracle."""
    B, C, H, W = x.shape
    O, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for b in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, o, i, j] = np.sum(patch * k[o])
    return out


# desk-scale protocol shared by the acceptance suite
TRAIN_WINDOWS, TRAIN_SEED = 500, 11
HELDOUT_WINDOWS, HELDOUT_SEED = 60, 12
UNSEEN_WINDOWS, UNSEEN_SEED = 60, 13
EPOCHS = 20


@pytest.fixture(scope="session")
def heldout_a():
    return generate(preset("domain-A"), HELDOUT_WINDOWS, 10, seed=HELDOUT_SEED)


@pytest.fixture(scope="session")
def trained_model():
    """Domain-A model at the desk-scale protocol; trained once per session."""
    import time

    from npfx.model import ModelConfig, TrainConfig, train

    data = generate(preset("domain-A"), TRAIN_WINDOWS, 10, seed=TRAIN_SEED)
    started = time.perf_counter()
    model, history = train(data, ModelConfig(), TrainConfig(epochs=EPOCHS, batch_size=32, seed=0))
    model.train_seconds = time.perf_counter() - started
    model.history = history
    return model


# -- acceptance reporting ---------------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """Record a criterion outcome for the summary, then assert it."""
    def record(number, ok, detail):
        request.config.stash[_CRITERIA][number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
