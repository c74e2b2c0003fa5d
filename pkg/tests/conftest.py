import numpy as np
import pytest

# acceptance results, printed once at the end of the session
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).split(".")[0]), str(k))):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_difference(f, x, idx, step=1e-5):
    """d f / d x[idx] by central differences; ``x`` is modified in place and restored."""
    old = x[idx]
    x[idx] = old + step
    up = f()
    x[idx] = old - step
    down = f()
    x[idx] = old
    return (up - down) / (2 * step)


def rel_error(a, b, floor=1e-7):
    return abs(a - b) / max(abs(a), abs(b), floor)


def probe_params(params, grads, f, n_probes, rng, step=1e-5):
    """Compare analytic ``grads`` with central differences at random entries.

    Returns the list of relative errors.
    """
    sizes = np.array([p.size for p in params])
    errs = []
    for _ in range(n_probes):
        i = rng.choice(len(params), p=sizes / sizes.sum())
        flat = rng.integers(params[i].size)
        idx = np.unravel_index(flat, params[i].shape)
        num = central_difference(f, params[i], idx, step)
        errs.append(rel_error(grads[i][idx], num))
    return errs


# -- full pipeline runs shared by the acceptance and trained-model tests --------


class TrainedRun:
    def __init__(self, workdir, summary, seconds, model):
        self.workdir = workdir
        self.summary = summary
        self.seconds = seconds
        self.model = model


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """``pipeline(system, idn, seed, tag)`` runs simulate/pretrain/train/evaluate once per key."""
    import time

    from tdn import serialization
    from tdn.cli import main
    from tdn.transfer import TdnModel

    root = tmp_path_factory.mktemp("pipeline")
    cache = {}

    def get(system="numex", idn="D1", seed=0, tag=""):
        key = (system, idn, seed, tag)
        if key not in cache:
            work = root / f"{system}-{idn}-s{seed}{tag}"
            args = ["--workdir", str(work), "--system", system, "--idn-architecture", idn, "--seed", str(seed)]
            t0 = time.perf_counter()
            assert main(["simulate", "--mkdir", *args]) == 0
            for verb in ("pretrain", "train", "evaluate"):
                assert main([verb, *args]) == 0
            seconds = time.perf_counter() - t0
            import json

            summary = json.loads((work / "eval" / "summary.json").read_text())
            model = TdnModel.from_bundle(serialization.load(str(work / "models" / "tdn.tdnm")))
            cache[key] = TrainedRun(work, summary, seconds, model)
        return cache[key]

    return get


def held_out_normal(system, n=5000, seed=10_000):
    """Fresh normal data from a seed no pipeline run uses."""
    from tdn.sim.datasets import gen_dataset

    return gen_dataset(system, "train", seed, train_size=n).Z
