"""Python bindings for the MUCE expansion-cohort design engine.

Hyperparameters are given either as a preset name ("setting1".."setting5")
or as a dict of fields, optionally with a "preset" key to start from.
"""

import json
import os
import tempfile

from . import _core
from ._core import ConfigError

__version__ = _core.__version__

__all__ = [
    "ConfigError",
    "fit",
    "prior_correlation",
    "simon_search",
    "two_stage_error_rates",
    "fwer_independent",
    "run",
]


def _hyper(hyper):
    return json.dumps(hyper)


def _grid(values):
    # A flat sequence means one dose per indication.
    values = list(values)
    if values and not isinstance(values[0], (list, tuple)):
        return [[v] for v in values]
    return [list(row) for row in values]


def fit(n, y, pi0, hyper="setting1", active=None, burn_in=2000, n_keep=8000, thin=1,
        seed=1, estimator="mean"):
    """Posterior summary of one dataset.

    n, y and active are [indication][dose] nested lists, or flat lists for a
    single dose. Returns a dict of [indication][dose] grids: pr_h1, est_p,
    ess and acceptance.
    """
    n, y = _grid(n), _grid(y)
    if isinstance(pi0, (int, float)):
        pi0 = [float(pi0)] * len(n)
    return _core.fit(n, y, list(pi0), _hyper(hyper),
                     None if active is None else _grid(active),
                     burn_in, n_keep, thin, seed, estimator)


def prior_correlation(hyper="setting1"):
    """Prior correlations of the latent scores: (same indication, same dose, neither)."""
    return _core.prior_correlation(_hyper(hyper))


def simon_search(p0, p1, alpha, beta, criterion="optimal", n_max=100):
    """Simon two-stage design (r1, n1, r, N)."""
    return _core.simon_search(p0, p1, alpha, beta, criterion, n_max)


def two_stage_error_rates(design, p):
    """Rejection probability, early-termination probability and expected n at rate p."""
    return _core.two_stage_error_rates(*design, p)


def fwer_independent(alpha, k):
    return _core.fwer_independent(alpha, k)


def run(command, config, out=None, seed=None, reps=None, jobs=None, format="records"):
    """Runs a CLI command in-process.

    config is a dict or a JSON string. Artifacts are written under `out`, or
    a temporary directory that is removed afterwards. Returns (record, files),
    where record is the self-describing result document.
    """
    text = config if isinstance(config, str) else json.dumps(config)
    if out is not None:
        record, files = _core.run(command, text, os.fspath(out), seed, reps, jobs, format)
        return json.loads(record), files
    with tempfile.TemporaryDirectory() as tmp:
        record, files = _core.run(command, text, tmp, seed, reps, jobs, format)
        return json.loads(record), []
