"""Registry of payoff functions f(x, y) for the estimator and the CLI.

Payoffs are referenced by name so parallel workers can rebuild them from a
picklable description.  The estimator's unbiasedness contract assumes f is
bounded on the reachable region; unbounded payoffs are allowed but flagged
through the cap diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Payoff:
    name: str
    params: tuple = ()
    f_sup: float | None = None   # known sup |f|, None if unbounded
    cap: float | None = None     # |f| above this is counted in diagnostics

    def __call__(self, x, y):
        return _EVALUATORS[self.name](self, np.asarray(x), np.asarray(y))

    def spec_string(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(repr(p) for p in self.params)


def _eval_one(p, x, y):
    return np.ones(np.broadcast(x, y).shape)


def _eval_x(p, x, y):
    return x + 0.0 * y


def _eval_cos_exp(p, x, y):
    return np.cos(x) * np.exp(-y)


def _eval_indicator_box(p, x, y):
    x_lo, x_hi, y_lo, y_hi = p.params
    return ((x >= x_lo) & (x < x_hi) & (y >= y_lo) & (y < y_hi)).astype(float)


def _eval_poly(p, x, y):
    # params: flat (i, j, coeff) triples
    out = np.zeros(np.broadcast(x, y).shape)
    for i, j, c in zip(p.params[0::3], p.params[1::3], p.params[2::3]):
        out = out + c * x ** int(i) * y ** int(j)
    return out


_EVALUATORS = {
    "one": _eval_one,
    "x": _eval_x,
    "cos_exp": _eval_cos_exp,
    "indicator_box": _eval_indicator_box,
    "poly": _eval_poly,
}


def get_payoff(name: str, *, params: tuple = (), cap: float | None = None) -> Payoff:
    if name not in _EVALUATORS:
        raise ConfigError(f"unknown payoff {name!r}; known: {sorted(_EVALUATORS)}")
    f_sup = {"one": 1.0, "cos_exp": 1.0, "indicator_box": 1.0}.get(name)
    if name == "indicator_box" and len(params) != 4:
        raise ConfigError("indicator_box needs params (x_lo, x_hi, y_lo, y_hi)")
    if name == "poly" and (not params or len(params) % 3 != 0):
        raise ConfigError("poly needs params as (i, j, coeff) triples")
    return Payoff(name=name, params=tuple(params), f_sup=f_sup, cap=cap)


def parse_payoff(text: str, cap: float | None = None) -> Payoff:
    """Parse 'name' or 'name:p1,p2,...' from config files."""
    name, _, rest = text.partition(":")
    params = tuple(float(p) for p in rest.split(",")) if rest else ()
    return get_payoff(name.strip(), params=params, cap=cap)
