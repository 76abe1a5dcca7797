"""TOML experiment configuration.

Schema::

    [problem]
    name = "rigid_body_modified"     # or "harmonic_oscillator"
    I1 = 2.0
    I2 = 1.0
    I3 = { num = 2, den = 3 }        # any real may be written as a rational
    alpha = 1.0
    x0 = [0.4536, 0.0, 0.8912]       # optional; problem default otherwise

    [[method]]                        # repeat for several methods
    method = "dg_linear"              # dg_fixed_point | dg_linear | projection | rk
    label = "dg_linear"               # optional; names the CSV file
    tableau = "rk4"                   # or give rk_A / rk_b / rk_order
    discrete_gradient = "midpoint"    # midpoint | mean_value | coordinate_increment
    mv_nodes = 3
    i_tilde = "at_x"
    i_hat = "at_x"
    i_breve = "dg_at_y"
    denom_floor = 0.5
    fp_tol = 1e-13
    newton_tol = 1e-12
    warm_start = false

    [grid]
    h = 0.5
    h_values = [0.1, 0.05, 0.025, 0.0125]
    phase_h_values = [0.5, { num = 100, den = 92 }]
    t_end = 500.0
    t_sample = 100.0
    R_values = [1.0, 0.1, 0.01]
    stepcrit_h_values = [1e-4, 1e-3, 1e-2]
    ref_factor = 100                 # reference step = min(h_values) / ref_factor
    phase_ref_factor = 1000          # phase reference step = h / phase_ref_factor
    ref_rel_tol = 1e-11
    ref_max_refinements = 3

    [output]
    dir = "results"
"""

from __future__ import annotations

import sys
from fractions import Fraction

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .discrete_gradients import DiscreteGradientKind
from .errors import InvalidParameter
from .experiments import ExperimentConfig, MethodSpec
from .integrators import METHODS, DgMethodConfig, Stepper
from .problems import CriticalPointPolicy
from .runge_kutta import make_tableau
from .skew import SkewConfig

_METHOD_KEYS = {
    "method", "label", "tableau", "rk_A", "rk_b", "rk_order", "discrete_gradient", "mv_nodes",
    "i_tilde", "i_hat", "i_breve", "denom_floor", "fp_tol", "fp_max_iter", "newton_tol",
    "newton_max", "warm_start", "epsilon_crit",
}
_GRID_KEYS = {
    "h", "h_values", "phase_h_values", "t_end", "t_sample", "R_values", "stepcrit_h_values",
    "ref_factor", "phase_ref_factor", "ref_rel_tol", "ref_max_refinements",
}


def real(value) -> float:
    """A number, or a ``{num, den}`` table evaluated exactly before rounding."""
    if isinstance(value, dict):
        if set(value) != {"num", "den"}:
            raise InvalidParameter(f"rational must have exactly 'num' and 'den', got {sorted(value)}")
        if value["den"] == 0:
            raise InvalidParameter("rational with zero denominator")
        return float(Fraction(value["num"]) / Fraction(value["den"]))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidParameter(f"expected a number, got {value!r}")
    return float(value)


def _reals(values):
    if not isinstance(values, list):
        raise InvalidParameter(f"expected a list, got {values!r}")
    return [real(v) for v in values]


def _unknown(block: str, given, allowed):
    extra = set(given) - set(allowed)
    if extra:
        raise InvalidParameter(f"unknown key(s) in [{block}]: {sorted(extra)}")


def parse_method(block: dict) -> MethodSpec:
    _unknown("method", block, _METHOD_KEYS)
    method = block.get("method", "dg_linear")
    if method not in METHODS:
        raise InvalidParameter(f"unknown method {method!r}; choose from {list(METHODS)}")
    if "rk_A" in block or "rk_b" in block:
        A = [_reals(row) for row in block.get("rk_A", [])]
        tab = make_tableau("custom", A, _reals(block.get("rk_b", [])),
                           int(block.get("rk_order", 1)))
    else:
        tab = make_tableau(block.get("tableau", "rk4"))
    dg_name = block.get("discrete_gradient", "midpoint")
    dg = DiscreteGradientKind(dg_name, int(block.get("mv_nodes", 3)))
    skew = SkewConfig(
        i_tilde=block.get("i_tilde", "at_x"),
        i_hat=block.get("i_hat", "at_x"),
        i_breve=block.get("i_breve", "dg_at_y"),
        dg_kind=dg,
        denom_floor=real(block.get("denom_floor", 0.5)),
    )
    kwargs = {}
    if "fp_tol" in block:
        kwargs["fp_tol"] = real(block["fp_tol"])
    if "fp_max_iter" in block:
        kwargs["fp_max_iter"] = int(block["fp_max_iter"])
    if "warm_start" in block:
        kwargs["warm_start"] = bool(block["warm_start"])
    if "epsilon_crit" in block:
        kwargs["critical"] = CriticalPointPolicy(real(block["epsilon_crit"]))
    cfg = DgMethodConfig(tableau=tab, skew=skew, **kwargs)
    stepper = Stepper(method, cfg, newton_tol=real(block.get("newton_tol", 1e-12)),
                      newton_max=int(block.get("newton_max", 50)))
    return MethodSpec(block.get("label", method), stepper)


def config_from_dict(data: dict) -> ExperimentConfig:
    _unknown("top level", data, {"problem", "method", "grid", "output"})
    kwargs = {}
    prob = dict(data.get("problem", {}))
    if prob:
        kwargs["problem"] = prob.pop("name", "rigid_body_modified")
        if "x0" in prob:
            kwargs["x0"] = _reals(prob.pop("x0"))
        kwargs["problem_params"] = {k: real(v) for k, v in prob.items()}
    methods = data.get("method", [])
    if isinstance(methods, dict):
        methods = [methods]
    kwargs["methods"] = [parse_method(m) for m in methods]
    labels = [m.label for m in kwargs["methods"]]
    if len(set(labels)) != len(labels):
        raise InvalidParameter(f"method labels must be unique, got {labels}")
    grid = data.get("grid", {})
    _unknown("grid", grid, _GRID_KEYS)
    for key, val in grid.items():
        if key.endswith("_values"):
            kwargs[key] = tuple(_reals(val))
        elif key in ("ref_max_refinements", "phase_ref_factor"):
            kwargs[key] = int(val)
        else:
            kwargs[key] = real(val)
    out = data.get("output", {})
    _unknown("output", out, {"dir"})
    if "dir" in out:
        kwargs["out_dir"] = str(out["dir"])
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidParameter(f"{path}: {exc}") from None
    return config_from_dict(data)
