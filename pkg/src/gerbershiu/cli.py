"""Command-line front end.

Subcommands: solve, initial-value, simulate, compare, reproduce.  Experiments
are described by a line-oriented `section.key = value` config (hash comments,
case-sensitive keys, unknown keys rejected); outputs are CSV files with
17-significant-digit values and LF line endings, so identical runs produce
byte-identical files.

Config keys (defaults in parentheses):

    model.c (1.5)           premium rate
    model.lambda (1.0)      claim intensity
    model.r (0.01)          interest force
    model.alpha (per case)  discount force: 0.01 for laplace_ruin_time, else 0
    claim.kind              exponential | erlang | mixture        [required]
    claim.rate              rate for exponential / erlang
    claim.shape             Erlang shape
    claim.terms             mixture terms "coef:shape:rate, coef:shape:rate"
    case                    ruin_probability | laplace_ruin_time |
                            claim_causing_ruin | deficit_at_ruin  [required]
    barrier                 dividend barrier level (absent = none)
    method                  pinn | volterra | montecarlo          [required]
    grid.u_max (30)         no-barrier domain end
    grid.n (3000)           Volterra grid intervals
    grid.points (512)       output / comparison grid size
    pinn.residual_points (512), pinn.placement (equispaced|random),
    pinn.conv_nodes (16), pinn.w_f (1), pinn.w_g (1e4),
    pinn.arch (1,20,20,20,20,1), pinn.optimizer (lbfgs|adam),
    pinn.max_iter (1500), pinn.loss_tol (2e-12), pinn.grad_tol (1e-9),
    pinn.first_layer_scale (auto = 2/domain end), pinn.polish (true)
    sim.paths (100000), sim.horizon (2000), sim.u (0),
    sim.early_exit (true)
    compare.method_a (pinn), compare.method_b (volterra)
    seed (0)
    output.dir (results)
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import initial_value, montecarlo, network, pinn, volterra
from .errors import ConfigError, ConvergenceError, NumericError
from .optimizer import AdamConfig, LBFGSConfig
from .risk_model import ClaimDistribution, PenaltyCase, RiskModel

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_NONCONVERGED = 3

_CASE_ALPHA = {
    "ruin_probability": 0.0,
    "laplace_ruin_time": 0.01,
    "claim_causing_ruin": 0.0,
    "deficit_at_ruin": 0.0,
}

_CASES = {
    "ruin_probability": PenaltyCase.ruin_probability,
    "laplace_ruin_time": PenaltyCase.laplace_ruin_time,
    "claim_causing_ruin": PenaltyCase.claim_causing_ruin,
    "deficit_at_ruin": PenaltyCase.deficit_at_ruin,
}

_METHODS = ("pinn", "volterra", "montecarlo")


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_float_list(s: str):
    return tuple(float(tok) for tok in s.replace(",", " ").split())


def _parse_int_list(s: str):
    return tuple(int(tok) for tok in s.replace(",", " ").split())


def _parse_scale(s: str):
    if s.strip().lower() == "auto":
        return "auto"
    return float(s)


def _parse_terms(s: str):
    terms = []
    for chunk in s.split(","):
        parts = chunk.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"mixture term must be coef:shape:rate, got {chunk.strip()!r}")
        terms.append((float(parts[0]), int(parts[1]), float(parts[2])))
    return tuple(terms)


# key -> (parser, default); defaults of None mean "not supplied"
_SCHEMA = {
    "model.c": (float, 1.5),
    "model.lambda": (float, 1.0),
    "model.r": (float, 0.01),
    "model.alpha": (float, None),
    "claim.kind": (str, None),
    "claim.rate": (float, None),
    "claim.shape": (int, None),
    "claim.terms": (_parse_terms, None),
    "case": (str, None),
    "barrier": (float, None),
    "method": (str, None),
    "grid.u_max": (float, 30.0),
    "grid.n": (int, 3000),
    "grid.points": (int, 512),
    "pinn.residual_points": (int, 512),
    "pinn.placement": (str, "equispaced"),
    "pinn.conv_nodes": (int, 16),
    "pinn.w_f": (float, 1.0),
    "pinn.w_g": (float, 1e4),
    "pinn.arch": (_parse_int_list, (1, 20, 20, 20, 20, 1)),
    "pinn.optimizer": (str, "lbfgs"),
    "pinn.max_iter": (int, 1500),
    "pinn.loss_tol": (float, 2e-12),
    "pinn.grad_tol": (float, 1e-9),
    "pinn.first_layer_scale": (_parse_scale, "auto"),
    "pinn.polish": (_parse_bool, True),
    "sim.paths": (int, 100_000),
    "sim.horizon": (float, 2000.0),
    "sim.u": (_parse_float_list, (0.0,)),
    "sim.early_exit": (_parse_bool, True),
    "compare.method_a": (str, "pinn"),
    "compare.method_b": (str, "volterra"),
    "compare.refined": (_parse_bool, True),
    "seed": (int, 0),
    "output.dir": (str, "results"),
}

_REQUIRED = ("claim.kind", "case", "method")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate the key-value experiment description."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            raw[key] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc

    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    values = {key: default for key, (_, default) in _SCHEMA.items()}
    values.update(raw)
    cfg = ExperimentConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["method"] not in _METHODS:
        raise ConfigError(f"method must be one of {_METHODS}, got {v['method']!r}")
    if v["case"] not in _CASES:
        raise ConfigError(f"case must be one of {tuple(_CASES)}, got {v['case']!r}")
    kind = v["claim.kind"]
    if kind == "exponential":
        if v["claim.rate"] is None:
            raise ConfigError("claim.kind = exponential requires claim.rate")
        if v["claim.shape"] is not None or v["claim.terms"] is not None:
            raise ConfigError("claim.shape/claim.terms do not apply to exponential claims")
    elif kind == "erlang":
        if v["claim.rate"] is None or v["claim.shape"] is None:
            raise ConfigError("claim.kind = erlang requires claim.rate and claim.shape")
        if v["claim.terms"] is not None:
            raise ConfigError("claim.terms does not apply to erlang claims")
    elif kind == "mixture":
        if v["claim.terms"] is None:
            raise ConfigError("claim.kind = mixture requires claim.terms")
        if v["claim.rate"] is not None or v["claim.shape"] is not None:
            raise ConfigError("claim.rate/claim.shape do not apply to mixture claims")
    else:
        raise ConfigError(f"unknown claim.kind {kind!r}")
    for key in ("model.c", "model.lambda", "grid.u_max", "sim.horizon"):
        if not v[key] > 0:
            raise ConfigError(f"{key} must be positive, got {v[key]!r}")
    for key in ("model.r",):
        if v[key] < 0:
            raise ConfigError(f"{key} must be nonnegative, got {v[key]!r}")
    if v["model.alpha"] is not None and v["model.alpha"] < 0:
        raise ConfigError(f"model.alpha must be nonnegative, got {v['model.alpha']!r}")
    if v["barrier"] is not None and not v["barrier"] > 0:
        raise ConfigError(f"barrier must be positive, got {v['barrier']!r}")
    if v["grid.n"] < 16:
        raise ConfigError(f"grid.n must be at least 16, got {v['grid.n']!r}")
    if v["grid.points"] < 2:
        raise ConfigError(f"grid.points must be at least 2, got {v['grid.points']!r}")
    if v["sim.paths"] < 1:
        raise ConfigError(f"sim.paths must be positive, got {v['sim.paths']!r}")
    for key in ("compare.method_a", "compare.method_b"):
        if v[key] not in _METHODS:
            raise ConfigError(f"{key} must be one of {_METHODS}, got {v[key]!r}")
    if v["pinn.optimizer"] not in ("lbfgs", "adam"):
        raise ConfigError(f"pinn.optimizer must be lbfgs or adam, got {v['pinn.optimizer']!r}")
    if v["pinn.placement"] not in ("equispaced", "random"):
        raise ConfigError(
            f"pinn.placement must be equispaced or random, got {v['pinn.placement']!r}"
        )


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------

def _claim_from_config(cfg: ExperimentConfig) -> ClaimDistribution:
    kind = cfg["claim.kind"]
    try:
        if kind == "exponential":
            return ClaimDistribution.exponential(cfg["claim.rate"])
        if kind == "erlang":
            return ClaimDistribution.erlang(cfg["claim.shape"], cfg["claim.rate"])
        return ClaimDistribution(cfg["claim.terms"])
    except ValueError as exc:
        raise ConfigError(f"invalid claim distribution: {exc}") from exc


def _model_case_from_config(cfg: ExperimentConfig):
    case_name = cfg["case"]
    alpha = cfg["model.alpha"]
    if alpha is None:
        alpha = _CASE_ALPHA[case_name]
    try:
        model = RiskModel(
            c=cfg["model.c"],
            lam=cfg["model.lambda"],
            r=cfg["model.r"],
            alpha=alpha,
            claim=_claim_from_config(cfg),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    return model, _CASES[case_name]()


def _train_config(cfg: ExperimentConfig, seed: int, domain_end: float) -> pinn.TrainConfig:
    placement = (
        pinn.EQUISPACED if cfg["pinn.placement"] == "equispaced" else pinn.UNIFORM_RANDOM
    )
    scale = cfg["pinn.first_layer_scale"]
    if scale == "auto":
        scale = 2.0 / domain_end
    return pinn.TrainConfig(
        residual_points=cfg["pinn.residual_points"],
        placement=placement,
        placement_seed=seed,
        conv_quad_nodes=cfg["pinn.conv_nodes"],
        w_f=cfg["pinn.w_f"],
        w_g=cfg["pinn.w_g"],
        optimizer=cfg["pinn.optimizer"],
        lbfgs=LBFGSConfig(
            max_iter=cfg["pinn.max_iter"],
            grad_tol=cfg["pinn.grad_tol"],
            loss_tol=cfg["pinn.loss_tol"],
        ),
        adam=AdamConfig(iterations=cfg["pinn.max_iter"]),
        arch=tuple(cfg["pinn.arch"]),
        seed=seed,
        first_layer_scale=scale,
        gn_polish=cfg["pinn.polish"],
        gn_loss_tol=cfg["pinn.loss_tol"],
    )


def _sim_config(cfg: ExperimentConfig, seed: int, barrier) -> montecarlo.SimConfig:
    return montecarlo.SimConfig(
        paths=cfg["sim.paths"],
        horizon=cfg["sim.horizon"],
        seed=seed,
        barrier=barrier,
        early_exit=cfg["sim.early_exit"],
    )


def _anchor(model: RiskModel, case: PenaltyCase) -> float:
    if model.r > 0:
        return initial_value.phi_infinity_at_zero(model, case)
    if model.alpha == 0:
        return initial_value.classical_zero_value(model, case)
    raise ConfigError(
        "no starting-value formula for r = 0 with alpha > 0; use r > 0 or alpha = 0"
    )


# ---------------------------------------------------------------------------
# Method runners
# ---------------------------------------------------------------------------

def _solve_volterra_table(model, case, barrier, cfg, refined=False) -> volterra.SolutionTable:
    N = cfg["grid.n"]
    phi0 = _anchor(model, case)
    if barrier is None:
        if refined:
            return volterra.solve_phi_infinity_refined(
                model, case, phi0, u_max=cfg["grid.u_max"], N=N
            )
        table = volterra.solve_phi_infinity(model, case, phi0, u_max=cfg["grid.u_max"], N=N)
        return volterra.derivative_from_ide(model, case, table)
    return volterra.solve_barrier(model, case, barrier, phi0, N=N, refined=refined)


def _train_pinn(model, case, barrier, cfg, seed):
    if barrier is None:
        spec = pinn.ProblemSpec(model=model, case=case, u_max=cfg["grid.u_max"],
                                anchor=_anchor(model, case))
    else:
        spec = pinn.ProblemSpec(model=model, case=case, barrier=barrier)
    return pinn.train_or_raise(spec, _train_config(cfg, seed, spec.domain_end)), spec


def _values_on_grid(method, model, case, barrier, cfg, seed, grid) -> np.ndarray:
    if method == "pinn":
        (params, _), spec = _train_pinn(model, case, barrier, cfg, seed)
        return pinn.evaluate(params, grid, domain_end=spec.domain_end).phi
    if method == "volterra":
        table = _solve_volterra_table(model, case, barrier, cfg, refined=cfg["compare.refined"])
        return np.interp(grid, table.u, table.phi)
    sim = _sim_config(cfg, seed, barrier)
    return np.array([montecarlo.estimate(model, case, u, sim).value for u in grid])


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path, header, rows, trailer: Optional[str] = None):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
        if trailer is not None:
            fh.write(trailer + "\n")
    os.replace(tmp, path)
    return path


def _outdir(args, cfg: Optional[ExperimentConfig]) -> str:
    out = args.output or (cfg["output.dir"] if cfg is not None else "results")
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg: Optional[ExperimentConfig]) -> int:
    if args.seed is not None:
        return args.seed
    return cfg["seed"] if cfg is not None else 0


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def run_solve(cfg: ExperimentConfig, out_dir: str, seed: int, method=None):
    method = method or cfg["method"]
    if method not in _METHODS:
        raise ConfigError(f"method must be one of {_METHODS}, got {method!r}")
    model, case = _model_case_from_config(cfg)
    barrier = cfg["barrier"]
    path = os.path.join(out_dir, "solution.csv")
    if method == "montecarlo":
        sim = _sim_config(cfg, seed, barrier)
        rows = []
        for u in cfg["sim.u"]:
            est = montecarlo.estimate(model, case, u, sim)
            rows.append((u, est.value, est.std_error))
        return [_write_csv(path, ["u", "phi", "std_error"], rows)]
    if method == "volterra":
        table = _solve_volterra_table(model, case, barrier, cfg)
        rows = zip(table.u, table.phi, table.dphi)
        return [_write_csv(path, ["u", "phi", "dphi"], rows)]
    (params, _), spec = _train_pinn(model, case, barrier, cfg, seed)
    grid = np.linspace(0.0, spec.domain_end, cfg["grid.points"])
    table = pinn.evaluate(params, grid, domain_end=spec.domain_end)
    params_path = os.path.join(out_dir, "pinn_params.txt")
    network.save_params(params, params_path)
    return [
        _write_csv(path, ["u", "phi", "dphi"], zip(table.u, table.phi, table.dphi)),
        params_path,
    ]


def run_initial_value(cfg: ExperimentConfig, out_dir: Optional[str], seed: int):
    model, case = _model_case_from_config(cfg)
    if model.r > 0:
        result = initial_value.compute_initial_value(model, case)
        phi0, kap = result.phi0, result.kappa
    else:
        phi0, kap = _anchor(model, case), float("nan")
    print(f"phi0={_fmt(phi0)} kappa={_fmt(kap)}")
    written = []
    if out_dir is not None:
        path = os.path.join(out_dir, "initial_value.csv")
        written.append(_write_csv(path, ["phi0", "kappa"], [(phi0, kap)]))
    return written


def run_simulate(cfg: ExperimentConfig, out_dir: str, seed: int):
    model, case = _model_case_from_config(cfg)
    sim = _sim_config(cfg, seed, cfg["barrier"])
    rows = []
    for u in cfg["sim.u"]:
        est = montecarlo.estimate(model, case, u, sim)
        rows.append((u, est.value, est.std_error, est.paths, est.horizon))
    path = os.path.join(out_dir, "simulate.csv")
    return [_write_csv(path, ["u", "estimate", "std_error", "paths", "horizon"], rows)]


def run_compare(cfg: ExperimentConfig, out_dir: str, seed: int,
                method_a=None, method_b=None, filename="compare.csv"):
    model, case = _model_case_from_config(cfg)
    barrier = cfg["barrier"]
    method_a = method_a or cfg["compare.method_a"]
    method_b = method_b or cfg["compare.method_b"]
    end = barrier if barrier is not None else cfg["grid.u_max"]
    if "montecarlo" in (method_a, method_b):
        grid = np.asarray(cfg["sim.u"], dtype=float)
    else:
        grid = np.linspace(0.0, end, cfg["grid.points"])
    a = _values_on_grid(method_a, model, case, barrier, cfg, seed, grid)
    b = _values_on_grid(method_b, model, case, barrier, cfg, seed, grid)
    rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-3)
    max_rel = float(np.max(rel))
    path = os.path.join(out_dir, filename)
    written = _write_csv(
        path,
        ["u", "phi_a", "phi_b", "rel_err"],
        zip(grid, a, b, rel),
        trailer=f"max_rel_err={_fmt(max_rel)}",
    )
    return [written], max_rel


_REPRODUCE_DENSITIES = (
    ("exponential", (("claim.kind", "exponential"), ("claim.rate", 1.0))),
    ("erlang2", (("claim.kind", "erlang"), ("claim.shape", 2), ("claim.rate", 2.0))),
    ("comb_exp", (("claim.kind", "mixture"), ("claim.terms", ((2.0, 1, 1.5), (-1.0, 1, 3.0))))),
)


def run_reproduce(cfg: Optional[ExperimentConfig], out_dir: str, seed: int):
    """Full experiment grid: 3 densities x 4 cases no-barrier, plus the
    3-density barrier run of the time-of-ruin transform at b = 10."""
    base = {key: default for key, (_, default) in _SCHEMA.items()}
    if cfg is not None:
        base.update(cfg.values)
    written = []
    summary_rows = []
    cells = []
    for dens_name, dens_keys in _REPRODUCE_DENSITIES:
        for case_name in _CASES:
            cells.append((dens_name, dens_keys, case_name, None))
    for dens_name, dens_keys in _REPRODUCE_DENSITIES:
        cells.append((dens_name, dens_keys, "laplace_ruin_time", 10.0))

    for dens_name, dens_keys, case_name, barrier in cells:
        values = dict(base)
        values.update(dict(dens_keys))
        values["case"] = case_name
        values["method"] = "pinn"
        values["model.alpha"] = _CASE_ALPHA[case_name]
        values["barrier"] = barrier
        cell_cfg = ExperimentConfig(values)
        tag = f"{dens_name}_{case_name}" + ("_barrier" if barrier is not None else "")
        files, max_rel = run_compare(
            cell_cfg, out_dir, seed, method_a="pinn", method_b="volterra",
            filename=f"{tag}_compare.csv",
        )
        written.extend(files)
        summary_rows.append((dens_name, case_name,
                             "none" if barrier is None else _fmt(barrier), max_rel))
    path = os.path.join(out_dir, "summary.csv")
    written.append(_write_csv(path, ["claim", "case", "barrier", "max_rel_err"], summary_rows))
    return written


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gerbershiu",
        description="Discounted-penalty solvers for the compound Poisson model "
        "with interest and an optional dividend barrier",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("solve", True),
        ("initial-value", True),
        ("simulate", True),
        ("compare", True),
        ("reproduce", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="experiment config file")
        p.add_argument("--output", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--method", default=None, help="override the config method")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config is not None:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            cfg = parse_config(text)
        seed = _seed(args, cfg)
        if args.command == "solve":
            run_solve(cfg, _outdir(args, cfg), seed, method=args.method)
        elif args.command == "initial-value":
            out = _outdir(args, cfg) if args.output or cfg is not None else None
            run_initial_value(cfg, out, seed)
        elif args.command == "simulate":
            run_simulate(cfg, _outdir(args, cfg), seed)
        elif args.command == "compare":
            run_compare(cfg, _outdir(args, cfg), seed)
        elif args.command == "reproduce":
            run_reproduce(cfg, _outdir(args, cfg), seed)
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
