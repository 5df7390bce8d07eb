"""Benchmark the compiled core against the NumPy fallback.

Times the two hot kernel families -- batched MLP loss/gradient evaluation
(the training inner loop) and compound-Poisson path simulation -- at several
batch sizes, since the trade-off flips with size: NumPy amortizes well on
large batches, the compiled core has no per-call overhead on small ones.

Run:  python benchmarks/compare_backends.py
"""

import time

import numpy as np

from gerbershiu import initial_value as iv
from gerbershiu import network as nw
from gerbershiu import pinn
from gerbershiu._backends import available_backends
from gerbershiu.risk_model import ClaimDistribution, PenaltyCase, RiskModel


def time_call(fn, min_time=0.5):
    fn()  # warm up
    n, t0 = 0, time.perf_counter()
    while time.perf_counter() - t0 < min_time:
        fn()
        n += 1
    return (time.perf_counter() - t0) / n


def mlp_benchmarks(backends):
    model = RiskModel(
        c=1.5, lam=1.0, r=0.01, alpha=0.01, claim=ClaimDistribution.exponential(1.0)
    )
    case = PenaltyCase.laplace_ruin_time()
    anchor = iv.phi_infinity_at_zero(model, case)
    spec = pinn.ProblemSpec(model=model, case=case, u_max=30.0, anchor=anchor)
    rows = []
    for residual_points, conv_nodes, label in (
        (16, 8, "small collocation loss"),
        (256, 16, "tuned collocation loss"),
        (256, 32, "default collocation loss"),
    ):
        cfg = pinn.TrainConfig(
            residual_points=residual_points, conv_quad_nodes=conv_nodes, seed=0
        )
        loss = pinn.assemble_loss(spec, cfg)
        params = nw.init(cfg.arch, 0)
        timings = {
            name: time_call(lambda b=mod: nw.loss_and_gradient(params, loss, b))
            for name, mod in backends.items()
        }
        rows.append((f"{label} (P={len(loss.points)})", timings))

    params = nw.init((1, 20, 20, 20, 20, 1), 0)
    for P in (8, 8192):
        xs = np.linspace(0.0, 30.0, P)
        timings = {
            name: time_call(lambda b=mod: b.mlp_forward(params.weights, params.biases, xs))
            for name, mod in backends.items()
        }
        rows.append((f"forward pass (P={P})", timings))
    return rows


def mc_benchmarks(backends):
    from gerbershiu import montecarlo as mc
    import gerbershiu._backends as backends_pkg

    model = RiskModel(
        c=1.5, lam=1.0, r=0.01, alpha=0.01, claim=ClaimDistribution.erlang(2, 2.0)
    )
    case = PenaltyCase.laplace_ruin_time()
    rows = []
    saved = backends_pkg.active
    try:
        for paths, label in ((100, "100 paths"), (20_000, "20k paths")):
            cfg = mc.SimConfig(paths=paths, seed=3)
            timings = {}
            for name, mod in backends.items():
                backends_pkg.active = mod
                timings[name] = time_call(
                    lambda: mc.estimate(model, case, 0.0, cfg), min_time=1.0
                )
            rows.append((f"simulate {label}", timings))
    finally:
        backends_pkg.active = saved
    return rows


def main():
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    rows = mlp_benchmarks(backends) + mc_benchmarks(backends)
    width = max(len(label) for label, _ in rows)
    header = f"{'kernel':<{width}}" + "".join(f"{name:>14}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, timings in rows:
        line = f"{label:<{width}}"
        for name in backends:
            line += f"{timings[name] * 1e3:>12.2f}ms"
        if len(timings) == 2:
            line += f"{timings['reference'] / timings['compiled']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
