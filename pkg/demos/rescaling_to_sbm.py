"""Diffusive rescaling pushes an interacting system toward super-Brownian motion.

Deviations of the rescaled second moment from the limiting value shrink as
theta grows. This is a shortened version of the acceptance run.
"""

from sdsm import BinaryCritical, rescaling_experiment, rescaling_trend
from sdsm.functionals import GaussianBump
from sdsm.kernels import ConstantCoefficient, ConstantDensity, GaussianKernel, KernelModel
from sdsm.measures import AtomMeasure

model = KernelModel(GaussianKernel(3.0, 0.25), ConstantCoefficient(1.0), ConstantDensity(1.0))
rows = rescaling_experiment(
    model,
    BinaryCritical(),
    AtomMeasure([0.0], [1.0]),
    GaussianBump(1.0, 0.0, 0.5),
    0.25,
    [1, 2, 4],
    particles_per_mass=100,
    replicates=1000,
    dt_max=0.005,
    seed=6,
)
for r in rows:
    print(f"theta={r.theta:<4} second moment {r.second.value:.4f} +/- {r.second.stderr:.4f}  limit {r.oracle_second:.4f}  deviation {r.deviation:.4f}")
trend = rescaling_trend(rows)
print(f"deviations shrink: {trend['trend_ok']}, last row within noise of the limit: {trend['final_ok']}")
