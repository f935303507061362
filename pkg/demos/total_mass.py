"""Total mass behaves like a Feller diffusion.

The Laplace transform of the particle mass is compared with the closed form
at a few values of lambda. Runs in a few seconds.
"""

from sdsm import BinaryCritical, ForwardConfig, laplace_mass, mass_check
from sdsm.kernels import ConstantCoefficient, ConstantDensity, KernelModel, ZeroKernel
from sdsm.measures import AtomMeasure

model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), ConstantDensity(1.0))
config = ForwardConfig(model, BinaryCritical(), 100.0, AtomMeasure([0.0], [1.0]), (0.5,), dt_max=0.05)

rows, _ = mass_check(config, 1.0, [-2.0, -1.0, -0.5], [0.25, 0.5], 4000, seed=2)
for t, lam, est, oracle in rows:
    print(f"t={t:<5} lambda={lam:<5} particles {est.value:.4f} +/- {est.stderr:.4f}   closed form {oracle:.4f}")

print("blow-up guard:", end=" ")
try:
    laplace_mass(1.0, 1.0, 1.0, 2.5)
except ValueError as err:
    print(err)
