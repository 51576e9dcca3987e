# %% [markdown]
# # A mean-field equation that collapses to an ODE
#
# With b = sigma = 0 and f(y, mu) = mean_z tanh(z), the common rough driver
# moves every particle by the same amount: Y^i_t = xi^i + Z_t. The shift
# solves dZ = mean_i tanh(xi^i + Z) dX, a scalar ODE when X = sin is smooth.
# The particle system should keep the shift identical across particles and
# converge to the ODE at second order in h.

# %%
import numpy as np

from roughmkv.coeffs import CoefficientSet, make_kernel, zero_kernel
from roughmkv.mkv import initial_atoms, simulate_mkv
from roughmkv.roughpath import lift_smooth

N = 256
xi = initial_atoms(seed=8, N=N, d=1)
cs = CoefficientSet(zero_kernel(1, (1,)), zero_kernel(1, (1, 1)), make_kernel("tanh_z", 1, (1, 1)))


def reduced_rhs(t, z):
    return np.mean(np.tanh(xi[:, 0] + z)) * np.cos(t)


# %% reference: classical RK4 on a very fine grid
n = 20000
h = 1.0 / n
z = 0.0
for k in range(n):
    t = k * h
    k1 = reduced_rhs(t, z)
    k2 = reduced_rhs(t + h / 2, z + h / 2 * k1)
    k3 = reduced_rhs(t + h / 2, z + h / 2 * k2)
    k4 = reduced_rhs(t + h, z + h * k3)
    z += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
print(f"reduced ODE: Z_1 = {z:.12f}")

# %% particle runs on coarser and coarser grids
Ks = (16, 32, 64, 128)
errs = []
for K in Ks:
    res = simulate_mkv(cs, lift_smooth(np.sin, np.linspace(0, 1, K + 1), 32), xi)
    shift = res.Y - xi[None]
    errs.append(abs(shift[-1, 0, 0] - z))
    print(f"K={K:4d}  spread of shift {np.ptp(shift, axis=1).max():.1e}   |Z_K - Z| = {errs[-1]:.3e}")
print("slope:", round(np.polyfit(np.log(1 / np.array(Ks)), np.log(errs), 1)[0], 3))
