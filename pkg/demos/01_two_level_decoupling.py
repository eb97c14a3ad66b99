"""
Decoupling a two-level one-body Hamiltonian
===========================================

A single anti-Hermitian rotation generated by a+_0 a_1 removes the coupling
between two orbitals.  The rotation is applied in closed form, without ever
building a matrix.
"""

# %%
import numpy as np

from fermirot import Generator, Kind, OperatorProduct, rotate_sum
from fermirot.models import decoupling_angle, two_level
from fermirot.states import build_dense

h_pp, h_qq, h_pq = -1.0, 0.5, 0.3
h = two_level(h_pp, h_qq, h_pq, 0, 1)
print("H =", h)

# %%
# The angle that zeros the off-diagonal term.
theta = decoupling_angle(h_pp, h_qq, h_pq)
g = Generator(OperatorProduct((0,), (1,)), Kind.ANTI_HERMITIAN, theta)
hbar = rotate_sum(h, g)
print(f"theta = {theta:.6f}")
print("Hbar =", hbar)

# %%
# The diagonal entries are now the eigenvalues of the 2x2 matrix.
print("diagonal:", sorted(hbar.coefficient(OperatorProduct.number(p)).real for p in (0, 1)))
print("eigvalsh:", np.linalg.eigvalsh([[h_pp, h_pq], [h_pq, h_qq]]))

# %%
# Scanning the angle shows the coupling passing through zero.
for th in np.linspace(theta - 0.4, theta + 0.4, 5):
    off = rotate_sum(h, g.with_theta(th)).coefficient(OperatorProduct((0,), (1,))).real
    print(f"  theta={th:+.3f}  coupling={off:+.3e}")

# %%
# The transform is unitary, so the Fock-space spectrum does not move.
print("spectrum shift:", np.abs(np.linalg.eigvalsh(build_dense(hbar, 2)) - np.linalg.eigvalsh(build_dense(h, 2))).max())
