"""Bilinear (Q1) finite elements on a uniform rectangle.

Node ``(i, j)`` has global index ``i*(ny+1) + j``, so a node array of shape
``(nx+1, ny+1)`` maps to the global vector by ``ravel()``.  Cell integrals use
2x2 Gauss quadrature, exact for bilinear products with a bilinearly
interpolated coefficient.  Boundary terms use edge-trapezoid (lumped) weights.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .meshfields import SpaceTimeGrid, boundary_weights

_G = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
# Gauss points (xi, eta) and local nodes (0,0), (1,0), (1,1), (0,1)
_QP = np.array([(a, b) for a in _G for b in _G])
_LOC = np.array([(0, 0), (1, 0), (1, 1), (0, 1)])


def _shape(xi: np.ndarray, eta: np.ndarray):
    lx, ly = _LOC[:, 0], _LOC[:, 1]
    fx = np.where(lx[None] == 1, xi[:, None], 1 - xi[:, None])
    fy = np.where(ly[None] == 1, eta[:, None], 1 - eta[:, None])
    dfx = np.where(lx[None] == 1, 1.0, -1.0)
    dfy = np.where(ly[None] == 1, 1.0, -1.0)
    return fx * fy, dfx * fy, fx * dfy


_PHI, _DXI, _DETA = _shape(_QP[:, 0], _QP[:, 1])  # (4 qp, 4 basis)


class Q1Space:
    """Assembled Q1 operators on the spatial part of ``grid``."""

    def __init__(self, grid: SpaceTimeGrid) -> None:
        self.grid = grid.spatial()
        g = self.grid
        self.nx, self.ny = g.nx, g.ny
        self.ndof = (g.nx + 1) * (g.ny + 1)
        ii, jj = np.meshgrid(np.arange(g.nx), np.arange(g.ny), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        self.conn = np.stack([(ii + lx) * (g.ny + 1) + (jj + ly) for lx, ly in _LOC], axis=1)
        self.ncell = self.conn.shape[0]
        self._rows = np.repeat(self.conn, 4, axis=1).ravel()
        self._cols = np.tile(self.conn, (1, 4)).ravel()
        # physical basis gradients at the Gauss points: (qp, basis, 2)
        self._grad = np.stack([_DXI / g.hx, _DETA / g.hy], axis=-1)
        self._wq = 0.25 * g.hx * g.hy

    def _assemble(self, cell: np.ndarray) -> sp.csr_matrix:
        cell = np.broadcast_to(cell, (self.ncell, 4, 4))
        m = sp.coo_matrix((cell.ravel(), (self._rows, self._cols)),
                          shape=(self.ndof, self.ndof))
        return m.tocsr()

    def coef_at_qp(self, nodal: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of a node field ``(nx+1, ny+1, ...)`` to ``(cell, qp, ...)``."""
        flat = nodal.reshape((self.ndof,) + nodal.shape[2:])
        vals = flat[self.conn]  # (cell, basis, ...)
        return np.einsum("qk,ck...->cq...", _PHI, vals)

    def stiffness(self, A) -> sp.csr_matrix:
        """``int A grad(phi_l) . grad(phi_k)``; ``A`` is 2x2 or a node field ``(nx+1, ny+1, 2, 2)``."""
        A = np.asarray(A, dtype=float)
        if A.shape == (2, 2):
            cell = self._wq * np.einsum("qkd,de,qle->kl", self._grad, A, self._grad)
        else:
            Aq = self.coef_at_qp(A)
            cell = self._wq * np.einsum("qkd,cqde,qle->ckl", self._grad, Aq, self._grad)
        return self._assemble(cell)

    @cached_property
    def laplace(self) -> sp.csr_matrix:
        return self.stiffness(np.eye(2))

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self._assemble(self._wq * _PHI.T @ _PHI)

    @cached_property
    def div_load(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Matrices ``Gx, Gy`` with ``(Gx v)_k = int v d_x phi_k`` for nodal ``v``."""
        gx = self._wq * np.einsum("qk,ql->kl", self._grad[..., 0], _PHI)
        gy = self._wq * np.einsum("qk,ql->kl", self._grad[..., 1], _PHI)
        return self._assemble(gx), self._assemble(gy)

    @cached_property
    def gamma_weights(self) -> np.ndarray:
        return boundary_weights(self.grid).ravel()

    def load(self, f=None, fvec=None, h=None) -> np.ndarray:
        """``int f phi + int fvec . grad phi + int_Gamma h phi`` for nodal data."""
        out = np.zeros(self.ndof)
        if f is not None:
            out += self.mass @ np.ravel(f)
        if fvec is not None:
            fv = np.asarray(fvec).reshape(self.ndof, 2)
            gx, gy = self.div_load
            out += gx @ fv[:, 0] + gy @ fv[:, 1]
        if h is not None:
            out += self.gamma_weights * np.ravel(h)
        return out

    def energy_norms(self, v: np.ndarray) -> tuple[float, float]:
        """``(||grad v||_2, ||v||_{2,Gamma})`` of the Q1 function with nodal values ``v``."""
        v = np.ravel(v)
        g2 = max(float(v @ (self.laplace @ v)), 0.0)
        b2 = float(np.sum(self.gamma_weights * v * v))
        return float(np.sqrt(g2)), float(np.sqrt(b2))
