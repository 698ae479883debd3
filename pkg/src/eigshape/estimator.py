"""scikit-learn style front end.

``fit`` takes a coefficient field and computes an optimal shape;
``predict`` evaluates the first eigenvalue of further masks under the same
coefficients.

>>> est = EigenShapeOptimizer(resolution=32).fit(None)   # doctest: +SKIP
>>> est.lambda1_                                         # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_coeff, check_mask, check_positive
from .coeff import make_identity
from .eigensolver import inflate_to_volume, lambda1
from .mesh import Box, DomainMask, build_mesh
from .optimizer import Schedule, minimize, smoothed_ball


class EigenShapeOptimizer(BaseEstimator):
    """Minimize the first Dirichlet eigenvalue over sets of unit volume.

    Parameters
    ----------
    box : tuple of float
        Side lengths of the container box.
    resolution : int
        Cells per axis.
    epsilon0, n_stages, factor : float, int, float
        Continuation: volume penalty and smearing shrink by ``factor`` per stage.
    delta : float
        Mass penalty parameter (reporting only).
    init_volume : float
        Volume of the initial smoothed ball.
    tol_rel, window, max_inner : float, int, int
        Per-stage stopping controls.
    inflate : bool
        Dilate the extracted support to unit measure before the eigensolve.
    eig_tol : float
        Eigensolver tolerance.

    Attributes
    ----------
    u_star_ : ScalarField
    mask_ : DomainMask
    lambda1_ : float
    eigenfunction_ : ScalarField
    history_ : list of dict
    converged_ : bool
    result_ : MinimizerResult
    coeff_ : CoeffField
    """

    def __init__(self, box=(3.0, 3.0), resolution=64, epsilon0=0.05, n_stages=6, factor=0.5,
                 delta=1e-3, init_volume=0.9, tol_rel=1e-6, window=25, max_inner=4000,
                 inflate=False, eig_tol=1e-10):
        self.box = box
        self.resolution = resolution
        self.epsilon0 = epsilon0
        self.n_stages = n_stages
        self.factor = factor
        self.delta = delta
        self.init_volume = init_volume
        self.tol_rel = tol_rel
        self.window = window
        self.max_inner = max_inner
        self.inflate = inflate
        self.eig_tol = eig_tol

    def _mesh(self):
        check_positive("resolution", self.resolution, integer=True)
        return build_mesh(Box(tuple(self.box)), int(self.resolution))

    def fit(self, X=None, y=None):
        """Optimize the shape for coefficients ``X`` (``None`` means the identity)."""
        mesh = self._mesh()
        A = make_identity(mesh) if X is None else check_coeff(X, mesh)
        for name in ("epsilon0", "delta", "init_volume", "tol_rel", "eig_tol"):
            check_positive(name, getattr(self, name))
        u0 = smoothed_ball(mesh, self.init_volume)
        sched = Schedule.geometric(self.epsilon0, float(u0.values.max()) / 4.0,
                                   n_stages=check_positive("n_stages", self.n_stages, integer=True),
                                   factor=self.factor, delta=self.delta, tol_rel=self.tol_rel,
                                   window=self.window, max_inner=self.max_inner)
        res = minimize(A, sched, u0)
        mask = DomainMask.from_field(res.u_star, 0.0)
        if self.inflate and mask.measure < 1.0:
            mask = inflate_to_volume(mask, 1.0)
        eig = lambda1(mask, A, tol=self.eig_tol)
        self.coeff_ = A
        self.result_ = res
        self.u_star_ = res.u_star
        self.history_ = res.history
        self.converged_ = res.converged
        self.mask_ = mask
        self.lambda1_ = eig.lambda1
        self.eigenfunction_ = eig.eigenfunction
        return self

    def predict(self, masks):
        """First eigenvalue of each mask (boolean vertex arrays or :class:`DomainMask`)."""
        check_is_fitted(self, "coeff_")
        if isinstance(masks, DomainMask) or np.ndim(masks) == self.coeff_.mesh.dim:
            masks = [masks]
        mesh = self.coeff_.mesh
        return np.array([lambda1(check_mask(m, mesh), self.coeff_, tol=self.eig_tol).lambda1
                         for m in masks])

    def transform(self, X=None):
        """Optimal eigenfunction values on the vertex grid."""
        check_is_fitted(self, "coeff_")
        return self.eigenfunction_.values.copy()

    def score(self, X=None, y=None):
        """Negative optimal eigenvalue (larger is better)."""
        check_is_fitted(self, "coeff_")
        return -self.lambda1_
