from .basis import ReferenceBasis, h1_basis, nedelec_basis, nedelec_dims
from .dofmap import DofMap, build_dof_map
from .quadrature import QuadratureRule, quadrature_simplex
from .transforms import covariant_pullback, covariant_pushforward

__all__ = [
    "DofMap",
    "QuadratureRule",
    "ReferenceBasis",
    "build_dof_map",
    "covariant_pullback",
    "covariant_pushforward",
    "h1_basis",
    "nedelec_basis",
    "nedelec_dims",
    "quadrature_simplex",
]
