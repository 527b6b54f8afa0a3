"""
imig - Reduced Systems and Solvers
===================================
Reduction of foreground operators to the enriched space, sparse direct
solution, staggered and monolithic thermoelastic coupling, and
post-processing (error norms, derived nodal fields).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from imig.config import Config
from imig.exceptions import AssemblyError, InputError, SingularSystemError
from imig.services.extraction import ExtractionOperator, block_extraction
from imig.utils.decorators import log_stage

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """K = M A M^T, f = M b on the enriched space."""
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    extraction: sparse.csr_matrix
    base_function: np.ndarray
    name: str = ''

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    @property
    def condition(self):
        """Diagonal ratio max |K_ii| / min |K_ii|, a cheap conditioning indicator."""
        diag = np.abs(self.matrix.diagonal())
        if not diag.size:
            return 0.0
        low = diag.min()
        return float(diag.max() / low) if low > 0 else float('inf')


@dataclass
class SolutionFields:
    """Coefficients and foreground nodal values of a solve."""
    temperature: np.ndarray = None   # (n_nodes,)
    displacement: np.ndarray = None  # (n_nodes, 2)
    d_T: np.ndarray = None
    d_u: np.ndarray = None
    residuals: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)


def reduce(A, b, extraction, name=''):
    """
    Galerkin projection of a foreground system onto the enriched space.

    Args:
        A, b: foreground matrix and load
        extraction: ExtractionOperator (or a bare sparse matrix)

    Raises:
        InputError: the operator does not match the system size
    """
    if isinstance(extraction, ExtractionOperator):
        M, base = extraction.matrix, extraction.base_functions
    else:
        M = sparse.csr_matrix(extraction)
        base = np.arange(M.shape[0])
    n = M.shape[1]
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (n, n) or b.size != n:
        raise InputError(f"System of size {A.shape} / {b.size} does not match extraction {M.shape}")
    K = (M @ A @ M.T).tocsr()
    K.sum_duplicates()
    system = ReducedSystem(K, M @ b, M, np.asarray(base), name)
    logger.info(
        f"Reduced {name or 'system'}: {system.n_dofs} dofs, {K.nnz} non-zeros, "
        f"diagonal ratio {system.condition:.3e}"
    )
    return system


def solve_reduced(system, rhs=None, tol=Config.RESIDUAL_TOLERANCE, singular=Config.SINGULAR_RESIDUAL):
    """
    Sparse LU solve with one step of iterative refinement.

    Returns:
        (coefficients, relative residual)

    Raises:
        SingularSystemError: the factorization fails, yields non-finite values
            or leaves a relative residual above `singular`
    """
    K = system.matrix.tocsc()
    f = system.rhs if rhs is None else np.asarray(rhs, dtype=float)
    try:
        lu = splu(K)
    except RuntimeError as exc:
        raise _singular(system, str(exc))
    d = lu.solve(f)
    d += lu.solve(f - K @ d)
    if not np.all(np.isfinite(d)):
        raise _singular(system, "non-finite solution")

    norm_f = np.linalg.norm(f)
    residual = float(np.linalg.norm(f - K @ d) / (norm_f if norm_f > 0 else 1.0))
    if residual > singular:
        raise _singular(system, f"residual {residual:.3e}")
    if residual > tol:
        logger.warning(f"{system.name or 'System'}: relative residual {residual:.3e} exceeds {tol:.1e}")
    else:
        logger.debug(f"{system.name or 'System'}: relative residual {residual:.3e}")
    return d, residual


def _singular(system, reason):
    diag = np.abs(system.matrix.diagonal())
    row = int(np.argmin(diag)) if diag.size else None
    value = float(diag[row]) if row is not None else None
    function = int(system.base_function[row]) if row is not None and system.base_function.size > row else None
    return SingularSystemError(
        f"{system.name or 'System'} is singular ({reason}); smallest diagonal {value} "
        f"at row {row} (background function {function})",
        pivot_row=row, pivot_value=value, function=function,
    )


@log_stage
def solve_staggered(thermal=None, elastic=None, coupling=None, reference_temperature=0.0):
    """
    Solve the thermal system, then the elastic system with the thermal load
    M_U C (M_T^T d_T - T0). Either system may be omitted.
    """
    result = SolutionFields()
    if thermal is not None:
        result.d_T, result.residuals['thermal'] = solve_reduced(thermal)
        result.temperature = thermal.extraction.T @ result.d_T
        result.conditions['thermal'] = thermal.condition
    if elastic is not None:
        f = elastic.rhs
        if coupling is not None:
            if result.temperature is None:
                raise InputError("Thermal coupling needs a thermal system")
            f = f + elastic.extraction @ (coupling @ (result.temperature - reference_temperature))
        result.d_u, result.residuals['elastic'] = solve_reduced(elastic, rhs=f)
        result.displacement = (elastic.extraction.T @ result.d_u).reshape(-1, 2)
        result.conditions['elastic'] = elastic.condition
    return result


@log_stage
def solve_monolithic(thermal, elastic, coupling, reference_temperature=0.0):
    """
    One block system

        [ K_TT            0    ] [d_T]   [ f_T                      ]
        [ -M_U C M_T^T   K_vv  ] [d_u] = [ f_u - M_U C (T0 * 1)     ]

    equivalent to the staggered solve.
    """
    M_T, M_U = thermal.extraction, elastic.extraction
    K_vT = -(M_U @ coupling @ M_T.T)
    K = sparse.bmat([[thermal.matrix, None], [K_vT, elastic.matrix]], format='csr')
    ones = np.full(coupling.shape[1], float(reference_temperature))
    f = np.concatenate([thermal.rhs, elastic.rhs - M_U @ (coupling @ ones)])
    base = np.concatenate([thermal.base_function, elastic.base_function])
    block = ReducedSystem(K, f, block_extraction(M_T, M_U), base, 'monolithic')
    d, residual = solve_reduced(block)

    n_T = thermal.n_dofs
    result = SolutionFields(d_T=d[:n_T], d_u=d[n_T:])
    result.temperature = M_T.T @ result.d_T
    result.displacement = (M_U.T @ result.d_u).reshape(-1, 2)
    result.residuals['monolithic'] = residual
    result.conditions['monolithic'] = block.condition
    return result


# =====================================================
# POST-PROCESSING
# =====================================================

def _exact_values(exact, points, material):
    """Evaluate a callable(points, material) or a {material id: callable(points)} dict."""
    if not isinstance(exact, dict):
        return np.asarray(exact(points, material), dtype=float)
    out = None
    for m in np.unique(material):
        if int(m) not in exact:
            raise AssemblyError(f"No exact solution for material id {int(m)}")
        sel = material == m
        vals = np.asarray(exact[int(m)](points[sel]), dtype=float)
        if out is None:
            out = np.empty((points.shape[0],) + vals.shape[1:])
        out[sel] = vals
    return out


def error_norms(mesh, basis, values, exact, exact_gradient, degree=None):
    """
    L2 and H1-seminorm errors of foreground nodal values against an exact
    solution, by cell quadrature of degree 2q + 2.

    Args:
        values: (n_nodes,) scalar or (n_nodes, 2) vector nodal values
        exact: exact(points, material) -> (n,) / (n, 2), or a dict by material id
        exact_gradient: same, returning (n, 2) / (n, 2, 2) with [k, s] = d u_k / d x_s

    Returns:
        (L2 error, H1 seminorm error)
    """
    degree = 2 * basis.degree + 2 if degree is None else degree
    values = np.asarray(values, dtype=float)
    vector = values.ndim == 2
    l2 = h1 = 0.0
    for ch in basis.volume_chunks(degree):
        mat = mesh.material[ch.cells]
        nq = ch.points.shape[1]
        pts = ch.points.reshape(-1, 2)
        mats = np.repeat(mat, nq)
        local = values[ch.dofs]
        if vector:
            uh = np.einsum('qa,cak->cqk', ch.values, local)
            guh = np.einsum('cqas,cak->cqks', ch.gradients, local)
            ue = _exact_values(exact, pts, mats).reshape(-1, nq, 2)
            gue = _exact_values(exact_gradient, pts, mats).reshape(-1, nq, 2, 2)
            l2 += np.einsum('cq,cqk->', ch.weights, (uh - ue) ** 2)
            h1 += np.einsum('cq,cqks->', ch.weights, (guh - gue) ** 2)
        else:
            uh = np.einsum('qa,ca->cq', ch.values, local)
            guh = np.einsum('cqas,ca->cqs', ch.gradients, local)
            ue = _exact_values(exact, pts, mats).reshape(-1, nq)
            gue = _exact_values(exact_gradient, pts, mats).reshape(-1, nq, 2)
            l2 += np.einsum('cq,cq->', ch.weights, (uh - ue) ** 2)
            h1 += np.einsum('cq,cqs->', ch.weights, (guh - gue) ** 2)
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def derived_fields(mesh, basis, temperature=None, displacement=None, problem=None):
    """
    Nodal post-processing on the foreground basis, each node evaluated in its
    own cell.

    Returns:
        dict with 'grad_T_norm' (|grad T|), 'u_norm' (|u|), 'mech_strain_norm'
        (Frobenius norm of eps(u) - s* I) and 'stress_norm' when the
        corresponding inputs are given.
    """
    out = {}
    cells = basis.node_cell
    dofs, _, G = basis.trace(cells, basis.nodes[:, None, :])
    G = G[:, 0]
    valid = dofs >= 0
    safe = np.where(valid, dofs, 0)
    if temperature is not None:
        T = np.asarray(temperature, dtype=float)
        grad = np.einsum('nas,na->ns', G, np.where(valid, T[safe], 0.0))
        out['grad_T_norm'] = np.linalg.norm(grad, axis=1)
    if displacement is not None:
        u = np.asarray(displacement, dtype=float)
        out['u_norm'] = np.linalg.norm(u, axis=1)
        if problem is not None:
            local = np.where(valid[:, :, None], u[safe], 0.0)
            grad_u = np.einsum('nas,nak->nks', G, local)
            strain = 0.5 * (grad_u + grad_u.transpose(0, 2, 1))
            mat = mesh.material[cells]
            s_star = np.zeros(cells.size)
            if problem.inelastic is not None:
                s_star += problem.inelastic[mat]
            if temperature is not None and problem.expansion is not None:
                s_star += problem.expansion[mat] * (np.asarray(temperature) - problem.reference_temperature)
            mech = strain - s_star[:, None, None] * np.eye(2)
            out['mech_strain_norm'] = np.linalg.norm(mech, axis=(1, 2))
            lam, mu = problem.lame[mat, 0], problem.lame[mat, 1]
            trace = mech[:, 0, 0] + mech[:, 1, 1]
            stress = lam[:, None, None] * trace[:, None, None] * np.eye(2) + 2.0 * mu[:, None, None] * mech
            out['stress_norm'] = np.linalg.norm(stress, axis=(1, 2))
    return out
