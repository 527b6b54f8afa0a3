"""
imig - Physics Assembly
========================
Weak forms of steady heat conduction and small-strain linear elasticity
(plane strain) assembled on the discontinuous foreground basis:

- volume terms by cell quadrature of degree 2q;
- Neumann data (inward heat flux, traction) on tagged boundary facets;
- Dirichlet data by symmetric Nitsche terms with penalty beta * material / h;
- material interfaces by weighted symmetric Nitsche coupling:

      -int [[v]] {sigma(u) n} - int [[u]] {sigma(v) n} + gamma int [[u]] [[v]]

  with [[v]] = v_i - v_j, {s} = w_i s_i + w_j s_j and n pointing from
  material i (lower id) to material j.

Inelastic strains (eigenstrain, thermal expansion) enter as the isotropic
stress sigma* = 2 (lambda + mu) s* I on the right-hand side. Every operator is
returned on the foreground nodes; reduction to the enriched space is the
solver's job.

Data callables take (points (n, 2), material ids (n,)) and return (n,) or
(n, 2) values; plain numbers are broadcast.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from imig.config import Config
from imig.exceptions import AssemblyError, ConfigError, InputError
from imig.services.foreground import facet_quadrature
from imig.utils.decorators import log_stage

logger = logging.getLogger(__name__)

EYE2 = np.eye(2)


# =====================================================
# PROBLEM DATA
# =====================================================

class DirichletCondition(NamedTuple):
    """Prescribed displacement on a boundary tag. component: 'all', 'x', 'y' or 'normal'."""
    value: object
    component: str = 'all'


class InterfaceParams(NamedTuple):
    w_i: np.ndarray
    w_j: np.ndarray
    gamma: np.ndarray


def interface_params(h_i, h_j, omega_i, omega_j, beta, d_p=2):
    """
    Weights and penalty of the interface coupling:

        w_i = (h_i^d / omega_i) / S,   S = h_i^d / omega_i + h_j^d / omega_j
        gamma = 2 beta (h_i^(d-1) + h_j^(d-1)) / S

    Raises:
        InputError: non-positive cell size or material parameter, negative beta
    """
    h_i, h_j = np.asarray(h_i, dtype=float), np.asarray(h_j, dtype=float)
    omega_i, omega_j = np.asarray(omega_i, dtype=float), np.asarray(omega_j, dtype=float)
    if np.any(~(h_i > 0)) or np.any(~(h_j > 0)):
        raise InputError("Interface weights need positive cell sizes")
    if np.any(~(omega_i > 0)) or np.any(~(omega_j > 0)):
        raise InputError("Interface weights need positive material parameters")
    if beta < 0:
        raise InputError(f"Interface penalty must be non-negative, got {beta}")
    a = h_i ** d_p / omega_i
    b = h_j ** d_p / omega_j
    s = a + b
    return InterfaceParams(a / s, b / s, 2.0 * beta * (h_i ** (d_p - 1) + h_j ** (d_p - 1)) / s)


def evaluate_data(data, points, material, n_components=1):
    """Evaluate a data callable or broadcast a constant to (n,) or (n, n_components)."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    shape = (points.shape[0],) if n_components == 1 else (points.shape[0], n_components)
    if data is None:
        return np.zeros(shape)
    values = data(points, np.asarray(material)) if callable(data) else data
    values = np.asarray(values, dtype=float)
    try:
        return np.broadcast_to(values, shape).copy()
    except ValueError:
        raise InputError(f"Data of shape {values.shape} does not fit {shape}")


def _per_material(values, name, n_materials):
    """Property table indexed by material id (slot 0 is void)."""
    table = np.full(n_materials + 1, np.nan)
    table[1:] = np.asarray(values, dtype=float)
    if np.any(table[1:] <= 0):
        raise ConfigError(f"Material {name} must be positive")
    return table


@dataclass
class ThermalProblem:
    """
    Steady conduction -div(kappa grad T) = f.

    flux maps boundary tags to the inward heat flux q_bar; dirichlet maps
    tags to prescribed temperatures.
    """
    conductivity: np.ndarray
    source: object = None
    flux: dict = field(default_factory=dict)
    dirichlet: dict = field(default_factory=dict)
    beta_dirichlet: float = Config.PENALTY_FACTOR
    beta_interface: float = Config.PENALTY_FACTOR

    @classmethod
    def from_materials(cls, materials, **kwargs):
        conductivity = _per_material([m.conductivity for m in materials], 'conductivity', len(materials))
        return cls(conductivity=conductivity, **kwargs)


@dataclass
class ElasticProblem:
    """
    Small-strain plane-strain elasticity -div(C : (eps(u) - s* I)) = b.

    dirichlet maps tags to DirichletCondition; traction maps tags to the
    prescribed traction vector. `inelastic` is a uniform strain per material
    (eigenstrain); `expansion` couples the temperature through
    s* = alpha (T - T0).
    """
    lame: np.ndarray        # (n_materials + 1, 2) lambda, mu
    youngs: np.ndarray      # (n_materials + 1,)
    body_force: object = None
    traction: dict = field(default_factory=dict)
    dirichlet: dict = field(default_factory=dict)
    inelastic: np.ndarray = None
    expansion: np.ndarray = None
    reference_temperature: float = 0.0
    beta_dirichlet: float = Config.PENALTY_FACTOR
    beta_interface: float = Config.PENALTY_FACTOR

    def __post_init__(self):
        for tag, condition in self.dirichlet.items():
            if not isinstance(condition, DirichletCondition):
                condition = DirichletCondition(condition)
                self.dirichlet[tag] = condition
            if condition.component not in ('all', 'x', 'y', 'normal'):
                raise ConfigError(f"Unknown Dirichlet component {condition.component!r} on '{tag}'")

    @classmethod
    def from_materials(cls, materials, **kwargs):
        n = len(materials)
        for m in materials:
            if not m.is_elastic:
                raise ConfigError(f"Material '{m.name}' has no elastic constants")
        lame = np.full((n + 1, 2), np.nan)
        lame[1:] = [m.lame for m in materials]
        youngs = _per_material([m.youngs for m in materials], "Young's modulus", n)
        inelastic = np.zeros(n + 1)
        inelastic[1:] = [m.eigenstrain for m in materials]
        expansion = np.zeros(n + 1)
        expansion[1:] = [m.expansion for m in materials]
        kwargs.setdefault('inelastic', inelastic)
        kwargs.setdefault('expansion', expansion)
        return cls(lame=lame, youngs=youngs, **kwargs)

    @property
    def stress_factor(self):
        """2 (lambda + mu) per material: sigma* = stress_factor * s* I."""
        return 2.0 * (self.lame[:, 0] + self.lame[:, 1])


# =====================================================
# TRIPLET ACCUMULATION
# =====================================================

class _Triplets:
    """COO accumulation of local matrices and vectors; slots with dof -1 are skipped."""

    def __init__(self, n_rows, n_cols=None):
        self.shape = (n_rows, n_rows if n_cols is None else n_cols)
        self.rows, self.cols, self.vals = [], [], []
        self.vec_rows, self.vec_vals = [], []

    def add(self, rows, cols, values):
        rows = np.broadcast_to(rows[:, :, None], values.shape)
        cols = np.broadcast_to(cols[:, None, :], values.shape)
        keep = (rows >= 0) & (cols >= 0)
        self.rows.append(rows[keep])
        self.cols.append(cols[keep])
        self.vals.append(values[keep])

    def add_vector(self, rows, values):
        keep = rows >= 0
        self.vec_rows.append(rows[keep])
        self.vec_vals.append(values[keep])

    def matrix(self):
        if not self.rows:
            return sparse.csr_matrix(self.shape)
        A = sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=self.shape,
        ).tocsr()
        A.sum_duplicates()
        return A

    def vector(self):
        if not self.vec_rows:
            return np.zeros(self.shape[0])
        return np.bincount(
            np.concatenate(self.vec_rows), weights=np.concatenate(self.vec_vals), minlength=self.shape[0]
        )


def _check_materials(table, used, name):
    used = np.unique(used)
    bad = used[(used <= 0) | (used >= len(table))]
    if bad.size or np.any(np.isnan(table[used])):
        missing = bad.tolist() or used[np.isnan(table[used])].tolist()
        raise AssemblyError(f"No {name} for material ids {missing}")


def _vector_dofs(dofs):
    """Scalar node dofs (n, m) to interleaved displacement dofs (n, 2m)."""
    out = 2 * dofs[:, :, None] + np.arange(2)[None, None, :]
    out[dofs < 0] = -1
    return out.reshape(dofs.shape[0], -1)


def _vector_values(N):
    """Values of the vector basis (.., m) -> (.., 2m, 2): N_a e_k."""
    V = N[..., :, None, None] * EYE2
    return V.reshape(*N.shape[:-1], -1, 2)


def _traction(G, n, lam, mu):
    """
    Traction sigma(N_a e_k) n of every vector basis function.

    Args:
        G: (f, q, m, 2) gradients, n: (f, 2), lam / mu: (f,)

    Returns:
        (f, q, 2m, 2)
    """
    Gn = np.einsum('fqas,fs->fqa', G, n)
    T = lam[:, None, None, None, None] * G[..., :, None] * n[:, None, None, None, :]
    T = T + mu[:, None, None, None, None] * (
        EYE2[None, None, None, :, :] * Gn[..., None, None] + G[..., None, :] * n[:, None, None, :, None]
    )
    return T.reshape(G.shape[0], G.shape[1], -1, 2)


def _projection(component, normals):
    """Dirichlet projection P per facet (f, 2, 2)."""
    f = normals.shape[0]
    if component == 'all':
        return np.broadcast_to(EYE2, (f, 2, 2))
    if component == 'x':
        return np.broadcast_to(np.diag([1.0, 0.0]), (f, 2, 2))
    if component == 'y':
        return np.broadcast_to(np.diag([0.0, 1.0]), (f, 2, 2))
    return np.einsum('fi,fj->fij', normals, normals)


def _facet_data(mesh, basis, facets, select, degree):
    """Quadrature on selected boundary facets with the owning cells' traces."""
    cells = facets.cells[select]
    points, weights = facet_quadrature(facets.points[select], degree)
    dofs, N, G = basis.trace(cells, points)
    material = mesh.material[cells]
    return cells, points, weights, dofs, N, G, facets.normals[select], material


# =====================================================
# THERMAL
# =====================================================

@log_stage
def assemble_thermal(problem, mesh, basis, degree=None):
    """
    Foreground conduction matrix and load vector.

    Returns:
        (A (n_nodes x n_nodes) csr, b (n_nodes,))

    Raises:
        AssemblyError: a cell's material has no conductivity
    """
    degree = 2 * basis.degree if degree is None else degree
    kappa = np.asarray(problem.conductivity, dtype=float)
    _check_materials(kappa, mesh.material, 'conductivity')
    acc = _Triplets(basis.n_nodes)

    # ---------- Volume ----------
    for ch in basis.volume_chunks(degree):
        mat = mesh.material[ch.cells]
        w = ch.weights * kappa[mat][:, None]
        acc.add(ch.dofs, ch.dofs, np.einsum('cq,cqas,cqbs->cab', w, ch.gradients, ch.gradients))
        if problem.source is not None:
            nq = ch.points.shape[1]
            f = evaluate_data(problem.source, ch.points.reshape(-1, 2), np.repeat(mat, nq)).reshape(-1, nq)
            acc.add_vector(ch.dofs, np.einsum('cq,qa->ca', ch.weights * f, ch.values))

    bnd = mesh.boundary
    _check_tags(mesh, list(problem.flux) + list(problem.dirichlet))

    # ---------- Heat flux ----------
    for tag, qbar in problem.flux.items():
        sel = bnd.select([tag])
        if not sel.size:
            continue
        cells, x, w, dofs, N, G, n, mat = _facet_data(mesh, basis, bnd, sel, degree)
        nq = x.shape[1]
        q = evaluate_data(qbar, x.reshape(-1, 2), np.repeat(mat, nq)).reshape(-1, nq)
        acc.add_vector(dofs, np.einsum('fq,fqa->fa', w * q, N))

    # ---------- Dirichlet (Nitsche) ----------
    for tag, tbar in problem.dirichlet.items():
        sel = bnd.select([tag])
        if not sel.size:
            continue
        cells, x, w, dofs, N, G, n, mat = _facet_data(mesh, basis, bnd, sel, degree)
        nq = x.shape[1]
        k = kappa[mat]
        gamma = problem.beta_dirichlet * k / mesh.h[cells]
        dn = np.einsum('fqas,fs->fqa', G, n)
        sym = np.einsum('fq,fqa,fqb->fab', w * -k[:, None], N, dn)
        Ke = sym + sym.transpose(0, 2, 1) + np.einsum('fq,fqa,fqb->fab', w * gamma[:, None], N, N)
        acc.add(dofs, dofs, Ke)
        t = evaluate_data(tbar, x.reshape(-1, 2), np.repeat(mat, nq)).reshape(-1, nq)
        test = -k[:, None, None] * dn + gamma[:, None, None] * N
        acc.add_vector(dofs, np.einsum('fq,fqa->fa', w * t, test))

    # ---------- Interfaces ----------
    ifc = mesh.interfaces
    if ifc.n_facets:
        ci, cj = ifc.cells[:, 0], ifc.cells[:, 1]
        x, w = facet_quadrature(ifc.points, degree)
        di, Ni, Gi = basis.trace(ci, x)
        dj, Nj, Gj = basis.trace(cj, x)
        ki, kj = kappa[mesh.material[ci]], kappa[mesh.material[cj]]
        p = interface_params(mesh.h[ci], mesh.h[cj], ki, kj, problem.beta_interface)
        n = ifc.normals
        jump = np.concatenate([Ni, -Nj], axis=-1)
        avg = np.concatenate([
            (p.w_i * ki)[:, None, None] * np.einsum('fqas,fs->fqa', Gi, n),
            (p.w_j * kj)[:, None, None] * np.einsum('fqas,fs->fqa', Gj, n),
        ], axis=-1)
        dofs = np.concatenate([di, dj], axis=1)
        sym = -np.einsum('fq,fqa,fqb->fab', w, jump, avg)
        Ke = sym + sym.transpose(0, 2, 1) + np.einsum('fq,fqa,fqb->fab', w * p.gamma[:, None], jump, jump)
        acc.add(dofs, dofs, Ke)

    A, b = acc.matrix(), acc.vector()
    logger.info(f"Thermal system: {A.shape[0]} foreground dofs, {A.nnz} non-zeros")
    return A, b


def _check_tags(mesh, tags):
    present = set(mesh.boundary.tags.tolist())
    for tag in tags:
        if tag not in present:
            logger.warning(f"Boundary tag '{tag}' has no facets on this mesh")


# =====================================================
# ELASTICITY
# =====================================================

def _lame_of(problem, material):
    return problem.lame[material, 0], problem.lame[material, 1]


def _elastic_volume(problem, ch, mat):
    lam, mu = _lame_of(problem, mat)
    G = ch.gradients
    c, nq, m = G.shape[0], G.shape[1], G.shape[2]
    t1 = np.einsum('cq,cqak,cqbl->cakbl', ch.weights * lam[:, None], G, G)
    t2 = np.einsum('cq,cqas,cqbs->cab', ch.weights * mu[:, None], G, G)
    t3 = np.einsum('cq,cqal,cqbk->cakbl', ch.weights * mu[:, None], G, G)
    Ke = t1 + t3 + t2[:, :, None, :, None] * EYE2[None, None, :, None, :]
    return Ke.reshape(c, 2 * m, 2 * m)


@log_stage
def assemble_elastic(problem, mesh, basis, degree=None):
    """
    Foreground stiffness matrix and load vector, displacement dofs interleaved
    as 2 * node + component.

    Returns:
        (A (2n x 2n) csr, b (2n,))

    Raises:
        AssemblyError: a cell's material has no elastic constants
    """
    degree = 2 * basis.degree if degree is None else degree
    _check_materials(problem.lame[:, 1], mesh.material, 'elastic constants')
    factor = problem.stress_factor
    inelastic = problem.inelastic if problem.inelastic is not None else np.zeros(factor.size)
    acc = _Triplets(2 * basis.n_nodes)

    # ---------- Volume ----------
    for ch in basis.volume_chunks(degree):
        mat = mesh.material[ch.cells]
        vd = _vector_dofs(ch.dofs)
        acc.add(vd, vd, _elastic_volume(problem, ch, mat))
        nq = ch.points.shape[1]
        if problem.body_force is not None:
            bf = evaluate_data(problem.body_force, ch.points.reshape(-1, 2), np.repeat(mat, nq), 2)
            bf = bf.reshape(-1, nq, 2)
            acc.add_vector(vd, np.einsum('cqk,qa->cak', ch.weights[:, :, None] * bf, ch.values).reshape(vd.shape))
        sigma = factor[mat] * inelastic[mat]
        if np.any(sigma != 0):
            Fe = np.einsum('cq,cqak->cak', ch.weights * sigma[:, None], ch.gradients)
            acc.add_vector(vd, Fe.reshape(vd.shape))

    bnd = mesh.boundary
    _check_tags(mesh, list(problem.traction) + list(problem.dirichlet))

    # ---------- Traction ----------
    for tag, hbar in problem.traction.items():
        sel = bnd.select([tag])
        if not sel.size:
            continue
        cells, x, w, dofs, N, G, n, mat = _facet_data(mesh, basis, bnd, sel, degree)
        nq = x.shape[1]
        t = evaluate_data(hbar, x.reshape(-1, 2), np.repeat(mat, nq), 2).reshape(-1, nq, 2)
        vd = _vector_dofs(dofs)
        acc.add_vector(vd, np.einsum('fqk,fqa->fak', w[:, :, None] * t, N).reshape(vd.shape))

    # ---------- Dirichlet (Nitsche) ----------
    for tag, condition in problem.dirichlet.items():
        sel = bnd.select([tag])
        if not sel.size:
            continue
        cells, x, w, dofs, N, G, n, mat = _facet_data(mesh, basis, bnd, sel, degree)
        nq = x.shape[1]
        lam, mu = _lame_of(problem, mat)
        gamma = problem.beta_dirichlet * problem.youngs[mat] / mesh.h[cells]
        P = _projection(condition.component, n)
        V = _vector_values(N)
        T = _traction(G, n, lam, mu)
        PV = np.einsum('fcd,fqmd->fqmc', P, V)
        vd = _vector_dofs(dofs)

        sym = -np.einsum('fq,fqac,fqbc->fab', w, PV, T)
        Ke = sym + sym.transpose(0, 2, 1) + np.einsum('fq,fqac,fqbc->fab', w * gamma[:, None], PV, PV)
        acc.add(vd, vd, Ke)

        ubar = evaluate_data(condition.value, x.reshape(-1, 2), np.repeat(mat, nq), 2).reshape(-1, nq, 2)
        Pu = np.einsum('fcd,fqd->fqc', P, ubar)
        Fe = -np.einsum('fq,fqac,fqc->fa', w, T, Pu) + np.einsum('fq,fqac,fqc->fa', w * gamma[:, None], PV, Pu)
        sigma = factor[mat] * inelastic[mat]
        if np.any(sigma != 0):
            Fe -= np.einsum('fq,fqac,fc->fa', w * sigma[:, None], PV, n)
        acc.add_vector(vd, Fe)

    # ---------- Interfaces ----------
    ifc = mesh.interfaces
    if ifc.n_facets:
        ci, cj = ifc.cells[:, 0], ifc.cells[:, 1]
        mi, mj = mesh.material[ci], mesh.material[cj]
        x, w = facet_quadrature(ifc.points, degree)
        di, Ni, Gi = basis.trace(ci, x)
        dj, Nj, Gj = basis.trace(cj, x)
        p = interface_params(mesh.h[ci], mesh.h[cj], problem.youngs[mi], problem.youngs[mj],
                             problem.beta_interface)
        n = ifc.normals
        jump = np.concatenate([_vector_values(Ni), -_vector_values(Nj)], axis=2)
        avg = np.concatenate([
            p.w_i[:, None, None, None] * _traction(Gi, n, *_lame_of(problem, mi)),
            p.w_j[:, None, None, None] * _traction(Gj, n, *_lame_of(problem, mj)),
        ], axis=2)
        vd = np.concatenate([_vector_dofs(di), _vector_dofs(dj)], axis=1)
        sym = -np.einsum('fq,fqac,fqbc->fab', w, jump, avg)
        Ke = sym + sym.transpose(0, 2, 1) + np.einsum('fq,fqac,fqbc->fab', w * p.gamma[:, None], jump, jump)
        acc.add(vd, vd, Ke)

        sigma = p.w_i * factor[mi] * inelastic[mi] + p.w_j * factor[mj] * inelastic[mj]
        if np.any(sigma != 0):
            acc.add_vector(vd, -np.einsum('fq,fqac,fc->fa', w * sigma[:, None], jump, n))

    A, b = acc.matrix(), acc.vector()
    logger.info(f"Elastic system: {A.shape[0]} foreground dofs, {A.nnz} non-zeros")
    return A, b


@log_stage
def assemble_coupling(problem, mesh, basis, degree=None):
    """
    Thermal load operator C (2n x n): the elastic load of a foreground
    temperature field T is C (T - T0), from s* = alpha (T - T0).

    The temperature uses the same foreground basis as the displacement.

    Raises:
        AssemblyError: no expansion coefficients
    """
    if problem.expansion is None:
        raise AssemblyError("Thermal coupling needs expansion coefficients")
    degree = 2 * basis.degree if degree is None else degree
    coef = problem.stress_factor * np.asarray(problem.expansion, dtype=float)
    coef = np.where(np.isnan(coef), 0.0, coef)
    acc = _Triplets(2 * basis.n_nodes, basis.n_nodes)

    for ch in basis.volume_chunks(degree):
        mat = mesh.material[ch.cells]
        vd = _vector_dofs(ch.dofs)
        Ce = np.einsum('cq,cqak,qb->cakb', ch.weights * coef[mat][:, None], ch.gradients, ch.values)
        acc.add(vd, ch.dofs, Ce.reshape(vd.shape[0], vd.shape[1], -1))

    bnd = mesh.boundary
    for tag, condition in problem.dirichlet.items():
        sel = bnd.select([tag])
        if not sel.size:
            continue
        cells, x, w, dofs, N, G, n, mat = _facet_data(mesh, basis, bnd, sel, degree)
        P = _projection(condition.component, n)
        PVn = np.einsum('fcd,fqmd,fc->fqm', P, _vector_values(N), n)
        Ce = -np.einsum('fq,fqa,fqb->fab', w * coef[mat][:, None], PVn, N)
        acc.add(_vector_dofs(dofs), dofs, Ce)

    ifc = mesh.interfaces
    if ifc.n_facets:
        ci, cj = ifc.cells[:, 0], ifc.cells[:, 1]
        mi, mj = mesh.material[ci], mesh.material[cj]
        x, w = facet_quadrature(ifc.points, degree)
        di, Ni, _ = basis.trace(ci, x)
        dj, Nj, _ = basis.trace(cj, x)
        p = interface_params(mesh.h[ci], mesh.h[cj], problem.youngs[mi], problem.youngs[mj],
                             problem.beta_interface)
        jump_n = np.einsum('fqac,fc->fqa', np.concatenate([_vector_values(Ni), -_vector_values(Nj)], axis=2),
                           ifc.normals)
        temp = np.concatenate([
            (p.w_i * coef[mi])[:, None, None] * Ni,
            (p.w_j * coef[mj])[:, None, None] * Nj,
        ], axis=-1)
        vd = np.concatenate([_vector_dofs(di), _vector_dofs(dj)], axis=1)
        acc.add(vd, np.concatenate([di, dj], axis=1), -np.einsum('fq,fqa,fqb->fab', w, jump_n, temp))

    C = acc.matrix()
    logger.info(f"Coupling operator: {C.shape[0]} x {C.shape[1]}, {C.nnz} non-zeros")
    return C
