//! Mixed velocity/pressure problems: Stokes and the Oseen linearization of
//! the Navier-Stokes equations, plus the mass and Gram matrices used by the
//! time stepper and the nonlinear stopping criterion.
//!
//! Velocity unknowns are ordered per direction (all x-components, then all
//! y-components), followed by the pressure block; see
//! [`crate::spline::FieldLayout`]. The pressure-velocity block is the exact
//! transpose of the velocity-pressure block, assembled once.

use super::nitsche::{nitsche_constant, GradientKind};
use super::{AssembledSystem, AssemblyError, SystemMeta};
use crate::forms::kernels::{normal_sym_grad, sym_grad_contraction};
use crate::geometry::{BoundaryKind, GeometryModel};
use crate::sparse::{CooBuilder, SparseMatrix};
use crate::spline::{BasisBuffer, FieldLayout, SplineSpace};
use std::collections::BTreeMap;

/// Vector boundary data evaluated at a physical point of a tagged piece.
pub type VectorBoundaryData<'a> = &'a dyn Fn([f64; 2], crate::geometry::BoundaryId) -> [f64; 2];

/// Sub-blocks of a mixed system in layout order.
#[derive(Debug, Clone)]
pub struct MixedBlocks {
    pub a_vu: SparseMatrix,
    pub a_vp: SparseMatrix,
    pub a_qu: SparseMatrix,
}

/// Convective velocity data for the Oseen operator.
pub enum ConvectiveField<'a> {
    Constant([f64; 2]),
    Analytic(&'a dyn Fn([f64; 2]) -> [f64; 2]),
    /// Coefficients of a discrete field in the same velocity space/layout.
    Discrete(&'a [f64]),
}

impl ConvectiveField<'_> {
    fn eval(
        &self,
        vel: &SplineSpace,
        layout: &FieldLayout,
        e: usize,
        xe: [f64; 2],
        xp: [f64; 2],
        buf: &mut BasisBuffer,
    ) -> [f64; 2] {
        match self {
            ConvectiveField::Constant(w) => *w,
            ConvectiveField::Analytic(f) => f(xp),
            ConvectiveField::Discrete(coeffs) => {
                vel.eval_basis(e, xe, buf);
                let mut w = [0.0; 2];
                for (k, dof) in vel.element_dofs(e).into_iter().enumerate() {
                    for d in 0..2 {
                        w[d] += coeffs[layout.velocity(d, dof)] * buf.val[k];
                    }
                }
                w
            }
        }
    }
}

/// Velocity mass matrix over the trimmed domain, block-diagonal across the
/// two components.
pub fn assemble_velocity_mass(geom: &GeometryModel, vel: &SplineSpace, layout: &FieldLayout) -> SparseMatrix {
    let scalar = assemble_scalar_gram(geom, vel, 1.0, 0.0);
    let mut b = CooBuilder::new(layout.velocity_total(), layout.velocity_total());
    b.push_matrix(0, 0, 1.0, &scalar);
    b.push_matrix(layout.n_u, layout.n_u, 1.0, &scalar);
    b.build()
}

/// Gram matrix mass_weight*(v,u) + stiff_weight*(grad v, grad u) of a
/// scalar space over the trimmed domain.
pub fn assemble_scalar_gram(
    geom: &GeometryModel,
    space: &SplineSpace,
    mass_weight: f64,
    stiff_weight: f64,
) -> SparseMatrix {
    let n = space.n_active();
    let mut b = CooBuilder::new(n, n);
    let mut buf = BasisBuffer::default();
    for e in geom.active_elements() {
        let dofs = space.element_dofs(e);
        for p in geom.volume_quadrature(e).iter() {
            space.eval_basis(e, p.xe, &mut buf);
            for (i, &gi) in dofs.iter().enumerate() {
                for (j, &gj) in dofs.iter().enumerate() {
                    let gdot = buf.grad[i][0] * buf.grad[j][0] + buf.grad[i][1] * buf.grad[j][1];
                    b.push(gi, gj, p.weight * (mass_weight * buf.val[i] * buf.val[j] + stiff_weight * gdot));
                }
            }
        }
    }
    b.build()
}

/// Component-wise Gram over the velocity layout.
pub fn assemble_velocity_gram(
    geom: &GeometryModel,
    vel: &SplineSpace,
    layout: &FieldLayout,
    mass_weight: f64,
    stiff_weight: f64,
) -> SparseMatrix {
    let scalar = assemble_scalar_gram(geom, vel, mass_weight, stiff_weight);
    let mut b = CooBuilder::new(layout.velocity_total(), layout.velocity_total());
    b.push_matrix(0, 0, 1.0, &scalar);
    b.push_matrix(layout.n_u, layout.n_u, 1.0, &scalar);
    b.build()
}

/// Viscous + Nitsche velocity block, pressure coupling, and the Dirichlet
/// right-hand sides shared by the Stokes and Oseen forms. `viscosity`
/// multiplies the symmetric-gradient volume term and all Nitsche terms.
#[allow(clippy::type_complexity)]
fn viscous_pressure_parts(
    geom: &GeometryModel,
    vel: &SplineSpace,
    pres: &SplineSpace,
    layout: &FieldLayout,
    viscosity: f64,
    g_d: VectorBoundaryData,
) -> Result<(SparseMatrix, SparseMatrix, Vec<f64>, Vec<f64>, BTreeMap<usize, f64>), AssemblyError> {
    let n_v = layout.velocity_total();
    let n_p = layout.n_p;
    let mut a_vu = CooBuilder::new(n_v, n_v);
    let mut a_vp = CooBuilder::new(n_v, n_p);
    let mut rhs_v = vec![0.0; n_v];
    let mut rhs_q = vec![0.0; n_p];
    let mut betas = BTreeMap::new();
    let mut vbuf = BasisBuffer::default();
    let mut pbuf = BasisBuffer::default();

    for e in geom.active_elements() {
        let vdofs = vel.element_dofs(e);
        let pdofs = pres.element_dofs(e);
        let volume = geom.volume_quadrature(e);
        if volume.is_empty() {
            return Err(AssemblyError::MissingQuadrature { element: e });
        }
        for p in volume.iter() {
            vel.eval_basis(e, p.xe, &mut vbuf);
            pres.eval_basis(e, p.xe, &mut pbuf);
            for (i, &vi) in vdofs.iter().enumerate() {
                for di in 0..2 {
                    let row = layout.velocity(di, vi);
                    for (j, &vj) in vdofs.iter().enumerate() {
                        for dj in 0..2 {
                            let contr = sym_grad_contraction(vbuf.grad[i], di, vbuf.grad[j], dj);
                            a_vu.push(row, layout.velocity(dj, vj), p.weight * viscosity * contr);
                        }
                    }
                    // -p div(v): test v = phi_i e_di against trial pressure
                    for (k, &pk) in pdofs.iter().enumerate() {
                        a_vp.push(row, pk, -p.weight * pbuf.val[k] * vbuf.grad[i][di]);
                    }
                }
            }
        }

        let boundary = geom.boundary_quadrature(e);
        if boundary.is_empty() {
            continue;
        }
        let has_dirichlet = boundary
            .iter()
            .any(|p| geom.domain.tag(p.id) == BoundaryKind::Dirichlet);
        let beta = if has_dirichlet {
            let beta = nitsche_constant(geom, vel, e, GradientKind::SymmetricGradient)?;
            betas.insert(e, beta);
            beta
        } else {
            0.0
        };
        for p in boundary {
            if geom.domain.tag(p.id) != BoundaryKind::Dirichlet {
                continue;
            }
            vel.eval_basis(e, p.xe, &mut vbuf);
            pres.eval_basis(e, p.xe, &mut pbuf);
            let g = g_d(p.xp, p.id);
            let gn = g[0] * p.normal[0] + g[1] * p.normal[1];
            for (i, &vi) in vdofs.iter().enumerate() {
                let nsg_i = normal_sym_grad(vbuf.grad[i], 0, p.normal);
                // normal_sym_grad depends on the direction; compute per di.
                let _ = nsg_i;
                for di in 0..2 {
                    let row = layout.velocity(di, vi);
                    let nsg_i = normal_sym_grad(vbuf.grad[i], di, p.normal);
                    // rhs: viscosity * (-g . (n . sym_grad v) + beta v . g)
                    let g_dot_nsg = g[0] * nsg_i[0] + g[1] * nsg_i[1];
                    rhs_v[row] +=
                        p.weight * viscosity * (-g_dot_nsg + beta * vbuf.val[i] * g[di]);
                    for (j, &vj) in vdofs.iter().enumerate() {
                        for dj in 0..2 {
                            let nsg_j = normal_sym_grad(vbuf.grad[j], dj, p.normal);
                            // -u.(n.sym_grad v) - v.(n.sym_grad u) + beta v.u
                            let mut v = -vbuf.val[j] * nsg_i[dj] - vbuf.val[i] * nsg_j[di];
                            if di == dj {
                                v += beta * vbuf.val[i] * vbuf.val[j];
                            }
                            a_vu.push(row, layout.velocity(dj, vj), p.weight * viscosity * v);
                        }
                    }
                    // + p n . v on the Dirichlet boundary
                    for (k, &pk) in pdofs.iter().enumerate() {
                        a_vp.push(row, pk, p.weight * pbuf.val[k] * p.normal[di] * vbuf.val[i]);
                    }
                }
            }
            for (k, &pk) in pdofs.iter().enumerate() {
                rhs_q[pk] += p.weight * pbuf.val[k] * gn;
            }
        }
    }
    Ok((a_vu.build(), a_vp.build(), rhs_v, rhs_q, betas))
}

/// Skew-symmetric convection volume matrix
/// 1/2 (v (w.grad) u - u (w.grad) v).
pub fn convection_volume_matrix(
    geom: &GeometryModel,
    vel: &SplineSpace,
    layout: &FieldLayout,
    w: &ConvectiveField,
) -> SparseMatrix {
    let n_v = layout.velocity_total();
    let mut b = CooBuilder::new(n_v, n_v);
    let mut vbuf = BasisBuffer::default();
    let mut wbuf = BasisBuffer::default();
    for e in geom.active_elements() {
        let vdofs = vel.element_dofs(e);
        for p in geom.volume_quadrature(e).iter() {
            let wv = w.eval(vel, layout, e, p.xe, p.xp, &mut wbuf);
            vel.eval_basis(e, p.xe, &mut vbuf);
            for (i, &vi) in vdofs.iter().enumerate() {
                let conv_i = wv[0] * vbuf.grad[i][0] + wv[1] * vbuf.grad[i][1];
                for (j, &vj) in vdofs.iter().enumerate() {
                    let conv_j = wv[0] * vbuf.grad[j][0] + wv[1] * vbuf.grad[j][1];
                    let v = 0.5 * (vbuf.val[i] * conv_j - vbuf.val[j] * conv_i);
                    for d in 0..2 {
                        b.push(layout.velocity(d, vi), layout.velocity(d, vj), p.weight * v);
                    }
                }
            }
        }
    }
    b.build()
}

/// Outflow boundary mass 1/2 max(0, n.w) (v . u) over the Neumann
/// boundary; symmetric positive semidefinite.
pub fn outflow_boundary_matrix(
    geom: &GeometryModel,
    vel: &SplineSpace,
    layout: &FieldLayout,
    w: &ConvectiveField,
) -> SparseMatrix {
    let n_v = layout.velocity_total();
    let mut b = CooBuilder::new(n_v, n_v);
    let mut vbuf = BasisBuffer::default();
    let mut wbuf = BasisBuffer::default();
    for e in geom.active_elements() {
        let vdofs = vel.element_dofs(e);
        for p in geom.boundary_quadrature(e) {
            if geom.domain.tag(p.id) != BoundaryKind::Neumann {
                continue;
            }
            let wv = w.eval(vel, layout, e, p.xe, p.xp, &mut wbuf);
            let nw = (p.normal[0] * wv[0] + p.normal[1] * wv[1]).max(0.0);
            if nw == 0.0 {
                continue;
            }
            vel.eval_basis(e, p.xe, &mut vbuf);
            for (i, &vi) in vdofs.iter().enumerate() {
                for (j, &vj) in vdofs.iter().enumerate() {
                    let v = 0.5 * nw * vbuf.val[i] * vbuf.val[j];
                    for d in 0..2 {
                        b.push(layout.velocity(d, vi), layout.velocity(d, vj), p.weight * v);
                    }
                }
            }
        }
    }
    b.build()
}

/// Dirichlet-boundary convective stabilization with the prescribed data:
/// matrix 1/2 max(0, n.g) (v.u) and right-hand side -1/2 min(0, n.g) (v.g).
fn dirichlet_inflow_terms(
    geom: &GeometryModel,
    vel: &SplineSpace,
    layout: &FieldLayout,
    g_d: VectorBoundaryData,
) -> (SparseMatrix, Vec<f64>) {
    let n_v = layout.velocity_total();
    let mut b = CooBuilder::new(n_v, n_v);
    let mut rhs = vec![0.0; n_v];
    let mut vbuf = BasisBuffer::default();
    for e in geom.active_elements() {
        let vdofs = vel.element_dofs(e);
        for p in geom.boundary_quadrature(e) {
            if geom.domain.tag(p.id) != BoundaryKind::Dirichlet {
                continue;
            }
            let g = g_d(p.xp, p.id);
            let ng = p.normal[0] * g[0] + p.normal[1] * g[1];
            if ng == 0.0 {
                continue;
            }
            vel.eval_basis(e, p.xe, &mut vbuf);
            for (i, &vi) in vdofs.iter().enumerate() {
                for d in 0..2 {
                    rhs[layout.velocity(d, vi)] -= p.weight * 0.5 * ng.min(0.0) * vbuf.val[i] * g[d];
                }
                if ng > 0.0 {
                    for (j, &vj) in vdofs.iter().enumerate() {
                        let v = 0.5 * ng * vbuf.val[i] * vbuf.val[j];
                        for d in 0..2 {
                            b.push(layout.velocity(d, vi), layout.velocity(d, vj), p.weight * v);
                        }
                    }
                }
            }
        }
    }
    (b.build(), rhs)
}

fn full_system(
    layout: &FieldLayout,
    a_vu: SparseMatrix,
    a_vp: SparseMatrix,
    rhs_v: Vec<f64>,
    rhs_q: Vec<f64>,
) -> (SparseMatrix, Vec<f64>, MixedBlocks) {
    let a_qu = a_vp.transpose();
    let n_v = layout.velocity_total();
    let total = layout.total();
    let mut full = CooBuilder::new(total, total);
    full.push_matrix(0, 0, 1.0, &a_vu);
    full.push_matrix(0, n_v, 1.0, &a_vp);
    full.push_matrix(n_v, 0, 1.0, &a_qu);
    let mut rhs = rhs_v;
    rhs.extend(rhs_q);
    (
        full.build(),
        rhs,
        MixedBlocks { a_vu, a_vp, a_qu },
    )
}

/// Stokes system with Nitsche Dirichlet conditions; symmetric indefinite,
/// empty pressure-pressure block. `viscosity` defaults to 1 in the model
/// problem; the Oseen operator reuses the assembly with viscosity 2 nu.
pub fn assemble_stokes(
    geom: &GeometryModel,
    vel: &SplineSpace,
    pres: &SplineSpace,
    layout: &FieldLayout,
    g_d: VectorBoundaryData,
    viscosity: f64,
) -> Result<AssembledSystem, AssemblyError> {
    let (a_vu, a_vp, rhs_v, rhs_q, betas) = viscous_pressure_parts(geom, vel, pres, layout, viscosity, g_d)?;
    let (matrix, rhs, blocks) = full_system(layout, a_vu, a_vp, rhs_v, rhs_q);
    Ok(AssembledSystem {
        matrix,
        rhs,
        layout: Some(*layout),
        blocks: Some(blocks),
        betas,
        meta: SystemMeta {
            problem: "stokes".into(),
            theta: geom.grid.theta,
            eta: geom.smallest_volume_fraction(),
            params: vec![("viscosity".into(), viscosity)],
        },
    })
}

/// Oseen operator: skew-symmetric convection with convective field w,
/// directional do-nothing outflow, viscous/Nitsche terms with viscosity
/// 2 nu, and the Stokes pressure coupling.
pub fn assemble_oseen(
    geom: &GeometryModel,
    vel: &SplineSpace,
    pres: &SplineSpace,
    layout: &FieldLayout,
    w: &ConvectiveField,
    nu: f64,
    g_d: VectorBoundaryData,
) -> Result<AssembledSystem, AssemblyError> {
    let (visc, a_vp, mut rhs_v, rhs_q, betas) =
        viscous_pressure_parts(geom, vel, pres, layout, 2.0 * nu, g_d)?;
    let conv = convection_volume_matrix(geom, vel, layout, w);
    let outflow = outflow_boundary_matrix(geom, vel, layout, w);
    let (inflow, inflow_rhs) = dirichlet_inflow_terms(geom, vel, layout, g_d);
    let n_v = layout.velocity_total();
    let mut a_vu = CooBuilder::new(n_v, n_v);
    a_vu.push_matrix(0, 0, 1.0, &visc);
    a_vu.push_matrix(0, 0, 1.0, &conv);
    a_vu.push_matrix(0, 0, 1.0, &outflow);
    a_vu.push_matrix(0, 0, 1.0, &inflow);
    for (r, v) in inflow_rhs.into_iter().enumerate() {
        rhs_v[r] += v;
    }
    let (matrix, rhs, blocks) = full_system(layout, a_vu.build(), a_vp, rhs_v, rhs_q);
    Ok(AssembledSystem {
        matrix,
        rhs,
        layout: Some(*layout),
        blocks: Some(blocks),
        betas,
        meta: SystemMeta {
            problem: "navier-stokes".into(),
            theta: geom.grid.theta,
            eta: geom.smallest_volume_fraction(),
            params: vec![("nu".into(), nu)],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryId, DomainSpec, EmbeddingConfig};
    use crate::spline::taylor_hood;
    use rand::{Rng, SeedableRng};

    fn stokes_domain() -> DomainSpec {
        DomainSpec::square(0.5)
            .with_exclusion([0.0, 0.0], 0.25)
            .tagged(BoundaryId::Right, BoundaryKind::Neumann)
    }

    fn poiseuille(x: [f64; 2], id: BoundaryId) -> [f64; 2] {
        if id == BoundaryId::Left {
            [1.0 - 4.0 * x[1] * x[1], 0.0]
        } else {
            [0.0, 0.0]
        }
    }

    fn setup(theta: f64, h: f64) -> (GeometryModel, SplineSpace, SplineSpace, FieldLayout) {
        let geom = GeometryModel::build(&stokes_domain(), &EmbeddingConfig::for_degree(theta, h, 2)).unwrap();
        let (vel, pres, layout) = taylor_hood(&geom.grid, &geom.classes).unwrap();
        (geom, vel, pres, layout)
    }

    #[test]
    fn stokes_is_symmetric_with_empty_pressure_block() {
        let (geom, vel, pres, layout) = setup(0.3, 1.0 / 8.0);
        let sys = assemble_stokes(&geom, &vel, &pres, &layout, &poiseuille, 1.0).unwrap();
        let at = sys.matrix.transpose();
        let asym = sys
            .matrix
            .iter()
            .map(|(r, c, v)| (v - at.get(r, c)).abs())
            .fold(0.0f64, f64::max);
        assert!(asym < 1e-12 * sys.matrix.max_abs());
        let n_v = layout.velocity_total();
        for (r, c, _) in sys.matrix.iter() {
            assert!(!(r >= n_v && c >= n_v), "pressure-pressure entry at ({r},{c})");
        }
        let blocks = sys.blocks.as_ref().unwrap();
        assert_eq!(blocks.a_qu, blocks.a_vp.transpose());
        assert!(!sys.has_empty_row_or_col());
    }

    #[test]
    fn divergence_rows_vanish_for_constant_field_on_fitted_grid() {
        // No exclusion, all-Dirichlet boundary, u = constant interpolant.
        let domain = DomainSpec::square(0.5);
        let geom = GeometryModel::build(&domain, &EmbeddingConfig::for_degree(0.0, 0.25, 2)).unwrap();
        let (vel, pres, layout) = taylor_hood(&geom.grid, &geom.classes).unwrap();
        let c = [0.7, -0.3];
        let g = move |_x: [f64; 2], _id: BoundaryId| c;
        let sys = assemble_stokes(&geom, &vel, &pres, &layout, &g, 1.0).unwrap();
        let mut x_u = vec![0.0; layout.velocity_total()];
        for d in 0..2 {
            for a in 0..layout.n_u {
                x_u[layout.velocity(d, a)] = c[d];
            }
        }
        let blocks = sys.blocks.as_ref().unwrap();
        let residual = blocks.a_qu.matvec(&x_u);
        for (k, r) in residual.iter().enumerate() {
            let b = sys.rhs[layout.pressure(k)];
            assert!((r - b).abs() < 1e-10, "pressure row {k}: {r} vs {b}");
        }
    }

    #[test]
    fn oseen_convection_volume_part_is_skew() {
        let (geom, vel, _pres, layout) = setup(25f64.to_radians(), 1.0 / 8.0);
        let w_fn = |x: [f64; 2]| [x[1] + 0.5, x[0] * x[0]];
        let conv = convection_volume_matrix(&geom, &vel, &layout, &ConvectiveField::Analytic(&w_fn));
        let ct = conv.transpose();
        let max_sym = conv
            .iter()
            .map(|(r, c, v)| (v + ct.get(r, c)).abs())
            .fold(0.0f64, f64::max);
        assert!(max_sym < 1e-12 * conv.max_abs());
    }

    #[test]
    fn oseen_with_zero_convection_is_scaled_stokes_plus_inflow_mass() {
        let (geom, vel, pres, layout) = setup(0.2, 1.0 / 8.0);
        let nu = 1e-2;
        let oseen = assemble_oseen(
            &geom,
            &vel,
            &pres,
            &layout,
            &ConvectiveField::Constant([0.0, 0.0]),
            nu,
            &poiseuille,
        )
        .unwrap();
        let stokes = assemble_stokes(&geom, &vel, &pres, &layout, &poiseuille, 2.0 * nu).unwrap();
        let diff_vu = {
            let a = oseen.blocks.as_ref().unwrap().a_vu.to_dense();
            let b = stokes.blocks.as_ref().unwrap().a_vu.to_dense();
            a - b
        };
        // the remainder is the Dirichlet inflow mass: symmetric PSD and
        // supported only on Dirichlet-adjacent functions
        let nv = layout.velocity_total();
        let sym_err = (&diff_vu - &diff_vu.transpose()).abs().max();
        assert!(sym_err < 1e-12 * diff_vu.abs().max().max(1.0));
        let eig = nalgebra::SymmetricEigen::new(diff_vu.clone());
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
        // pressure blocks identical
        let dp = (oseen.blocks.as_ref().unwrap().a_vp.to_dense()
            - stokes.blocks.as_ref().unwrap().a_vp.to_dense())
        .abs()
        .max();
        assert!(dp < 1e-13);
        // and it matches a direct quadrature of 1/2 max(0, n.g)(v.u)
        let mut oracle = nalgebra::DMatrix::<f64>::zeros(nv, nv);
        let mut vbuf = BasisBuffer::default();
        for e in geom.active_elements() {
            let vdofs = vel.element_dofs(e);
            for p in geom.boundary_quadrature(e) {
                if geom.domain.tag(p.id) != BoundaryKind::Dirichlet {
                    continue;
                }
                let g = poiseuille(p.xp, p.id);
                let ng = (p.normal[0] * g[0] + p.normal[1] * g[1]).max(0.0);
                if ng == 0.0 {
                    continue;
                }
                vel.eval_basis(e, p.xe, &mut vbuf);
                for (i, &vi) in vdofs.iter().enumerate() {
                    for (j, &vj) in vdofs.iter().enumerate() {
                        for d in 0..2 {
                            oracle[(layout.velocity(d, vi), layout.velocity(d, vj))] +=
                                p.weight * 0.5 * ng * vbuf.val[i] * vbuf.val[j];
                        }
                    }
                }
            }
        }
        assert!((diff_vu - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn outflow_matrix_is_positive_semidefinite_on_boundary_functions() {
        let (geom, vel, _pres, layout) = setup(0.15, 1.0 / 8.0);
        let w = ConvectiveField::Constant([1.0, 0.25]);
        let m = outflow_boundary_matrix(&geom, &vel, &layout, &w);
        // restrict random vectors to Neumann-adjacent velocity functions
        let mut neumann_dofs = Vec::new();
        for e in geom.active_elements() {
            if geom
                .boundary_quadrature(e)
                .iter()
                .any(|p| geom.domain.tag(p.id) == BoundaryKind::Neumann)
            {
                for v in vel.element_dofs(e) {
                    for d in 0..2 {
                        neumann_dofs.push(layout.velocity(d, v));
                    }
                }
            }
        }
        assert!(!neumann_dofs.is_empty());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut y = vec![0.0; layout.velocity_total()];
            for &d in &neumann_dofs {
                y[d] = rng.gen_range(-1.0..1.0);
            }
            let quad: f64 = m.matvec(&y).iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!(quad >= -1e-12);
        }
    }

    #[test]
    fn velocity_mass_is_spd_and_tracks_trimmed_support() {
        let (geom, vel, _pres, layout) = setup(25f64.to_radians(), 1.0 / 8.0);
        let m = assemble_velocity_mass(&geom, &vel, &layout);
        let eig = nalgebra::SymmetricEigen::new(m.to_dense());
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        // functions supported only on slivers have near-zero mass; the
        // spectrum stays nonnegative up to rounding
        assert!(min > -1e-12 * max, "smallest mass eigenvalue {min}");
        // strict positive definiteness on a fitted instance
        let fitted = GeometryModel::build(
            &DomainSpec::square(0.5),
            &EmbeddingConfig::for_degree(0.0, 0.25, 2),
        )
        .unwrap();
        let (fv, _fp, flayout) = taylor_hood(&fitted.grid, &fitted.classes).unwrap();
        let fm = assemble_velocity_mass(&fitted, &fv, &flayout);
        let feig = nalgebra::SymmetricEigen::new(fm.to_dense());
        assert!(feig.eigenvalues.iter().all(|&l| l > 0.0));
        // row sums on the fitted grid equal the basis integral (partition
        // of unity: sum_j int phi_i phi_j = int phi_i)
        let mut buf = BasisBuffer::default();
        let probe = fv.element_dofs(fitted.grid.element_index(1, 1))[4];
        let row = flayout.velocity(0, probe);
        let row_sum: f64 = fm.row(row).map(|(_, val)| val).sum();
        let mut integral = 0.0;
        for e in fitted.active_elements() {
            let dofs = fv.element_dofs(e);
            if let Some(k) = dofs.iter().position(|&d| d == probe) {
                for p in fitted.volume_quadrature(e).iter() {
                    fv.eval_basis(e, p.xe, &mut buf);
                    integral += p.weight * buf.val[k];
                }
            }
        }
        assert!((row_sum - integral).abs() < 1e-12);
    }
}
