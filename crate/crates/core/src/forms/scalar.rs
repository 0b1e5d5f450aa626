//! Scalar model problems: Poisson with the symmetric or nonsymmetric
//! Nitsche method, and SUPG-stabilized convection-diffusion.

use super::nitsche::{nitsche_constant, GradientKind};
use super::{AssembledSystem, AssemblyError, SystemMeta};
use crate::geometry::{BoundaryKind, GeometryModel};
use crate::sparse::CooBuilder;
use crate::spline::{BasisBuffer, SplineSpace};
use std::collections::BTreeMap;

/// Boundary data evaluated at a physical point of a tagged boundary piece.
pub type ScalarBoundaryData<'a> = &'a dyn Fn([f64; 2], crate::geometry::BoundaryId) -> f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NitscheVariant {
    /// Consistency + symmetrizing flux, eigenvalue-based penalty beta_i.
    Symmetric,
    /// Sign-flipped flux, plain 1/h penalty.
    Nonsymmetric,
}

#[derive(Debug, Clone, Copy)]
pub struct PoissonOptions {
    pub variant: NitscheVariant,
    /// Assemble the +-u dn v flux pair on the Dirichlet boundary. Disabling
    /// them isolates the penalty + volume part (they cancel in y^T A y).
    pub include_dirichlet_flux: bool,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions {
            variant: NitscheVariant::Symmetric,
            include_dirichlet_flux: true,
        }
    }
}

/// Poisson problem: volume diffusion, Nitsche Dirichlet terms, Neumann
/// data on the remaining boundary.
pub fn assemble_poisson(
    geom: &GeometryModel,
    space: &SplineSpace,
    f: &dyn Fn([f64; 2]) -> f64,
    g_d: ScalarBoundaryData,
    g_n: ScalarBoundaryData,
    options: PoissonOptions,
) -> Result<AssembledSystem, AssemblyError> {
    let n = space.n_active();
    let mut a = CooBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    let mut betas = BTreeMap::new();
    let mut buf = BasisBuffer::default();
    let flux_sign = match options.variant {
        NitscheVariant::Symmetric => -1.0,
        NitscheVariant::Nonsymmetric => 1.0,
    };

    for e in geom.active_elements() {
        let dofs = space.element_dofs(e);
        let volume = geom.volume_quadrature(e);
        if volume.is_empty() {
            return Err(AssemblyError::MissingQuadrature { element: e });
        }
        for p in volume.iter() {
            space.eval_basis(e, p.xe, &mut buf);
            for (i, &gi) in dofs.iter().enumerate() {
                rhs[gi] += p.weight * buf.val[i] * f(p.xp);
                for (j, &gj) in dofs.iter().enumerate() {
                    let gdot = buf.grad[i][0] * buf.grad[j][0] + buf.grad[i][1] * buf.grad[j][1];
                    a.push(gi, gj, p.weight * gdot);
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
        let penalty = if has_dirichlet {
            match options.variant {
                NitscheVariant::Symmetric => {
                    let beta = nitsche_constant(geom, space, e, GradientKind::Scalar)?;
                    betas.insert(e, beta);
                    beta
                }
                NitscheVariant::Nonsymmetric => 1.0 / geom.grid.h,
            }
        } else {
            0.0
        };
        for p in boundary {
            space.eval_basis(e, p.xe, &mut buf);
            match geom.domain.tag(p.id) {
                BoundaryKind::Neumann => {
                    for (i, &gi) in dofs.iter().enumerate() {
                        rhs[gi] += p.weight * buf.val[i] * g_n(p.xp, p.id);
                    }
                }
                BoundaryKind::Dirichlet => {
                    let gd = g_d(p.xp, p.id);
                    for (i, &gi) in dofs.iter().enumerate() {
                        let dni = buf.grad[i][0] * p.normal[0] + buf.grad[i][1] * p.normal[1];
                        if options.include_dirichlet_flux {
                            rhs[gi] += p.weight * flux_sign * gd * dni;
                        }
                        rhs[gi] += p.weight * penalty * buf.val[i] * gd;
                        for (j, &gj) in dofs.iter().enumerate() {
                            let dnj = buf.grad[j][0] * p.normal[0] + buf.grad[j][1] * p.normal[1];
                            let mut v = penalty * buf.val[i] * buf.val[j];
                            if options.include_dirichlet_flux {
                                // flux_sign * u dn(v) - v dn(u)
                                v += flux_sign * buf.val[j] * dni - buf.val[i] * dnj;
                            }
                            a.push(gi, gj, p.weight * v);
                        }
                    }
                }
            }
        }
    }

    Ok(AssembledSystem {
        matrix: a.build(),
        rhs,
        layout: None,
        blocks: None,
        betas,
        meta: SystemMeta {
            problem: match options.variant {
                NitscheVariant::Symmetric => "poisson-sym".into(),
                NitscheVariant::Nonsymmetric => "poisson-nonsym".into(),
            },
            theta: geom.grid.theta,
            eta: geom.smallest_volume_fraction(),
            params: Vec::new(),
        },
    })
}

/// Streamline-upwind stabilized convection-diffusion with Nitsche Dirichlet
/// conditions on the whole boundary. The full residual, including second
/// derivatives of the trial functions, enters the stabilization term.
pub fn assemble_convection_diffusion_supg(
    geom: &GeometryModel,
    space: &SplineSpace,
    w: [f64; 2],
    epsilon: f64,
    g_d: ScalarBoundaryData,
) -> Result<AssembledSystem, AssemblyError> {
    assemble_convection_diffusion_supg_with_tau(geom, space, w, epsilon, g_d, None)
}

/// Same operator with the stabilization parameter overridden (the default
/// is the global grid-aligned value).
pub fn assemble_convection_diffusion_supg_with_tau(
    geom: &GeometryModel,
    space: &SplineSpace,
    w: [f64; 2],
    epsilon: f64,
    g_d: ScalarBoundaryData,
    tau_override: Option<f64>,
) -> Result<AssembledSystem, AssemblyError> {
    let w_norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
    if w_norm == 0.0 {
        return Err(AssemblyError::ZeroConvectiveVelocity);
    }
    // tau = h* / (2 |w|) with h* the maximal element length along w; on a
    // tensor grid h* = h |w| / max_i |w . e_i| over the grid directions.
    let axes = geom.grid.axis_directions();
    let wmax = axes
        .iter()
        .map(|e| (w[0] * e[0] + w[1] * e[1]).abs())
        .fold(0.0f64, f64::max);
    let tau = tau_override.unwrap_or(geom.grid.h / (2.0 * wmax));

    let n = space.n_active();
    let mut a = CooBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    let mut betas = BTreeMap::new();
    let mut buf = BasisBuffer::default();

    for e in geom.active_elements() {
        let dofs = space.element_dofs(e);
        let volume = geom.volume_quadrature(e);
        if volume.is_empty() {
            return Err(AssemblyError::MissingQuadrature { element: e });
        }
        for p in volume.iter() {
            space.eval_basis(e, p.xe, &mut buf);
            for (i, &gi) in dofs.iter().enumerate() {
                let conv_i = w[0] * buf.grad[i][0] + w[1] * buf.grad[i][1];
                for (j, &gj) in dofs.iter().enumerate() {
                    let conv_j = w[0] * buf.grad[j][0] + w[1] * buf.grad[j][1];
                    let gdot = buf.grad[i][0] * buf.grad[j][0] + buf.grad[i][1] * buf.grad[j][1];
                    // -u w.grad(v) + eps grad(v).grad(u)
                    //   + tau (w.grad v)(w.grad u - eps lap u)
                    let v = -buf.val[j] * conv_i
                        + epsilon * gdot
                        + tau * conv_i * (conv_j - epsilon * buf.lapl[j]);
                    a.push(gi, gj, p.weight * v);
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
            let beta = nitsche_constant(geom, space, e, GradientKind::Scalar)?;
            betas.insert(e, beta);
            beta
        } else {
            0.0
        };
        for p in boundary {
            if geom.domain.tag(p.id) != BoundaryKind::Dirichlet {
                continue;
            }
            space.eval_basis(e, p.xe, &mut buf);
            let nw = p.normal[0] * w[0] + p.normal[1] * w[1];
            let gd = g_d(p.xp, p.id);
            for (i, &gi) in dofs.iter().enumerate() {
                let dni = buf.grad[i][0] * p.normal[0] + buf.grad[i][1] * p.normal[1];
                rhs[gi] += p.weight
                    * (-nw.min(0.0) * buf.val[i] * gd - epsilon * gd * dni
                        + epsilon * beta * buf.val[i] * gd);
                for (j, &gj) in dofs.iter().enumerate() {
                    let dnj = buf.grad[j][0] * p.normal[0] + buf.grad[j][1] * p.normal[1];
                    let v = nw.max(0.0) * buf.val[i] * buf.val[j]
                        - epsilon * (buf.val[i] * dnj + buf.val[j] * dni)
                        + epsilon * beta * buf.val[i] * buf.val[j];
                    a.push(gi, gj, p.weight * v);
                }
            }
        }
    }

    Ok(AssembledSystem {
        matrix: a.build(),
        rhs,
        layout: None,
        blocks: None,
        betas,
        meta: SystemMeta {
            problem: "convdiff".into(),
            theta: geom.grid.theta,
            eta: geom.smallest_volume_fraction(),
            params: vec![("epsilon".into(), epsilon), ("tau".into(), tau)],
        },
    })
}
