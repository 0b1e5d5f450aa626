//! Tensor-product B-spline spaces on the embedding grid.
//!
//! Univariate spaces are open (clamped) knot vectors on the grid
//! breakpoints with interior multiplicity p - alpha, so one code path
//! covers every degree/regularity combination. The tensor space carries the
//! element-to-function connectivity and, after restriction to the physical
//! domain, a bijective renumbering of the active functions (lexicographic
//! by original tensor index).

use crate::geometry::{ElementClass, Grid};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("invalid regularity: alpha = {alpha} requires alpha <= p - 1 = {}", p - 1)]
    InvalidRegularity { p: usize, alpha: usize },
    #[error("degree must be between 1 and {MAX_DEGREE}")]
    InvalidDegree,
    #[error("need at least one element")]
    NoElements,
}

pub const MAX_DEGREE: usize = 7;

/// Univariate B-spline basis of degree p and regularity alpha on a strictly
/// increasing breakpoint sequence.
#[derive(Debug, Clone)]
pub struct UnivariateSpace {
    pub degree: usize,
    pub regularity: usize,
    knots: Vec<f64>,
    n_elems: usize,
    n_funcs: usize,
    mult: usize,
}

pub fn univariate_space(p: usize, alpha: usize, breaks: &[f64]) -> Result<UnivariateSpace, SplineError> {
    if p == 0 || p > MAX_DEGREE {
        return Err(SplineError::InvalidDegree);
    }
    if alpha >= p {
        return Err(SplineError::InvalidRegularity { p, alpha });
    }
    if breaks.len() < 2 {
        return Err(SplineError::NoElements);
    }
    let mult = p - alpha;
    let n_elems = breaks.len() - 1;
    let mut knots = Vec::with_capacity(2 * (p + 1) + (n_elems - 1) * mult);
    knots.extend(std::iter::repeat(breaks[0]).take(p + 1));
    for &b in &breaks[1..n_elems] {
        knots.extend(std::iter::repeat(b).take(mult));
    }
    knots.extend(std::iter::repeat(breaks[n_elems]).take(p + 1));
    let n_funcs = knots.len() - p - 1;
    debug_assert_eq!(n_funcs, n_elems * mult + alpha + 1);
    Ok(UnivariateSpace {
        degree: p,
        regularity: alpha,
        knots,
        n_elems,
        n_funcs,
        mult,
    })
}

/// Values and first two derivatives of the p+1 functions supported on one
/// element, evaluated at a point of that element.
#[derive(Debug, Clone, Copy)]
pub struct UniValues {
    pub count: usize,
    pub val: [f64; MAX_DEGREE + 1],
    pub d1: [f64; MAX_DEGREE + 1],
    pub d2: [f64; MAX_DEGREE + 1],
}

impl UnivariateSpace {
    pub fn n_funcs(&self) -> usize {
        self.n_funcs
    }

    pub fn n_elems(&self) -> usize {
        self.n_elems
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Global index of the first function supported on an element; the
    /// element supports indices first..=first+p.
    pub fn first_func(&self, elem: usize) -> usize {
        elem * self.mult
    }

    fn span(&self, elem: usize) -> usize {
        self.degree + elem * self.mult
    }

    /// Cox-de Boor triangle with derivatives (the standard knot-based
    /// recurrence), evaluated on the knot span of `elem`.
    pub fn eval(&self, elem: usize, x: f64) -> UniValues {
        let p = self.degree;
        let span = self.span(elem);
        let knots = &self.knots;
        let mut ndu = [[0.0f64; MAX_DEGREE + 1]; MAX_DEGREE + 1];
        let mut left = [0.0f64; MAX_DEGREE + 1];
        let mut right = [0.0f64; MAX_DEGREE + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut out = UniValues {
            count: p + 1,
            val: [0.0; MAX_DEGREE + 1],
            d1: [0.0; MAX_DEGREE + 1],
            d2: [0.0; MAX_DEGREE + 1],
        };
        for j in 0..=p {
            out.val[j] = ndu[j][p];
        }
        // Derivatives from the lower triangle of knot differences.
        let nders = 2.min(p);
        let mut a = [[0.0f64; MAX_DEGREE + 1]; 2];
        let mut ders = [[0.0f64; MAX_DEGREE + 1]; 3];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=nders {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nders {
            for r in 0..=p {
                ders[k][r] *= factor;
            }
            factor *= (p - k) as f64;
        }
        out.d1[..=p].copy_from_slice(&ders[1][..=p]);
        out.d2[..=p].copy_from_slice(&ders[2][..=p]);
        out
    }
}

/// Basis values at a point: value, physical gradient, physical Laplacian.
#[derive(Debug, Clone, Default)]
pub struct BasisBuffer {
    pub val: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub lapl: Vec<f64>,
}

/// Tensor-product space over the grid, with an active-function map after
/// restriction to the physical domain.
#[derive(Debug, Clone)]
pub struct SplineSpace {
    pub x: UnivariateSpace,
    pub y: UnivariateSpace,
    n_elems_x: usize,
    theta: f64,
    /// full tensor index -> active index (None when removed)
    active_of_full: Vec<Option<u32>>,
    /// active index -> full tensor index
    full_of_active: Vec<u32>,
}

pub fn tensor_space(grid: &Grid, p: usize, alpha: usize) -> Result<SplineSpace, SplineError> {
    let x = univariate_space(p, alpha, &grid.breakpoints(0))?;
    let y = univariate_space(p, alpha, &grid.breakpoints(1))?;
    let n_full = x.n_funcs() * y.n_funcs();
    Ok(SplineSpace {
        x,
        y,
        n_elems_x: grid.n_x(),
        theta: grid.theta,
        active_of_full: (0..n_full).map(|k| Some(k as u32)).collect(),
        full_of_active: (0..n_full as u32).collect(),
    })
}

impl SplineSpace {
    pub fn degree(&self) -> usize {
        self.x.degree
    }

    pub fn n_full(&self) -> usize {
        self.x.n_funcs() * self.y.n_funcs()
    }

    pub fn n_active(&self) -> usize {
        self.full_of_active.len()
    }

    pub fn full_index(&self, active: usize) -> usize {
        self.full_of_active[active] as usize
    }

    pub fn active_index(&self, full: usize) -> Option<usize> {
        self.active_of_full[full].map(|k| k as usize)
    }

    fn element_univariate(&self, e: usize) -> (usize, usize) {
        (e % self.n_elems_x, e / self.n_elems_x)
    }

    /// Full tensor indices of the (p+1)^2 functions supported on an
    /// element, lexicographic (x fastest).
    pub fn element_support_full(&self, e: usize) -> Vec<usize> {
        let (ex, ey) = self.element_univariate(e);
        let fx = self.x.first_func(ex);
        let fy = self.y.first_func(ey);
        let nx = self.x.n_funcs();
        let mut out = Vec::with_capacity((self.x.degree + 1) * (self.y.degree + 1));
        for jy in 0..=self.y.degree {
            for jx in 0..=self.x.degree {
                out.push((fy + jy) * nx + (fx + jx));
            }
        }
        out
    }

    /// Active (sorted) indices supported on an element. On elements that
    /// survive the restriction all local functions are active.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        self.element_support_full(e)
            .into_iter()
            .filter_map(|f| self.active_index(f))
            .collect()
    }

    /// Evaluates values, physical-frame gradients and Laplacians of the
    /// element's functions at an embedding-frame point, in the same order
    /// as [`element_support_full`].
    pub fn eval_basis(&self, e: usize, xe: [f64; 2], buf: &mut BasisBuffer) {
        let (ex, ey) = self.element_univariate(e);
        let ux = self.x.eval(ex, xe[0]);
        let uy = self.y.eval(ey, xe[1]);
        let n = ux.count * uy.count;
        buf.val.resize(n, 0.0);
        buf.grad.resize(n, [0.0; 2]);
        buf.lapl.resize(n, 0.0);
        let (s, c) = self.theta.sin_cos();
        let mut k = 0;
        for jy in 0..uy.count {
            for jx in 0..ux.count {
                let v = ux.val[jx] * uy.val[jy];
                let de = [ux.d1[jx] * uy.val[jy], ux.val[jx] * uy.d1[jy]];
                // gradient in the physical frame: R * grad_embedding
                let gp = [c * de[0] - s * de[1], s * de[0] + c * de[1]];
                // the Laplacian is rotation invariant
                let lap = ux.d2[jx] * uy.val[jy] + ux.val[jx] * uy.d2[jy];
                buf.val[k] = v;
                buf.grad[k] = gp;
                buf.lapl[k] = lap;
                k += 1;
            }
        }
    }

    /// Restriction to functions supported on at least one Inside or Trimmed
    /// element; active functions are renumbered lexicographically.
    pub fn restrict_to_domain(&self, classes: &[ElementClass]) -> SplineSpace {
        let n_full = self.n_full();
        let mut supported = vec![false; n_full];
        for (e, class) in classes.iter().enumerate() {
            if *class == ElementClass::Outside {
                continue;
            }
            for f in self.element_support_full(e) {
                supported[f] = true;
            }
        }
        let mut active_of_full = vec![None; n_full];
        let mut full_of_active = Vec::new();
        for (f, &sup) in supported.iter().enumerate() {
            if sup {
                active_of_full[f] = Some(full_of_active.len() as u32);
                full_of_active.push(f as u32);
            }
        }
        SplineSpace {
            x: self.x.clone(),
            y: self.y.clone(),
            n_elems_x: self.n_elems_x,
            theta: self.theta,
            active_of_full,
            full_of_active,
        }
    }

    /// Evaluates a scalar field given by active-index coefficients;
    /// returns (value, physical gradient).
    pub fn eval_field(
        &self,
        e: usize,
        xe: [f64; 2],
        coeffs: &[f64],
        buf: &mut BasisBuffer,
    ) -> (f64, [f64; 2]) {
        self.eval_basis(e, xe, buf);
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for (k, f) in self.element_support_full(e).into_iter().enumerate() {
            if let Some(a) = self.active_index(f) {
                let c = coeffs[a];
                value += c * buf.val[k];
                grad[0] += c * buf.grad[k][0];
                grad[1] += c * buf.grad[k][1];
            }
        }
        (value, grad)
    }
}

/// Index layout of a two-velocity-component + pressure system: velocity x
/// at offset 0, velocity y at n_u, pressure at 2 n_u.
#[derive(Debug, Clone, Copy)]
pub struct FieldLayout {
    pub n_u: usize,
    pub n_p: usize,
}

impl FieldLayout {
    pub fn velocity(&self, dir: usize, active: usize) -> usize {
        debug_assert!(dir < 2 && active < self.n_u);
        dir * self.n_u + active
    }

    pub fn pressure(&self, active: usize) -> usize {
        debug_assert!(active < self.n_p);
        2 * self.n_u + active
    }

    pub fn total(&self) -> usize {
        2 * self.n_u + self.n_p
    }

    pub fn velocity_total(&self) -> usize {
        2 * self.n_u
    }
}

/// Taylor-Hood pair: velocity components in the degree-2, C^0 space and
/// pressure in the degree-1, C^0 space, both restricted by the same
/// classification.
pub fn taylor_hood(
    grid: &Grid,
    classes: &[ElementClass],
) -> Result<(SplineSpace, SplineSpace, FieldLayout), SplineError> {
    let velocity = tensor_space(grid, 2, 0)?.restrict_to_domain(classes);
    let pressure = tensor_space(grid, 1, 0)?.restrict_to_domain(classes);
    let layout = FieldLayout {
        n_u: velocity.n_active(),
        n_p: pressure.n_active(),
    };
    Ok((velocity, pressure, layout))
}
