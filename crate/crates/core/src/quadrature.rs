//! Gauss-Legendre rules and their mappings onto intervals, boxes and
//! triangles.

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Computes the n-point rule by Newton iteration on the Legendre
    /// polynomial, exact for polynomials of degree 2n-1.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be at least 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Chebyshev initial guess, then Newton.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_eval(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Points and weights on the interval [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

/// Legendre polynomial value and derivative at x.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor rule over an axis-aligned box [x0,x1] x [y0,y1].
pub fn tensor_on_box(rule: &GaussRule, lo: [f64; 2], hi: [f64; 2]) -> Vec<([f64; 2], f64)> {
    let mut out = Vec::with_capacity(rule.len() * rule.len());
    for (x, wx) in rule.on_interval(lo[0], hi[0]) {
        for (y, wy) in rule.on_interval(lo[1], hi[1]) {
            out.push(([x, y], wx * wy));
        }
    }
    out
}

/// Quadrature on the triangle (v0, v1, v2) by the Duffy map of a tensor
/// rule; exact for total degree 2n-2.
pub fn on_triangle(rule: &GaussRule, v0: [f64; 2], v1: [f64; 2], v2: [f64; 2]) -> Vec<([f64; 2], f64)> {
    let e1 = [v1[0] - v0[0], v1[1] - v0[1]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1]];
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    if jac == 0.0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(rule.len() * rule.len());
    for (u, wu) in rule.on_interval(0.0, 1.0) {
        for (v, wv) in rule.on_interval(0.0, 1.0) {
            // (u, v) in unit square -> (u, v(1-u)) in unit triangle.
            let a = u;
            let b = v * (1.0 - u);
            let w = wu * wv * (1.0 - u) * jac;
            let x = v0[0] + a * e1[0] + b * e2[0];
            let y = v0[1] + a * e1[1] + b * e2[1];
            out.push(([x, y], w));
        }
    }
    out
}

/// Quadrature over a convex polygon by fanning triangles from the first
/// vertex.
pub fn on_convex_polygon(rule: &GaussRule, verts: &[[f64; 2]]) -> Vec<([f64; 2], f64)> {
    let mut out = Vec::new();
    if verts.len() < 3 {
        return out;
    }
    for k in 1..verts.len() - 1 {
        out.extend(on_triangle(rule, verts[0], verts[k], verts[k + 1]));
    }
    out
}
