//! Small contraction helpers for vector-valued bases. A vector basis
//! function is a scalar function times a coordinate direction; everything
//! here is expressed through the scalar gradient g and the direction index.

/// Contraction of symmetric gradients of two vector basis functions:
/// sym_grad(phi_a e_da) : sym_grad(phi_b e_db).
#[inline]
pub fn sym_grad_contraction(ga: [f64; 2], da: usize, gb: [f64; 2], db: usize) -> f64 {
    let dot = ga[0] * gb[0] + ga[1] * gb[1];
    let delta = if da == db { 1.0 } else { 0.0 };
    0.5 * (delta * dot + ga[db] * gb[da])
}

/// The vector (n . sym_grad(phi e_d))_i = 1/2 (delta_{id} (g.n) + g_i n_d).
#[inline]
pub fn normal_sym_grad(g: [f64; 2], d: usize, n: [f64; 2]) -> [f64; 2] {
    let gn = g[0] * n[0] + g[1] * n[1];
    let mut out = [0.5 * g[0] * n[d], 0.5 * g[1] * n[d]];
    out[d] += 0.5 * gn;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym_grad(g: [f64; 2], d: usize) -> [[f64; 2]; 2] {
        let mut full = [[0.0; 2]; 2];
        for j in 0..2 {
            full[d][j] += 0.5 * g[j];
            full[j][d] += 0.5 * g[j];
        }
        full
    }

    #[test]
    fn contraction_matches_explicit_tensors() {
        let cases = [([0.3, -1.2], 0usize, [0.7, 0.4], 1usize), ([1.0, 2.0], 1, [0.5, -0.5], 1)];
        for (ga, da, gb, db) in cases {
            let sa = sym_grad(ga, da);
            let sb = sym_grad(gb, db);
            let explicit: f64 = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| sa[i][j] * sb[i][j])
                .sum();
            assert!((sym_grad_contraction(ga, da, gb, db) - explicit).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_contraction_matches_explicit_tensors() {
        let g = [0.9, -0.2];
        let n = [0.6, 0.8];
        for d in 0..2 {
            let s = sym_grad(g, d);
            let explicit = [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]];
            let fast = normal_sym_grad(g, d, n);
            assert!((fast[0] - explicit[0]).abs() < 1e-14);
            assert!((fast[1] - explicit[1]).abs() < 1e-14);
        }
    }
}
