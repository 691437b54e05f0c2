//! Fixed low-order quadrature rules on reference simplices.
//!
//! Points are barycentric coordinates, weights sum to one (scale by the
//! measure of the simplex).

/// 2-point Gauss on a segment, exact for cubics.
pub fn segment_rule() -> [([f64; 2], f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [([0.5 + d, 0.5 - d], 0.5), ([0.5 - d, 0.5 + d], 0.5)]
}

/// 3-point interior rule on a triangle, exact for quadratics.
pub fn triangle_rule() -> [([f64; 3], f64); 3] {
    let a = 2.0 / 3.0;
    let b = 1.0 / 6.0;
    let w = 1.0 / 3.0;
    [([a, b, b], w), ([b, a, b], w), ([b, b, a], w)]
}

/// 4-point rule on a tetrahedron, exact for quadratics.
pub fn tet_rule() -> [([f64; 4], f64); 4] {
    let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
    let b = (5.0 - 5f64.sqrt()) / 20.0;
    let w = 0.25;
    [
        ([a, b, b, b], w),
        ([b, a, b, b], w),
        ([b, b, a, b], w),
        ([b, b, b, a], w),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        assert!((segment_rule().iter().map(|q| q.1).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((triangle_rule().iter().map(|q| q.1).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((tet_rule().iter().map(|q| q.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tet_rule_integrates_quadratic_monomials() {
        // ∫ λ0² over the unit-volume-normalized simplex = 2!/(5!/3!) = 1/10
        let s: f64 = tet_rule().iter().map(|(l, w)| w * l[0] * l[0]).sum();
        assert!((s - 0.1).abs() < 1e-15);
        let s: f64 = tet_rule().iter().map(|(l, w)| w * l[0] * l[1]).sum();
        assert!((s - 0.05).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_integrates_quadratic_monomials() {
        // averages: λ0² → 1/6, λ0λ1 → 1/12
        let s: f64 = triangle_rule().iter().map(|(l, w)| w * l[0] * l[0]).sum();
        assert!((s - 1.0 / 6.0).abs() < 1e-15);
        let s: f64 = triangle_rule().iter().map(|(l, w)| w * l[0] * l[1]).sum();
        assert!((s - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn segment_rule_integrates_cubic() {
        // average of t³ on [0,1] is 1/4
        let s: f64 = segment_rule().iter().map(|(l, w)| w * l[0].powi(3)).sum();
        assert!((s - 0.25).abs() < 1e-15);
    }
}
