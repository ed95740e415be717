//! Triangle quadrature in barycentric coordinates.

use crate::mesh::{Point, TriMesh};

const A1: f64 = 0.059_715_871_789_770;
const B1: f64 = 0.470_142_064_105_115;
const A2: f64 = 0.797_426_985_353_087;
const B2: f64 = 0.101_286_507_323_456;
const W0: f64 = 0.225;
const W1: f64 = 0.132_394_152_788_506;
const W2: f64 = 0.125_939_180_544_827;

/// Seven-point rule, exact for polynomials of degree 5. Weights sum to one.
pub const DEGREE5: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
    ([A1, B1, B1], W1),
    ([B1, A1, B1], W1),
    ([B1, B1, A1], W1),
    ([A2, B2, B2], W2),
    ([B2, A2, B2], W2),
    ([B2, B2, A2], W2),
];

pub fn map_point(p: &[Point; 3], bary: [f64; 3]) -> Point {
    [
        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
    ]
}

/// `int_T g` for element `e`.
pub fn integrate<G: Fn(Point, [f64; 3]) -> f64>(mesh: &TriMesh, e: usize, g: G) -> f64 {
    let p = mesh.element_points(e);
    mesh.area(e) * DEGREE5.iter().map(|&(b, w)| w * g(map_point(&p, b), b)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quintic_monomials() {
        // mean of l1^a l2^b l3^c over a triangle is 2 a! b! c! / (a+b+c+2)!
        let fact = |n: u32| (1..=n).product::<u32>() as f64;
        for (a, b, c) in [(0, 0, 0), (1, 0, 0), (2, 1, 0), (3, 1, 1), (5, 0, 0), (2, 2, 1)] {
            let exact = 2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
            let q: f64 =
                DEGREE5.iter().map(|&(l, w)| w * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32)).sum();
            assert!((q - exact).abs() < 1e-14, "{a}{b}{c}");
        }
    }
}
