//! Symmetric quadrature rules on triangles (Dunavant).

/// Points in barycentric coordinates; weights sum to one and are scaled by
/// the cell area at the call site.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Smallest tabulated rule that integrates polynomials of total degree
    /// `degree` exactly. Rules exist up to degree 8.
    pub fn with_degree(degree: usize) -> QuadRule {
        match degree {
            0 | 1 => centroid(),
            2 => degree2(),
            3 | 4 => degree4(),
            5 | 6 => degree6(),
            7 | 8 => degree8(),
            _ => panic!("no tabulated triangle rule of degree {degree}"),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Default)]
struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn s3(mut self, w: f64) -> Self {
        self.points.push([1.0 / 3.0; 3]);
        self.weights.push(w);
        self
    }

    /// Orbit of (a, b, b).
    fn s21(mut self, w: f64, b: f64) -> Self {
        let a = 1.0 - 2.0 * b;
        for p in [[a, b, b], [b, a, b], [b, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    /// Orbit of (a, b, c), all distinct.
    fn s111(mut self, w: f64, b: f64, c: f64) -> Self {
        let a = 1.0 - b - c;
        for p in [
            [a, b, c],
            [a, c, b],
            [b, a, c],
            [c, a, b],
            [b, c, a],
            [c, b, a],
        ] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    fn finish(self, degree: usize) -> QuadRule {
        QuadRule {
            degree,
            points: self.points,
            weights: self.weights,
        }
    }
}

fn centroid() -> QuadRule {
    Builder::default().s3(1.0).finish(1)
}

fn degree2() -> QuadRule {
    Builder::default().s21(1.0 / 3.0, 1.0 / 6.0).finish(2)
}

fn degree4() -> QuadRule {
    Builder::default()
        .s21(0.223381589678011, 0.445948490915965)
        .s21(0.109951743655322, 0.091576213509771)
        .finish(4)
}

fn degree6() -> QuadRule {
    Builder::default()
        .s21(0.116786275726379, 0.249286745170910)
        .s21(0.050844906370207, 0.063089014491502)
        .s111(0.082851075618374, 0.310352451033784, 0.053145049844817)
        .finish(6)
}

fn degree8() -> QuadRule {
    Builder::default()
        .s3(0.144315607677787)
        .s21(0.095091634267285, 0.459292588292723)
        .s21(0.103217370534718, 0.170569307751760)
        .s21(0.032458497623198, 0.050547228317031)
        .s111(0.027230314174435, 0.263112829634638, 0.008394777409958)
        .finish(8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Integral of l1^a l2^b l3^c over a triangle of unit area.
    fn exact(a: u32, b: u32, c: u32) -> f64 {
        2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
    }

    #[test]
    fn rules_are_exact_to_their_degree() {
        for degree in [1, 2, 4, 6, 8] {
            let rule = QuadRule::with_degree(degree);
            assert_eq!(rule.degree, degree);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    for c in 0..=(degree as u32 - a - b) {
                        let q: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, w)| {
                                w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                            })
                            .sum();
                        let e = exact(a, b, c);
                        assert!(
                            (q - e).abs() < 1e-14,
                            "degree {degree} rule fails on ({a},{b},{c}): {q} vs {e}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn points_are_inside() {
        for degree in [1, 2, 4, 6, 8] {
            for p in QuadRule::with_degree(degree).points {
                assert!(p.iter().all(|&l| l > 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }
}
