//! Signed distance functions for the object primitives.
//!
//! All primitives live in the object frame. Distances are negative inside.

use serde::{Deserialize, Serialize};

use crate::pose::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64 },
    /// Segment `a`–`b` swept by a sphere.
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    /// Axis-aligned box.
    Box { center: [f64; 3], half_extents: [f64; 3] },
    /// Flat-capped cylinder between `a` and `b`.
    Cylinder { a: [f64; 3], b: [f64; 3], radius: f64 },
}

fn v(a: &[f64; 3]) -> Vec3 {
    Vec3::from(*a)
}

impl Primitive {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - v(center)).norm() - radius,
            Primitive::Capsule { a, b, radius } => {
                let (a, b) = (v(a), v(b));
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm() - radius
            }
            Primitive::Box {
                center,
                half_extents,
            } => {
                let q = (p - v(center)).abs() - v(half_extents);
                let outside = q.map(|x| x.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            Primitive::Cylinder { a, b, radius } => {
                let (a, b) = (v(a), v(b));
                let axis = b - a;
                let len = axis.norm();
                let u = axis / len;
                let rel = p - (a + b) * 0.5;
                let along = rel.dot(&u);
                let radial = (rel - u * along).norm();
                let dr = radial - radius;
                let dh = along.abs() - 0.5 * len;
                let outside = (dr.max(0.0).powi(2) + dh.max(0.0).powi(2)).sqrt();
                outside + dr.max(dh).min(0.0)
            }
        }
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        match self {
            Primitive::Sphere { center, radius } => {
                let r = Vec3::repeat(*radius);
                (v(center) - r, v(center) + r)
            }
            Primitive::Capsule { a, b, radius } => {
                let r = Vec3::repeat(*radius);
                (v(a).inf(&v(b)) - r, v(a).sup(&v(b)) + r)
            }
            Primitive::Box {
                center,
                half_extents,
            } => (v(center) - v(half_extents), v(center) + v(half_extents)),
            Primitive::Cylinder { a, b, radius } => {
                let (a, b) = (v(a), v(b));
                let u = (b - a).normalize();
                // Disc extent along each world axis is r·sqrt(1 − u_i²).
                let e = u.map(|c| radius * (1.0 - c * c).max(0.0).sqrt());
                (a.inf(&b) - e, a.sup(&b) + e)
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = |a: &[f64; 3]| a.iter().all(|x| x.is_finite());
        match self {
            Primitive::Sphere { center, radius } => finite(center) && *radius > 0.0,
            Primitive::Capsule { a, b, radius } | Primitive::Cylinder { a, b, radius } => {
                finite(a) && finite(b) && *radius > 0.0 && (v(a) - v(b)).norm() > 0.0
            }
            Primitive::Box {
                center,
                half_extents,
            } => finite(center) && half_extents.iter().all(|h| *h > 0.0),
        }
    }
}

/// Union of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape(pub Vec<Primitive>);

impl Shape {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.0.iter().map(|s| s.sdf(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for s in &self.0 {
            let (a, b) = s.aabb();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = p.norm();
            if n > 1e-3 && n <= 1.0 {
                return p / n;
            }
        }
    }

    fn perp(u: &Vec3) -> (Vec3, Vec3) {
        let t = if u.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = u.cross(&t).normalize();
        (e1, u.cross(&e1))
    }

    /// Surface area, used to split samples between primitives.
    fn area(s: &Primitive) -> f64 {
        match s {
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Primitive::Capsule { a, b, radius } => {
                4.0 * PI * radius * radius + 2.0 * PI * radius * (v(a) - v(b)).norm()
            }
            Primitive::Box { half_extents: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Primitive::Cylinder { a, b, radius } => {
                2.0 * PI * radius * radius + 2.0 * PI * radius * (v(a) - v(b)).norm()
            }
        }
    }

    fn sample_surface(s: &Primitive, rng: &mut ChaCha8Rng) -> Vec3 {
        match s {
            Primitive::Sphere { center, radius } => v(center) + unit(rng) * *radius,
            Primitive::Capsule { a, b, radius } => {
                let (a, b) = (v(a), v(b));
                let len = (b - a).norm();
                let u = (b - a) / len;
                let cap = 4.0 * PI * radius * radius;
                let side = 2.0 * PI * radius * len;
                if rng.gen::<f64>() * (cap + side) < cap {
                    let d = unit(rng);
                    let end = if d.dot(&u) >= 0.0 { b } else { a };
                    end + d * *radius
                } else {
                    let (e1, e2) = perp(&u);
                    let phi = rng.gen_range(0.0..2.0 * PI);
                    a + u * rng.gen_range(0.0..len) + (e1 * phi.cos() + e2 * phi.sin()) * *radius
                }
            }
            Primitive::Box {
                center,
                half_extents: h,
            } => {
                let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = areas.iter().sum();
                let mut r = rng.gen::<f64>() * total;
                let mut axis = 0;
                while r > areas[axis] && axis < 2 {
                    r -= areas[axis];
                    axis += 1;
                }
                let mut p = Vec3::new(
                    rng.gen_range(-h[0]..h[0]),
                    rng.gen_range(-h[1]..h[1]),
                    rng.gen_range(-h[2]..h[2]),
                );
                p[axis] = if rng.gen::<bool>() { h[axis] } else { -h[axis] };
                v(center) + p
            }
            Primitive::Cylinder { a, b, radius } => {
                let (a, b) = (v(a), v(b));
                let len = (b - a).norm();
                let u = (b - a) / len;
                let (e1, e2) = perp(&u);
                let cap = 2.0 * PI * radius * radius;
                let side = 2.0 * PI * radius * len;
                let phi = rng.gen_range(0.0..2.0 * PI);
                let dir = e1 * phi.cos() + e2 * phi.sin();
                if rng.gen::<f64>() * (cap + side) < cap {
                    let rr = radius * rng.gen::<f64>().sqrt();
                    let end = if rng.gen::<bool>() { b } else { a };
                    end + dir * rr
                } else {
                    a + u * rng.gen_range(0.0..len) + dir * *radius
                }
            }
        }
    }

    fn sample_shape(shape: &Shape, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        let areas: Vec<f64> = shape.0.iter().map(area).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let mut r = rng.gen::<f64>() * total;
            let mut i = 0;
            while i + 1 < areas.len() && r > areas[i] {
                r -= areas[i];
                i += 1;
            }
            let p = sample_surface(&shape.0[i], rng);
            // Keep only points on the outer surface of the union.
            if shape.sdf(&p) > -1e-9 {
                out.push(p);
            }
        }
        out
    }

    fn hammer() -> Shape {
        Shape(vec![
            Primitive::Capsule {
                a: [-0.12, 0.0, 0.015],
                b: [0.08, 0.0, 0.015],
                radius: 0.015,
            },
            Primitive::Box {
                center: [0.10, 0.0, 0.02],
                half_extents: [0.015, 0.05, 0.02],
            },
        ])
    }

    #[test]
    fn closed_form_examples() {
        let s = Primitive::Sphere {
            center: [0.1, 0.2, 0.3],
            radius: 0.05,
        };
        assert!((s.sdf(&Vec3::new(0.2, 0.2, 0.3)) - 0.05).abs() < 1e-15);
        let c = Primitive::Capsule {
            a: [0.0, 0.0, 0.0],
            b: [1.0, 0.0, 0.0],
            radius: 0.1,
        };
        assert!((c.sdf(&Vec3::new(0.4, 0.0, 0.0)) + 0.1).abs() < 1e-15);
        assert!((c.sdf(&Vec3::new(1.5, 0.0, 0.0)) - 0.4).abs() < 1e-15);
        let b = Primitive::Box {
            center: [0.0; 3],
            half_extents: [1.0, 2.0, 3.0],
        };
        assert!((b.sdf(&Vec3::zeros()) + 1.0).abs() < 1e-15);
        assert!((b.sdf(&Vec3::new(4.0, 6.0, 0.0)) - 5.0).abs() < 1e-15);
        let y = Primitive::Cylinder {
            a: [0.0, 0.0, -1.0],
            b: [0.0, 0.0, 1.0],
            radius: 0.5,
        };
        assert!((y.sdf(&Vec3::zeros()) + 0.5).abs() < 1e-15);
        assert!((y.sdf(&Vec3::new(0.0, 0.0, 1.25)) - 0.25).abs() < 1e-15);
        assert!((y.sdf(&Vec3::new(3.5, 0.0, 5.0)) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn matches_surface_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let shapes = [
            hammer(),
            Shape(vec![Primitive::Cylinder {
                a: [-0.1, 0.0, 0.02],
                b: [0.1, 0.0, 0.02],
                radius: 0.02,
            }]),
            Shape(vec![
                Primitive::Sphere {
                    center: [0.02, 0.0, 0.03],
                    radius: 0.03,
                },
                Primitive::Cylinder {
                    a: [-0.05, 0.0, 0.03],
                    b: [-0.01, 0.0, 0.03],
                    radius: 0.012,
                },
            ]),
            Shape(vec![Primitive::Cylinder {
                a: [-0.03, 0.02, 0.01],
                b: [0.05, -0.04, 0.06],
                radius: 0.015,
            }]),
        ];
        for shape in &shapes {
            let surface = sample_shape(shape, 100_000, &mut rng);
            let (lo, hi) = shape.aabb();
            for _ in 0..40 {
                let p = Vec3::new(
                    rng.gen_range(lo.x - 0.05..hi.x + 0.05),
                    rng.gen_range(lo.y - 0.05..hi.y + 0.05),
                    rng.gen_range(lo.z - 0.05..hi.z + 0.05),
                );
                let oracle = surface.iter().map(|s| (s - p).norm()).fold(f64::INFINITY, f64::min);
                let d = shape.sdf(&p);
                if d >= 0.0 {
                    assert!((d - oracle).abs() < 2e-3, "{d} vs {oracle}");
                } else {
                    // Inside a union the min is a bound on the depth.
                    assert!(-d <= oracle + 2e-3, "{d} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn aabb_contains_sampled_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let shape = hammer();
        let (lo, hi) = shape.aabb();
        for p in sample_shape(&shape, 5000, &mut rng) {
            for i in 0..3 {
                assert!(p[i] >= lo[i] - 1e-12 && p[i] <= hi[i] + 1e-12);
            }
        }
    }

    #[test]
    fn serde_tags() {
        let json = serde_json::to_string(&hammer()).unwrap();
        assert!(json.contains("\"type\":\"capsule\""));
        let back: Shape = serde_json::from_str(&json).unwrap();
        assert_eq!(back, hammer());
    }
}
