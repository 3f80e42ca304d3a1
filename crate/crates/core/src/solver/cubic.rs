use std::f64::consts::PI;

const NEWTON_STEPS: usize = 4;

fn eval(a: f64, b: f64, d: f64, w: f64) -> f64 {
    (a * w + b) * w * w + d
}

/// Newton refinement of a root of `a w³ + b w² + d`; a step is kept only when
/// it lowers the residual.
fn polish(a: f64, b: f64, d: f64, mut r: f64) -> f64 {
    for _ in 0..NEWTON_STEPS {
        let p = eval(a, b, d, r);
        let dp = (3.0 * a * r + 2.0 * b) * r;
        if p == 0.0 || dp == 0.0 {
            break;
        }
        let next = r - p / dp;
        if next.is_finite() && eval(a, b, d, next).abs() <= p.abs() {
            r = next;
        } else {
            break;
        }
    }
    r
}

/// Real roots of `b w² + d`.
fn quadratic_roots(b: f64, d: f64) -> Vec<f64> {
    if b == 0.0 {
        return if d == 0.0 { vec![0.0] } else { Vec::new() };
    }
    let s = -d / b;
    if s < 0.0 {
        Vec::new()
    } else if s == 0.0 {
        vec![0.0]
    } else {
        vec![-s.sqrt(), s.sqrt()]
    }
}

/// Real roots of the monic depressed cubic `t³ + p t + q`.
fn depressed_roots(p: f64, q: f64) -> Vec<f64> {
    if p == 0.0 {
        return vec![q.abs().cbrt().copysign(-q)];
    }
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        // One real root; the larger-magnitude cube root first avoids cancellation.
        let u = (-q / 2.0 - disc.sqrt().copysign(q)).cbrt();
        vec![u - p / (3.0 * u)]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3).map(|j| m * (theta - 2.0 * PI * j as f64 / 3.0).cos()).collect()
    }
}

/// All real roots of `a w³ + b w² + d`, ascending. Repeated roots are
/// reported once per multiplicity found.
///
/// Coefficients are scaled by their largest magnitude, the cubic is reduced to
/// depressed form and solved in closed form, and every root is refined by
/// Newton steps on the original polynomial. `a = 0` falls back to the
/// quadratic; an identically zero polynomial yields `[0]`.
pub fn cubic_roots(a: f64, b: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(d.abs());
    if scale == 0.0 || !scale.is_finite() {
        return if scale == 0.0 { vec![0.0] } else { Vec::new() };
    }
    let (a, b, d) = (a / scale, b / scale, d / scale);
    let mut roots = if a == 0.0 {
        quadratic_roots(b, d)
    } else if d == 0.0 {
        vec![0.0, 0.0, -b / a]
    } else {
        let shift = b / (3.0 * a);
        let (bb, dd) = (b / a, d / a);
        let p = -bb * bb / 3.0;
        let q = 2.0 * bb.powi(3) / 27.0 + dd;
        depressed_roots(p, q).into_iter().map(|t| polish(a, b, d, t - shift)).collect()
    };
    roots.sort_by(f64::total_cmp);
    roots
}
