use nalgebra::DVector;

/// Central-difference gradient.
pub fn finite_diff_grad<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, step: f64) -> DVector<f64> {
    assert!(step > 0.0, "step must be positive");
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for k in 0..x.len() {
        let x0 = x[k];
        xp[k] = x0 + step;
        let fp = f(&xp);
        xp[k] = x0 - step;
        let fm = f(&xp);
        xp[k] = x0;
        g[k] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Central differences at `step` and `step / 2` combined to cancel the
/// second-order error term.
pub fn finite_diff_grad_richardson<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, step: f64) -> DVector<f64> {
    let g1 = finite_diff_grad(&f, x, step);
    let g2 = finite_diff_grad(&f, x, 0.5 * step);
    (g2 * 4.0 - g1) / 3.0
}

fn golden<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Dense scan of `[lo, hi]` at spacing `resolution`, then golden-section
/// refinement around the best grid point.
pub fn grid_max_1d<F: Fn(f64) -> f64>(f: F, (lo, hi): (f64, f64), resolution: f64) -> (f64, f64) {
    assert!(lo.is_finite() && hi.is_finite() && hi > lo && resolution > 0.0);
    let n = ((hi - lo) / resolution).ceil() as usize;
    let mut best = (lo, f(lo));
    for k in 1..=n {
        let x = (lo + k as f64 * resolution).min(hi);
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let a = (best.0 - resolution).max(lo);
    let b = (best.0 + resolution).min(hi);
    let refined = golden(&f, a, b);
    if refined.1 >= best.1 {
        refined
    } else {
        best
    }
}

/// Dense two-dimensional scan; returns the best grid point.
pub fn grid_max_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (x_lo, x_hi): (f64, f64),
    (y_lo, y_hi): (f64, f64),
    resolution: f64,
) -> ((f64, f64), f64) {
    assert!(x_hi > x_lo && y_hi > y_lo && resolution > 0.0);
    let nx = ((x_hi - x_lo) / resolution).ceil() as usize;
    let ny = ((y_hi - y_lo) / resolution).ceil() as usize;
    let mut best = ((x_lo, y_lo), f64::NEG_INFINITY);
    for i in 0..=nx {
        let x = (x_lo + i as f64 * resolution).min(x_hi);
        for j in 0..=ny {
            let y = (y_lo + j as f64 * resolution).min(y_hi);
            let v = f(x, y);
            if v > best.1 {
                best = ((x, y), v);
            }
        }
    }
    best
}
