//! Fixed-step third-order explicit Runge-Kutta (Bogacki-Shampine weights).

/// One step of size `h` for `y' = f(t, y)`. The derivative closure may fail,
/// in which case the error is returned unchanged.
pub fn rk3_step<const N: usize, E>(
    t: f64,
    y: &[f64; N],
    h: f64,
    mut f: impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
) -> Result<[f64; N], E> {
    let k1 = f(t, y)?;
    let y2 = axpy(y, 0.5 * h, &k1);
    let k2 = f(t + 0.5 * h, &y2)?;
    let y3 = axpy(y, 0.75 * h, &k2);
    let k3 = f(t + 0.75 * h, &y3)?;
    let mut out = *y;
    for i in 0..N {
        out[i] += h * (2.0 / 9.0 * k1[i] + 1.0 / 3.0 * k2[i] + 4.0 / 9.0 * k3[i]);
    }
    Ok(out)
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, x: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * x[i];
    }
    out
}
