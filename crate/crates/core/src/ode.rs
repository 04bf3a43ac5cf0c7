/// One classical Runge-Kutta step for an autonomous-in-form system
/// `y' = f(t, y)` with a fixed-size real state.
pub fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], dt: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &axpy(y, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &axpy(y, &k2, 0.5 * dt));
    let k4 = f(t + dt, &axpy(y, &k3, dt));
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_energy() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut y = [1.0, 0.0];
        let dt = 1e-3;
        let steps = (2.0 * std::f64::consts::PI / dt).round() as usize;
        for i in 0..steps {
            y = rk4_step(&f, i as f64 * dt, &y, dt);
        }
        let t = steps as f64 * dt;
        assert!((y[0] - t.cos()).abs() < 1e-10);
        assert!((y[1] + t.sin()).abs() < 1e-10);
    }
}
