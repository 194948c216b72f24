//! Shared numerical kernels: adaptive Simpson quadrature, classical RK4 with
//! step-doubling error control, cubic Hermite dense output and zero-crossing
//! event location, and small least-squares fits.

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize, F>(f: &F, s: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(s, y);
    let y2 = axpy(y, 0.5 * h, &k1);
    let k2 = f(s + 0.5 * h, &y2);
    let y3 = axpy(y, 0.5 * h, &k2);
    let k3 = f(s + 0.5 * h, &y3);
    let y4 = axpy(y, h, &k3);
    let k4 = f(s + h, &y4);
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// Accepted trajectory with cubic Hermite dense output.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub s: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    fn new(s0: f64, y0: [f64; N], f0: [f64; N]) -> Self {
        Trajectory { s: vec![s0], y: vec![y0], dy: vec![f0] }
    }

    fn push(&mut self, s: f64, y: [f64; N], dy: [f64; N]) {
        self.s.push(s);
        self.y.push(y);
        self.dy.push(dy);
    }

    pub fn first(&self) -> f64 {
        self.s[0]
    }

    pub fn last(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn final_state(&self) -> [f64; N] {
        *self.y.last().unwrap()
    }

    /// Dense state at `s` (clamped to the integrated range).
    pub fn eval(&self, s: f64) -> [f64; N] {
        let n = self.s.len();
        if n == 1 {
            return self.y[0];
        }
        let s = s.clamp(self.s[0].min(self.s[n - 1]), self.s[0].max(self.s[n - 1]));
        let forward = self.s[n - 1] > self.s[0];
        // Locate the interval with a binary search over the monotone grid.
        let idx = if forward {
            self.s.partition_point(|&x| x <= s)
        } else {
            self.s.partition_point(|&x| x >= s)
        };
        let k = idx.clamp(1, n - 1) - 1;
        hermite(self.s[k], &self.y[k], &self.dy[k], self.s[k + 1], &self.y[k + 1], &self.dy[k + 1], s)
    }

    /// Dense derivative at `s` (derivative of the Hermite interpolant).
    pub fn eval_derivative(&self, s: f64) -> [f64; N] {
        let n = self.s.len();
        let forward = self.s[n - 1] > self.s[0];
        let idx = if forward {
            self.s.partition_point(|&x| x <= s)
        } else {
            self.s.partition_point(|&x| x >= s)
        };
        let k = idx.clamp(1, n - 1) - 1;
        hermite_derivative(
            self.s[k],
            &self.y[k],
            &self.dy[k],
            self.s[k + 1],
            &self.y[k + 1],
            &self.dy[k + 1],
            s,
        )
    }
}

fn hermite<const N: usize>(
    s0: f64,
    y0: &[f64; N],
    d0: &[f64; N],
    s1: f64,
    y1: &[f64; N],
    d1: &[f64; N],
    s: f64,
) -> [f64; N] {
    let h = s1 - s0;
    let t = (s - s0) / h;
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
    }
    out
}

fn hermite_derivative<const N: usize>(
    s0: f64,
    y0: &[f64; N],
    d0: &[f64; N],
    s1: f64,
    y1: &[f64; N],
    d1: &[f64; N],
    s: f64,
) -> [f64; N] {
    let h = s1 - s0;
    let t = (s - s0) / h;
    let g00 = 6.0 * t * (t - 1.0) / h;
    let g10 = (1.0 - t) * (1.0 - 3.0 * t);
    let g01 = -g00;
    let g11 = t * (3.0 * t - 2.0);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = g00 * y0[i] + g10 * d0[i] + g01 * y1[i] + g11 * d1[i];
    }
    out
}

/// Controls for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { rtol: 1e-12, atol: 1e-13, h_init: 1e-3, h_max: 0.05, max_steps: 200_000 }
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Reached the end of the requested interval.
    End,
    /// The event function crossed zero at this parameter value.
    Event(f64),
    /// The right-hand side became non-finite or the step size underflowed.
    Breakdown(f64),
}

fn err_norm<const N: usize>(a: &[f64; N], b: &[f64; N], o: &AdaptiveOptions) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * a[i].abs().max(b[i].abs());
        e = e.max((a[i] - b[i]).abs() / 15.0 / sc);
    }
    e
}

/// Integrates `y' = f(s, y)` from `s0` towards `s1` (either direction) with
/// step-doubling RK4, stopping at the first sign change of `event(s, y)`,
/// which is located on the Hermite interpolant to near round-off.
pub fn integrate_adaptive<const N: usize, F, G>(
    f: &F,
    s0: f64,
    y0: [f64; N],
    s1: f64,
    event: Option<&G>,
    opts: &AdaptiveOptions,
) -> (Trajectory<N>, Stop)
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: Fn(f64, &[f64; N]) -> f64,
{
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    let mut traj = Trajectory::new(s0, y0, f(s0, &y0));
    let mut s = s0;
    let mut y = y0;
    let mut h = opts.h_init.min((s1 - s0).abs()).max(1e-14);
    let mut g_prev = event.map(|g| g(s, &y));
    for _ in 0..opts.max_steps {
        if (s1 - s) * dir <= 1e-15 * s1.abs().max(1.0) {
            return (traj, Stop::End);
        }
        h = h.min((s1 - s).abs()).min(opts.h_max);
        let full = rk4_step(f, s, &y, dir * h);
        let half = rk4_step(f, s, &y, dir * 0.5 * h);
        let two = rk4_step(f, s + dir * 0.5 * h, &half, dir * 0.5 * h);
        let finite = full.iter().chain(two.iter()).all(|x| x.is_finite());
        let e = if finite { err_norm(&two, &full, opts) } else { f64::INFINITY };
        if e <= 1.0 {
            let mut yn = two;
            for i in 0..N {
                yn[i] += (two[i] - full[i]) / 15.0;
            }
            let sn = s + dir * h;
            let dn = f(sn, &yn);
            if dn.iter().any(|x| !x.is_finite()) {
                return (traj, Stop::Breakdown(s));
            }
            let (sp, yp, dp) = (s, y, *traj.dy.last().unwrap());
            traj.push(sn, yn, dn);
            if let (Some(g), Some(gp)) = (event, g_prev) {
                let gn = g(sn, &yn);
                if gp == 0.0 || gp.signum() != gn.signum() {
                    let se = locate_event(g, sp, &yp, &dp, sn, &yn, &dn, gp, gn);
                    let ye = hermite(sp, &yp, &dp, sn, &yn, &dn, se);
                    let de = f(se, &ye);
                    traj.s.pop();
                    traj.y.pop();
                    traj.dy.pop();
                    traj.push(se, ye, de);
                    return (traj, Stop::Event(se));
                }
                g_prev = Some(gn);
            }
            s = sn;
            y = yn;
            let fac = if e > 0.0 { 0.9 * e.powf(-0.2) } else { 4.0 };
            h *= fac.clamp(0.2, 4.0);
        } else {
            let fac = if e.is_finite() { 0.9 * e.powf(-0.2) } else { 0.25 };
            h *= fac.clamp(0.1, 0.9);
            if h < 1e-15 * s.abs().max(1.0) {
                return (traj, Stop::Breakdown(s));
            }
        }
    }
    (traj, Stop::Breakdown(s))
}

#[allow(clippy::too_many_arguments)]
fn locate_event<const N: usize, G>(
    g: &G,
    s0: f64,
    y0: &[f64; N],
    d0: &[f64; N],
    s1: f64,
    y1: &[f64; N],
    d1: &[f64; N],
    g0: f64,
    g1: f64,
) -> f64
where
    G: Fn(f64, &[f64; N]) -> f64,
{
    if g0 == 0.0 {
        return s0;
    }
    let (mut a, mut b, mut ga) = (s0, s1, g0);
    let _ = g1;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let gm = g(m, &hermite(s0, y0, d0, s1, y1, d1, m));
        if gm == 0.0 {
            return m;
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Fixed-step RK4 from `s0` with step `h` until the event crosses zero or
/// `s_max` is reached; returns the state at the located crossing (Hermite
/// interpolation on the final step), used for order studies.
pub fn integrate_fixed<const N: usize, F, G>(
    f: &F,
    s0: f64,
    y0: [f64; N],
    h: f64,
    s_max: f64,
    event: &G,
) -> Option<(f64, [f64; N])>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: Fn(f64, &[f64; N]) -> f64,
{
    let mut s = s0;
    let mut y = y0;
    let mut d = f(s, &y);
    let mut gp = event(s, &y);
    while s < s_max {
        let yn = rk4_step(f, s, &y, h);
        let sn = s + h;
        let dn = f(sn, &yn);
        let gn = event(sn, &yn);
        if gp.signum() != gn.signum() {
            let se = locate_event(event, s, &y, &d, sn, &yn, &dn, gp, gn);
            return Some((se, hermite(s, &y, &d, sn, &yn, &dn, se)));
        }
        s = sn;
        y = yn;
        d = dn;
        gp = gn;
    }
    None
}

/// Least-squares fit `y ≈ c0 + c1·x`; returns `(c0, c1, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    Some((c0, c1, (rss / n as f64).sqrt()))
}

/// Solves the 3×3 system `m·x = r` by Gaussian elimination with partial pivoting.
pub fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = r[row];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Derivative at `x[k]` of the quadratic through three neighbouring samples,
/// using a centred stencil inside and one-sided stencils at the ends; second
/// order on non-uniform grids.
pub fn three_point_derivative(x: &[f64], y: &[f64], k: usize) -> f64 {
    let n = x.len();
    let (i0, i1, i2) = if k == 0 {
        (0, 1, 2)
    } else if k + 1 == n {
        (n - 3, n - 2, n - 1)
    } else {
        (k - 1, k, k + 1)
    };
    let (x0, x1, x2) = (x[i0], x[i1], x[i2]);
    let t = x[k];
    let l0 = ((t - x1) + (t - x2)) / ((x0 - x1) * (x0 - x2));
    let l1 = ((t - x0) + (t - x2)) / ((x1 - x0) * (x1 - x2));
    let l2 = ((t - x0) + (t - x1)) / ((x2 - x0) * (x2 - x1));
    l0 * y[i0] + l1 * y[i1] + l2 * y[i2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| 1.0 / x, 1.0, 2.0, 1e-13);
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = |_s: f64, y: &[f64; 1]| [y[0]];
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = [1.0];
            for k in 0..n {
                y = rk4_step(&f, k as f64 * h, &y, h);
            }
            (y[0] - 1f64.exp()).abs()
        };
        let r = err(20) / err(40);
        assert!(r > 15.0 && r < 17.0, "ratio {r}");
    }

    #[test]
    fn adaptive_event_location() {
        // Harmonic oscillator: first zero of cos at π/2.
        let f = |_s: f64, y: &[f64; 2]| [y[1], -y[0]];
        let g = |_s: f64, y: &[f64; 2]| y[0];
        let opts = AdaptiveOptions { h_max: 0.01, ..AdaptiveOptions::default() };
        let (traj, stop) = integrate_adaptive(&f, 0.0, [1.0, 0.0], 10.0, Some(&g), &opts);
        match stop {
            Stop::Event(s) => assert!((s - std::f64::consts::FRAC_PI_2).abs() < 1e-10),
            other => panic!("unexpected stop {other:?}"),
        }
        let y = traj.eval(1.0);
        assert!((y[0] - 1f64.cos()).abs() < 1e-10);
        let d = traj.eval_derivative(1.0);
        assert!((d[0] + 1f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn backward_integration() {
        let f = |_s: f64, y: &[f64; 1]| [y[0]];
        let none: Option<&fn(f64, &[f64; 1]) -> f64> = None;
        let opts = AdaptiveOptions { h_max: 0.01, ..AdaptiveOptions::default() };
        let (traj, stop) = integrate_adaptive(&f, 1.0, [1.0], 0.0, none, &opts);
        assert_eq!(stop, Stop::End);
        assert!((traj.final_state()[0] - (-1f64).exp()).abs() < 1e-11);
        assert!((traj.eval(0.5)[0] - (-0.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn line_fit_and_linear_solve() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r) = fit_line(&x, &y).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && r < 1e-14);
        let s = solve3([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]], [3.0, 5.0, 5.0]).unwrap();
        for v in s {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn three_point_derivative_is_exact_for_quadratics() {
        let x = [0.0, 0.1, 0.35, 0.5, 0.9];
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t * t - t + 3.0).collect();
        for k in 0..x.len() {
            let d = three_point_derivative(&x, &y, k);
            assert!((d - (4.0 * x[k] - 1.0)).abs() < 1e-12);
        }
    }
}
