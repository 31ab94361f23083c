//! Classic fixed-step fourth-order Runge–Kutta for autonomous systems.

/// Reusable RK4 stepper; holds the stage buffers for one state size.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    /// Advances `y` by one step of size `h` under `dy = f(y)`.
    pub fn step<F>(&mut self, mut f: F, y: &mut [f64], h: f64)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        f(y, &mut self.k1);
        for ((t, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *t = y + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *t = y + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *t = y + h * k;
        }
        f(&self.tmp, &mut self.k4);
        for (i, y) in y.iter_mut().enumerate() {
            *y += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Number of steps and the adjusted step size that lands exactly on `horizon`.
pub fn step_grid(horizon: f64, step: f64) -> (usize, f64) {
    let count = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
    (count, horizon / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_fourth_order() {
        let solve = |h: f64| {
            let (n, h) = step_grid(1.0, h);
            let mut rk = Rk4::new(1);
            let mut y = [1.0];
            for _ in 0..n {
                rk.step(|y, dy| dy[0] = -y[0], &mut y, h);
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let coarse = solve(0.1);
        let fine = solve(0.05);
        assert!(coarse < 1e-5);
        let ratio = coarse / fine;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn step_grid_lands_on_horizon() {
        assert_eq!(step_grid(3.0, 1e-4).0, 30000);
        let (n, h) = step_grid(1.0, 0.3);
        assert_eq!(n, 4);
        assert!((h * n as f64 - 1.0).abs() < 1e-15);
    }
}
