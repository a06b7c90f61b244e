//! Classical fixed-step fourth-order Runge-Kutta.

/// Which time point of the step a stage is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Start,
    Mid,
    End,
}

/// Scratch buffers for one RK4 integration of a system of fixed dimension.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` by `h` along `dy/ds = rate(stage, y)`. The caller maps
    /// each stage to its time point (forward or backward in real time).
    pub(crate) fn step<E>(
        &mut self,
        y: &mut [f64],
        h: f64,
        mut rate: impl FnMut(Stage, &[f64], &mut [f64]) -> Result<(), E>,
    ) -> Result<(), E> {
        let n = y.len();
        rate(Stage::Start, y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        rate(Stage::Mid, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        rate(Stage::Mid, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        rate(Stage::End, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}
