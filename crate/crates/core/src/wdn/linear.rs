//! Identified linear tank model with pressure outputs and power
//! accounting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::expm;

/// Linear control model of the network:
///
/// dh/dt = A h + B1 u + B2 d_a,  p_out = C h + D u,
///
/// with a zero-order-hold discretization at `dt_s` once
/// [`LinearWdnModel::discretize`] has run.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWdnModel {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Effective constant subtracted from the outlet pressure in the
    /// power model, N/m^2: the pump inlet pressure, net of any constant
    /// outlet-pressure offset absorbed during identification.
    pub p_in: DVector<f64>,
    pub efficiency: f64,
    /// Discretization step, seconds; zero until discretized.
    pub dt_s: f64,
    pub a_d: DMatrix<f64>,
    pub b_d1: DMatrix<f64>,
    pub b_d2: DVector<f64>,
}

impl LinearWdnModel {
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DVector<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        p_in: DVector<f64>,
        efficiency: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b1.ncols();
        if a.ncols() != n || b1.nrows() != n || b2.nrows() != n {
            return Err(Error::Parameter("state matrices have mismatched shapes".into()));
        }
        if c.nrows() != m || c.ncols() != n || d.nrows() != m || d.ncols() != m {
            return Err(Error::Parameter("output matrices have mismatched shapes".into()));
        }
        if p_in.nrows() != m {
            return Err(Error::Parameter("inlet pressure vector has wrong length".into()));
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::Parameter(format!(
                "efficiency must be in (0, 1], got {efficiency}"
            )));
        }
        Ok(LinearWdnModel {
            a,
            b1,
            b2,
            c,
            d,
            p_in,
            efficiency,
            dt_s: 0.0,
            a_d: DMatrix::zeros(n, n),
            b_d1: DMatrix::zeros(n, m),
            b_d2: DVector::zeros(n),
        })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_pumps(&self) -> usize {
        self.b1.ncols()
    }

    /// Zero-order-hold discretization at `dt_s`, via the matrix
    /// exponential of the augmented system.
    pub fn discretize(&mut self, dt_s: f64) -> Result<()> {
        if !(dt_s > 0.0) {
            return Err(Error::Parameter(format!("step must be positive, got {dt_s}")));
        }
        let n = self.n_states();
        let m = self.n_pumps();
        let cols = n + m + 1;
        let mut aug = DMatrix::zeros(cols, cols);
        aug.view_mut((0, 0), (n, n)).copy_from(&self.a);
        aug.view_mut((0, n), (n, m)).copy_from(&self.b1);
        aug.view_mut((0, n + m), (n, 1)).copy_from(&self.b2);
        let e = expm(&(aug * dt_s));
        self.a_d = e.view((0, 0), (n, n)).into();
        self.b_d1 = e.view((0, n), (n, m)).into();
        self.b_d2 = DVector::from_fn(n, |i, _| e[(i, n + m)]);
        self.dt_s = dt_s;
        Ok(())
    }

    /// One discrete step: h' = A_d h + B_d1 u + B_d2 d_a.
    pub fn linear_step(&self, h: &DVector<f64>, u: &DVector<f64>, d_a: f64) -> Result<DVector<f64>> {
        if self.dt_s == 0.0 {
            return Err(Error::Parameter("model is not discretized".into()));
        }
        if h.nrows() != self.n_states() || u.nrows() != self.n_pumps() {
            return Err(Error::Input("state or input dimension mismatch".into()));
        }
        Ok(&self.a_d * h + &self.b_d1 * u + &self.b_d2 * d_a)
    }

    /// Outlet pressures p_out = C h + D u, N/m^2.
    pub fn outlet_pressures(&self, h: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * h + &self.d * u
    }

    /// Electrical power drawn by each pump, kW, clamped at zero from
    /// below.
    pub fn pump_power_kw(&self, h: &DVector<f64>, u: &DVector<f64>) -> Vec<f64> {
        let p_out = self.outlet_pressures(h, u);
        u.iter()
            .zip(p_out.iter().zip(self.p_in.iter()))
            .map(|(&ui, (&po, &pi))| (ui * (po - pi) / self.efficiency / 1000.0).max(0.0))
            .collect()
    }

    pub fn total_pump_power_kw(&self, h: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.pump_power_kw(h, u).iter().sum()
    }
}

/// Power bought from the grid, kW: the shortfall of PV against pump
/// power.
pub fn grid_power(pump_kw: f64, pv_kw: f64) -> f64 {
    (pump_kw - pv_kw).max(0.0)
}

/// Box constraints for the reduced states and pump flows.
#[derive(Debug, Clone, PartialEq)]
pub struct TankBounds {
    pub h_min: Vec<f64>,
    pub h_max: Vec<f64>,
    pub u_max: Vec<f64>,
}

impl TankBounds {
    pub fn new(h_min: Vec<f64>, h_max: Vec<f64>, u_max: Vec<f64>) -> Result<Self> {
        if h_min.len() != h_max.len() {
            return Err(Error::Parameter("level bound lengths differ".into()));
        }
        for (lo, hi) in h_min.iter().zip(&h_max) {
            if !(*lo >= 0.0) || !(lo < hi) {
                return Err(Error::Parameter(format!(
                    "level bounds must satisfy 0 <= min < max, got [{lo}, {hi}]"
                )));
            }
        }
        if u_max.iter().any(|&u| !(u > 0.0)) {
            return Err(Error::Parameter("pump flow bounds must be positive".into()));
        }
        Ok(TankBounds { h_min, h_max, u_max })
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        h.iter()
            .zip(self.h_min.iter().zip(&self.h_max))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Bounds eroded by a per-state margin `w` (state box minus the
    /// one-step error box).
    pub fn shrunk(&self, w: &[f64]) -> Result<TankBounds> {
        if w.len() != self.h_min.len() {
            return Err(Error::Parameter("margin length mismatch".into()));
        }
        let h_min: Vec<f64> = self.h_min.iter().zip(w).map(|(&lo, &m)| lo + m).collect();
        let h_max: Vec<f64> = self.h_max.iter().zip(w).map(|(&hi, &m)| hi - m).collect();
        for (lo, hi) in h_min.iter().zip(&h_max) {
            if !(lo < hi) {
                return Err(Error::Parameter(
                    "margin leaves an empty level box".into(),
                ));
            }
        }
        Ok(TankBounds { h_min, h_max, u_max: self.u_max.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_linear() -> LinearWdnModel {
        LinearWdnModel::new(
            DMatrix::from_row_slice(2, 2, &[-2e-4, 1e-4, 8e-5, -3e-4]),
            DMatrix::from_row_slice(2, 2, &[2.5e-3, 2e-4, 1e-4, 3e-3]),
            DVector::from_column_slice(&[-1.6e-3, -1.4e-3]),
            DMatrix::from_row_slice(2, 2, &[9.0e4, 5.0e3, 4.0e3, 9.5e4]),
            DMatrix::from_row_slice(2, 2, &[3.0e4, 8.0e3, 7.0e3, 2.5e4]),
            DVector::from_column_slice(&[19620.0, 19620.0]),
            0.75,
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_discretize_to_identity_and_scaled_inputs() {
        let mut m = LinearWdnModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DVector::from_column_slice(&[5.0, 6.0]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            0.75,
        )
        .unwrap();
        m.discretize(10.0).unwrap();
        assert!((&m.a_d - DMatrix::<f64>::identity(2, 2)).norm() < 1e-13);
        assert!((&m.b_d1 - DMatrix::from_row_slice(2, 2, &[10.0, 20.0, 30.0, 40.0])).norm() < 1e-12);
        assert!((&m.b_d2 - DVector::from_column_slice(&[50.0, 60.0])).norm() < 1e-12);
    }

    #[test]
    fn scalar_discretization_matches_closed_form() {
        let a = -3.2e-4;
        let b = 2.0e-3;
        let mut m = LinearWdnModel::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[b]),
            DVector::from_column_slice(&[0.0]),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            0.75,
        )
        .unwrap();
        let dt = 3600.0;
        m.discretize(dt).unwrap();
        assert_relative_eq!(m.a_d[(0, 0)], (a * dt).exp(), epsilon = 1e-12);
        assert_relative_eq!(m.b_d1[(0, 0)], ((a * dt).exp() - 1.0) / a * b, max_relative = 1e-12);
    }

    #[test]
    fn discretization_satisfies_the_semigroup_property() {
        let mut once = toy_linear();
        once.discretize(7200.0).unwrap();
        let mut twice = toy_linear();
        twice.discretize(3600.0).unwrap();
        let a2 = &twice.a_d * &twice.a_d;
        assert!((&a2 - &once.a_d).norm() < 1e-9);
        let b2 = &twice.a_d * &twice.b_d1 + &twice.b_d1;
        assert!((&b2 - &once.b_d1).norm() < 1e-9);
    }

    #[test]
    fn toy_discretization_is_stable() {
        let mut m = toy_linear();
        m.discretize(3600.0).unwrap();
        let eig = m.a_d.complex_eigenvalues();
        for e in eig.iter() {
            assert!(e.norm() <= 1.0 + 1e-12, "eigenvalue {e}");
        }
    }

    #[test]
    fn linear_step_identity_cases() {
        let mut m = toy_linear();
        assert!(m
            .linear_step(&DVector::zeros(2), &DVector::zeros(2), 0.0)
            .is_err());
        m.discretize(3600.0).unwrap();
        let h = DVector::from_column_slice(&[2.0, 2.5]);
        let zero_u = DVector::zeros(2);
        let next = m.linear_step(&h, &zero_u, 0.0).unwrap();
        let manual = &m.a_d * &h;
        assert!((next - manual).norm() < 1e-14);
    }

    #[test]
    fn pump_power_hand_case() {
        let m = toy_linear();
        let h = DVector::from_column_slice(&[2.0, 2.0]);
        let u = DVector::from_column_slice(&[0.05, 0.0]);
        // p_out_1 = 9e4*2 + 5e3*2 + 3e4*0.05 = 191500; power =
        // 0.05*(191500-19620)/0.75 W.
        let p = m.pump_power_kw(&h, &u);
        assert_relative_eq!(p[0], 0.05 * (191_500.0 - 19_620.0) / 0.75 / 1000.0, max_relative = 1e-12);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn pump_power_scales_linearly_without_d() {
        let mut m = toy_linear();
        m.d = DMatrix::zeros(2, 2);
        let h = DVector::from_column_slice(&[2.0, 2.0]);
        let u1 = DVector::from_column_slice(&[0.02, 0.03]);
        let u2 = &u1 * 2.0;
        let p1 = m.total_pump_power_kw(&h, &u1);
        let p2 = m.total_pump_power_kw(&h, &u2);
        assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-12);
    }

    #[test]
    fn negative_head_difference_is_clamped() {
        let m = toy_linear();
        let h = DVector::zeros(2);
        let u = DVector::from_column_slice(&[0.01, 0.01]);
        // With h = 0 the outlet pressure is below the inlet pressure.
        let p = m.pump_power_kw(&h, &u);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn grid_power_is_a_relu() {
        assert_eq!(grid_power(5.0, 3.0), 2.0);
        assert_eq!(grid_power(3.0, 5.0), 0.0);
        assert_eq!(grid_power(7.0, 0.0), 7.0);
    }

    #[test]
    fn bounds_validate_and_shrink() {
        let b = TankBounds::new(vec![1.5, 1.4], vec![3.0, 2.8], vec![0.1, 0.1]).unwrap();
        assert!(b.contains(&[2.0, 2.0]));
        assert!(!b.contains(&[1.0, 2.0]));
        let s = b.shrunk(&[0.1, 0.1]).unwrap();
        assert_relative_eq!(s.h_min[0], 1.6);
        assert_relative_eq!(s.h_max[1], 2.7);
        assert!(TankBounds::new(vec![2.0], vec![1.0], vec![0.1]).is_err());
        assert!(b.shrunk(&[1.0, 1.0]).is_err());
    }
}
