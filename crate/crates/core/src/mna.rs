//! Modified nodal equations over a fixed unknown layout.
//!
//! Unknowns are the non-ground node voltages followed by one branch current
//! per voltage source, switch and diode. The layout never depends on switch
//! statuses: a blocking branch keeps its unknown and pins it to zero.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::circuit::{
    companion_conductance, companion_stamp, element_post_solve, kcl_residual, Device, Element,
    IntegrationMethod, SnapshotLabel, StateSnapshot, Status, SwitchStatusVector, ValidatedCircuit,
};

const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownLayout {
    names: Vec<String>,
    n_nodes: usize,
}

impl UnknownLayout {
    pub fn new(nodes: &[String], branches: &[String]) -> Self {
        let names = nodes
            .iter()
            .map(|n| format!("v({n})"))
            .chain(branches.iter().map(|b| format!("i({b})")))
            .collect();
        Self {
            names,
            n_nodes: nodes.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[r * n..(r + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("singular matrix: pivot for column {column} below tolerance")]
pub struct SingularMatrix {
    pub column: usize,
}

/// Power of two closest to `1 / m` from below, so scaling is exact.
fn inverse_scale(m: f64) -> f64 {
    if m == 0.0 || !m.is_finite() {
        1.0
    } else {
        2f64.powi(-(m.log2().ceil() as i32))
    }
}

/// LU factors with partial pivoting of the equilibrated matrix
/// `R A C`, packed in one matrix.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl LuFactors {
    /// Rows and columns are first scaled by powers of two to unit maximum;
    /// a pivot below `1e-12` times the largest pivot then means singular.
    pub fn factorize(a: &DenseMatrix) -> Result<Self, SingularMatrix> {
        let n = a.n;
        let mut lu = a.clone();
        let row_scale: Vec<f64> = lu
            .data
            .chunks(n.max(1))
            .map(|row| inverse_scale(row.iter().fold(0.0, |m: f64, v| m.max(v.abs()))))
            .collect();
        for (r, s) in row_scale.iter().enumerate() {
            for v in &mut lu.data[r * n..(r + 1) * n] {
                *v *= s;
            }
        }
        let col_scale: Vec<f64> = (0..n)
            .map(|c| inverse_scale((0..n).fold(0.0, |m: f64, r| m.max(lu.get(r, c).abs()))))
            .collect();
        for r in 0..n {
            for (c, s) in col_scale.iter().enumerate() {
                lu.data[r * n + c] *= s;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu.get(r, k).abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pmax == 0.0 {
                return Err(SingularMatrix { column: k });
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu.get(k, k);
            pivots.push(pivot.abs());
            for r in k + 1..n {
                let f = lu.get(r, k) / pivot;
                lu.data[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu.data[r * n + c] -= f * lu.data[k * n + c];
                    }
                }
            }
        }
        let largest = pivots.iter().fold(0.0f64, |m, &p| m.max(p));
        if let Some(column) = pivots.iter().position(|&p| p < SINGULARITY_TOL * largest) {
            return Err(SingularMatrix { column });
        }
        Ok(Self {
            lu,
            perm,
            row_scale,
            col_scale,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        assert_eq!(rhs.len(), n, "rhs length must match matrix dimension");
        let mut y: Vec<f64> = self
            .perm
            .iter()
            .map(|&p| rhs[p] * self.row_scale[p])
            .collect();
        for r in 0..n {
            let row = &self.lu.data[r * n..r * n + r];
            y[r] = row.iter().zip(&y[..r]).fold(y[r], |s, (l, v)| s - l * v);
        }
        for r in (0..n).rev() {
            let row = &self.lu.data[r * n + r + 1..(r + 1) * n];
            let s = row
                .iter()
                .zip(&y[r + 1..])
                .fold(y[r], |s, (u, v)| s - u * v);
            y[r] = s / self.lu.get(r, r);
        }
        for (v, s) in y.iter_mut().zip(&self.col_scale) {
            *v *= s;
        }
        y
    }
}

pub(crate) fn stamp_conductance(a: &mut DenseMatrix, e: &Element, g: f64) {
    if let Some(p) = e.pos {
        a.add(p, p, g);
    }
    if let Some(q) = e.neg {
        a.add(q, q, g);
    }
    if let (Some(p), Some(q)) = (e.pos, e.neg) {
        a.add(p, q, -g);
        a.add(q, p, -g);
    }
}

/// Known current `i` flowing from `pos` to `neg` through `e`.
pub(crate) fn stamp_injection(rhs: &mut [f64], e: &Element, i: f64) {
    if let Some(p) = e.pos {
        rhs[p] -= i;
    }
    if let Some(q) = e.neg {
        rhs[q] += i;
    }
}

/// Branch-current columns and constraint rows of sources, switches, diodes.
pub(crate) fn stamp_constraints(
    circuit: &ValidatedCircuit,
    statuses: &SwitchStatusVector,
    a: &mut DenseMatrix,
    rhs: &mut [f64],
    t: f64,
) {
    for e in &circuit.elements {
        let Some(b) = e.branch else { continue };
        if let Some(p) = e.pos {
            a.add(p, b, 1.0);
        }
        if let Some(q) = e.neg {
            a.add(q, b, -1.0);
        }
        let voltage_row = match e.device {
            Device::Switch { .. } | Device::Diode { .. } => {
                statuses.get(e.switch_slot.expect("switch slot")) == Status::Conducting
            }
            _ => true,
        };
        if voltage_row {
            if let Some(p) = e.pos {
                a.add(b, p, 1.0);
            }
            if let Some(q) = e.neg {
                a.add(b, q, -1.0);
            }
            rhs[b] = e.source_value(t);
        } else {
            a.add(b, b, 1.0);
            rhs[b] = 0.0;
        }
    }
}

pub fn assemble(
    circuit: &ValidatedCircuit,
    statuses: &SwitchStatusVector,
    method: IntegrationMethod,
) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(circuit.dim());
    let mut scratch = vec![0.0; circuit.dim()];
    for e in &circuit.elements {
        if let Some(g) = companion_conductance(e, method) {
            stamp_conductance(&mut a, e, g);
        }
    }
    stamp_constraints(circuit, statuses, &mut a, &mut scratch, 0.0);
    a
}

pub fn build_rhs(
    circuit: &ValidatedCircuit,
    statuses: &SwitchStatusVector,
    method: IntegrationMethod,
    prev: &StateSnapshot,
    t_new: f64,
) -> Vec<f64> {
    let mut rhs = vec![0.0; circuit.dim()];
    for e in &circuit.elements {
        if let Some(stamp) = companion_stamp(e, method, prev) {
            if stamp.i_hist != 0.0 {
                stamp_injection(&mut rhs, e, stamp.i_hist);
            }
        }
        if let Some(b) = e.branch {
            let voltage_row = match e.device {
                Device::Switch { .. } | Device::Diode { .. } => {
                    statuses.get(e.switch_slot.expect("switch slot")) == Status::Conducting
                }
                _ => true,
            };
            rhs[b] = if voltage_row {
                e.source_value(t_new)
            } else {
                0.0
            };
        }
    }
    rhs
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("singular system with statuses [{statuses}]: no unique solution for {unknown}")]
pub struct SingularSystem {
    pub statuses: String,
    pub unknown: String,
}

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub solves: usize,
    pub factorizations: usize,
    pub max_kcl_residual: f64,
    /// Every distinct status vector a solve was requested with.
    pub statuses_seen: HashSet<SwitchStatusVector>,
}

type CacheKey = (SwitchStatusVector, u64);

/// Linear solver with a factorization cache keyed by the status vector and
/// the effective backward-Euler step.
#[derive(Debug, Default)]
pub struct Solver {
    cache: HashMap<CacheKey, LuFactors>,
    last_key: Option<CacheKey>,
    pub stats: SolverStats,
}

impl Solver {
    pub fn new() -> Self {
        Self::default()
    }

    fn factors(
        &mut self,
        circuit: &ValidatedCircuit,
        statuses: &SwitchStatusVector,
        method: IntegrationMethod,
    ) -> Result<&LuFactors, SingularSystem> {
        let bits = method.equivalent_be_step().to_bits();
        let hit = matches!(&self.last_key, Some((s, b)) if *b == bits && s == statuses);
        if !hit {
            let key = (statuses.clone(), bits);
            if !self.cache.contains_key(&key) {
                let matrix = assemble(circuit, statuses, method);
                let lu = LuFactors::factorize(&matrix).map_err(|err| SingularSystem {
                    statuses: statuses.describe(circuit),
                    unknown: circuit.layout.name(err.column).to_string(),
                })?;
                self.stats.factorizations += 1;
                self.stats.statuses_seen.insert(statuses.clone());
                self.cache.insert(key.clone(), lu);
            }
            self.last_key = Some(key);
        }
        let key = self.last_key.as_ref().expect("key set above");
        Ok(&self.cache[key])
    }

    /// Advance `prev` to `t_new` with `method`.
    pub fn step_solve(
        &mut self,
        circuit: &ValidatedCircuit,
        statuses: &SwitchStatusVector,
        method: IntegrationMethod,
        prev: &StateSnapshot,
        t_new: f64,
    ) -> Result<StateSnapshot, SingularSystem> {
        let rhs = build_rhs(circuit, statuses, method, prev, t_new);
        let x = self.factors(circuit, statuses, method)?.solve(&rhs);
        let mut dynamic = prev.dynamic.clone();
        for &ei in &circuit.dynamic_elements {
            let e = &circuit.elements[ei];
            dynamic[e.dyn_slot.expect("dynamic element")] = element_post_solve(e, &x, method, prev);
        }
        let snap = StateSnapshot {
            t: t_new,
            x,
            dynamic,
            label: SnapshotLabel::Regular,
        };
        self.stats.solves += 1;
        let r = kcl_residual(circuit, &snap);
        self.stats.max_kcl_residual = self.stats.max_kcl_residual.max(r);
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{DynState, Status::*};
    use crate::netlist::load;

    const H: f64 = 1e-4;

    fn freewheel() -> ValidatedCircuit {
        load("L1 1 0 0.005 ic=1\nS1 1 0 initial=closed\nD1 0 1\n.tran h=1e-4 tstop=2e-3\n").unwrap()
    }

    fn at_switching(c: &ValidatedCircuit) -> StateSnapshot {
        StateSnapshot {
            t: 0.0,
            x: vec![0.0; c.dim()],
            dynamic: vec![DynState { v: 0.0, i: 1.0 }],
            label: SnapshotLabel::PreSwitch,
        }
    }

    #[test]
    fn freewheel_matrices() {
        let c = freewheel();
        let off = assemble(
            &c,
            &SwitchStatusVector(vec![Blocking, Blocking]),
            IntegrationMethod::Trapezoidal(H),
        );
        let on = assemble(
            &c,
            &SwitchStatusVector(vec![Blocking, Conducting]),
            IntegrationMethod::Trapezoidal(H),
        );
        // unknowns: v(1), i(S1), i(D1); the open switch row decouples.
        assert_eq!(
            off,
            DenseMatrix::from_rows(&[&[0.01, 1.0, -1.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]])
        );
        assert_eq!(
            on,
            DenseMatrix::from_rows(&[&[0.01, 1.0, -1.0], &[0.0, 1.0, 0.0], &[-1.0, 0.0, 0.0]])
        );
    }

    #[test]
    fn freewheel_solutions() {
        let c = freewheel();
        let prev = at_switching(&c);
        let mut solver = Solver::new();
        let off = SwitchStatusVector(vec![Blocking, Blocking]);
        let on = SwitchStatusVector(vec![Blocking, Conducting]);
        let m = IntegrationMethod::Trapezoidal(H);
        let s = solver.step_solve(&c, &off, m, &prev, H).unwrap();
        assert!((s.x[0] + 100.0).abs() < 1e-12);
        assert_eq!(s.x[2], 0.0);
        let s = solver.step_solve(&c, &on, m, &prev, H).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert_eq!(s.x[2], 1.0);

        let half = solver
            .step_solve(
                &c,
                &on,
                IntegrationMethod::BackwardEuler(H / 2.0),
                &prev,
                H / 2.0,
            )
            .unwrap();
        assert_eq!(half.x[0], 0.0);
        assert_eq!(half.dynamic[0].i, 1.0);
        assert_eq!(half.x[2], 1.0);
        assert_eq!(solver.stats.factorizations, 2);
    }

    #[test]
    fn interrupt_half_step() {
        let c =
            load("L1 1 0 0.005 ic=1\nS1 1 0 initial=closed\n.tran h=1e-4 tstop=2e-3\n").unwrap();
        let prev = at_switching(&c);
        let mut solver = Solver::new();
        let s = solver
            .step_solve(
                &c,
                &SwitchStatusVector(vec![Blocking]),
                IntegrationMethod::BackwardEuler(H / 2.0),
                &prev,
                H / 2.0,
            )
            .unwrap();
        assert!((s.x[0] + 2.0 * 0.005 / H).abs() < 1e-12);
        assert_eq!(s.dynamic[0].i, 0.0);
    }

    #[test]
    fn identity_solve() {
        let lu =
            LuFactors::factorize(&DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(lu.solve(&[1.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn lu_with_pivoting_solves_accurately() {
        let a = DenseMatrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]);
        let lu = LuFactors::factorize(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        for (r, v) in a.mul_vec(&x).iter().zip(b) {
            assert!((r - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_detected() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(LuFactors::factorize(&a).unwrap_err().column, 1);
        let a = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]]);
        assert!(LuFactors::factorize(&a).is_err());
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1e-14]]);
        assert_eq!(
            LuFactors::factorize(&a).unwrap().solve(&[1.0, 1e-14]),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn resistive_operating_point_is_stationary() {
        let c = load("V1 1 0 DC 1.0\nR1 1 0 0.1\n.tran h=1e-4 tstop=1\n").unwrap();
        let st = c.initial_statuses();
        let mut snap = crate::circuit::initial_snapshot(&c, &st).unwrap();
        let mut solver = Solver::new();
        for m in [
            IntegrationMethod::Trapezoidal(H),
            IntegrationMethod::BackwardEuler(H),
            IntegrationMethod::BackwardEuler(-H),
        ] {
            snap = solver.step_solve(&c, &st, m, &snap, snap.t + H).unwrap();
            assert_eq!(snap.x[0], 1.0);
            assert!((snap.x[1] + 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trap_and_half_be_share_one_factorization() {
        let c = freewheel();
        let prev = at_switching(&c);
        let st = SwitchStatusVector(vec![Conducting, Blocking]);
        assert_eq!(
            assemble(&c, &st, IntegrationMethod::Trapezoidal(H)),
            assemble(&c, &st, IntegrationMethod::BackwardEuler(H / 2.0))
        );
        let mut solver = Solver::new();
        solver
            .step_solve(&c, &st, IntegrationMethod::Trapezoidal(H), &prev, H)
            .unwrap();
        solver
            .step_solve(
                &c,
                &st,
                IntegrationMethod::BackwardEuler(H / 2.0),
                &prev,
                H / 2.0,
            )
            .unwrap();
        assert_eq!(solver.stats.factorizations, 1);
        assert_eq!(solver.stats.solves, 2);
    }

    #[test]
    fn singular_system_names_unknown() {
        let c = load("L1 1 2 0.005\nS1 2 0\nS2 1 0\nR1 2 0 1\n.tran h=1e-4 tstop=1\n").unwrap();
        let prev = crate::circuit::initial_snapshot(&c, &c.initial_statuses()).unwrap();
        let mut solver = Solver::new();
        let mut st = c.initial_statuses();
        st.set(0, Conducting);
        assert!(solver
            .step_solve(&c, &st, IntegrationMethod::Trapezoidal(H), &prev, H)
            .is_ok());
        let v = load("V1 1 0 DC 1\nS1 1 0\nR1 1 0 1\n.tran h=1 tstop=2\n").unwrap();
        let prev = crate::circuit::initial_snapshot(&v, &v.initial_statuses()).unwrap();
        let err = solver
            .step_solve(
                &v,
                &SwitchStatusVector(vec![Conducting]),
                IntegrationMethod::Trapezoidal(H),
                &prev,
                H,
            )
            .unwrap_err();
        assert!(err.statuses.contains("S1=closed"), "{err}");
    }
}
