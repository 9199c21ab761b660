//! Operators on (emitter 1) ⊗ (emitter 2) ⊗ (Fock 0..=N).
//!
//! Basis index is `((e1 * 2) + e2) * (N + 1) + n` with `e = 1` the excited
//! level.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::f64::consts::FRAC_1_SQRT_2;

use super::schedule::ControlSchedule;
use crate::params::PhysicalParams;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub n_max: usize,
}

impl Basis {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    pub fn dim(&self) -> usize {
        4 * (self.n_max + 1)
    }

    pub fn index(&self, e1: usize, e2: usize, n: usize) -> usize {
        debug_assert!(e1 < 2 && e2 < 2 && n <= self.n_max);
        (e1 * 2 + e2) * (self.n_max + 1) + n
    }

    /// Inverse of [`Basis::index`].
    pub fn labels(&self, i: usize) -> (usize, usize, usize) {
        let m = self.n_max + 1;
        let q = i / m;
        (q / 2, q % 2, i % m)
    }
}

/// Sparse operator as a list of `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dagger(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self { dim: self.dim, entries }.compact()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut entries = Vec::new();
        for &(r, k, v) in &self.entries {
            for &(k2, c, w) in &other.entries {
                if k == k2 {
                    entries.push((r, c, v * w));
                }
            }
        }
        Self { dim: self.dim, entries }.compact()
    }

    /// Merges duplicate positions and drops exact zeros.
    pub fn compact(mut self) -> Self {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut out: Vec<(usize, usize, C64)> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|e| e.2 != ZERO);
        Self {
            dim: self.dim,
            entries: out,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, ZERO);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Tr(O X) for a row-major matrix X.
    pub fn trace_with(&self, x: &[C64]) -> C64 {
        self.entries.iter().map(|&(r, c, v)| v * x[c * self.dim + r]).sum()
    }
}

/// Ladder and collective operators for one truncation.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub basis: Basis,
    pub a: SparseOp,
    pub sigma1: SparseOp,
    pub sigma2: SparseOp,
    pub sigma_s: SparseOp,
    pub sigma_a: SparseOp,
}

impl SystemOperators {
    pub fn new(n_max: usize) -> Self {
        let basis = Basis::new(n_max);
        let dim = basis.dim();
        let mut a = SparseOp::zero(dim);
        let mut s1 = SparseOp::zero(dim);
        let mut s2 = SparseOp::zero(dim);
        for e1 in 0..2 {
            for e2 in 0..2 {
                for n in 0..=n_max {
                    let col = basis.index(e1, e2, n);
                    if n > 0 {
                        a.entries
                            .push((basis.index(e1, e2, n - 1), col, C64::new((n as f64).sqrt(), 0.0)));
                    }
                    if e1 == 1 {
                        s1.entries.push((basis.index(0, e2, n), col, ONE));
                    }
                    if e2 == 1 {
                        s2.entries.push((basis.index(e1, 0, n), col, ONE));
                    }
                }
            }
        }
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let sigma_s = s1.add(&s2).scale(r);
        let sigma_a = s1.add(&s2.scale(-ONE)).scale(r);
        Self {
            basis,
            a: a.compact(),
            sigma1: s1.compact(),
            sigma2: s2.compact(),
            sigma_s,
            sigma_a,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn number(&self) -> SparseOp {
        self.a.dagger().mul(&self.a)
    }

    /// σ₁†σ₁ + σ₂†σ₂.
    pub fn atomic_number(&self) -> SparseOp {
        self.sigma1
            .dagger()
            .mul(&self.sigma1)
            .add(&self.sigma2.dagger().mul(&self.sigma2))
    }
}

/// Hamiltonian split by its time-dependent coefficients:
/// H(t) = static + Δ₁₂(t)·detuning + shift(t)·frame + E(t)·drive_up + E*(t)·drive_down.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub static_part: SparseOp,
    pub detuning: SparseOp,
    pub frame: SparseOp,
    pub drive_up: SparseOp,
    pub drive_down: SparseOp,
}

impl HamiltonianParts {
    pub fn new(p: &PhysicalParams, ops: &SystemOperators) -> Self {
        let sd = ops.sigma_s.dagger();
        let ad = ops.sigma_a.dagger();
        let cd = ops.a.dagger();
        let dipole = sd
            .mul(&ops.sigma_s)
            .add(&ad.mul(&ops.sigma_a).scale(-ONE))
            .scale(C64::new(p.omega12, 0.0));
        let cavity = ops.number().scale(C64::new(p.omega_c, 0.0));
        let coupling_coeff = I * (2f64.sqrt() * p.g);
        let coupling = cd
            .mul(&ops.sigma_s)
            .add(&ops.a.mul(&sd).scale(-ONE))
            .scale(coupling_coeff);
        let static_part = dipole.add(&cavity).add(&coupling);
        let detuning = sd.mul(&ops.sigma_a).add(&ad.mul(&ops.sigma_s));
        Self {
            static_part,
            detuning,
            frame: ops.atomic_number(),
            drive_up: cd.scale(-I),
            drive_down: ops.a.scale(I),
        }
    }

    pub fn at(&self, delta12: f64, shift: f64, drive: C64) -> SparseOp {
        self.static_part
            .add(&self.detuning.scale(C64::new(delta12, 0.0)))
            .add(&self.frame.scale(C64::new(shift, 0.0)))
            .add(&self.drive_up.scale(drive))
            .add(&self.drive_down.scale(drive.conj()))
    }
}

/// H(t) in the frame rotating at ω₀_ref, as a dense matrix.
pub fn assemble_hamiltonian(
    p: &PhysicalParams,
    ctrl: &ControlSchedule,
    t: f64,
    n_max: usize,
) -> DMatrix<C64> {
    let ops = SystemOperators::new(n_max);
    let parts = HamiltonianParts::new(p, &ops);
    parts
        .at(
            ctrl.delta12_at(t),
            ctrl.frame_shift(t, p.omega12),
            ctrl.drive_at(t, p.kappa),
        )
        .to_dense()
}
