//! Ladder operators on a truncated Fock space, used to check the operator
//! algebra and the two forms of the Hamiltonian numerically.
//!
//! Truncation at `N` levels corrupts products only near the top of the space.
//! Since `c` moves two levels, every identity is compared on levels
//! `0..N-2` (the interior block), where it must hold exactly.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DerivedParams, SystemParams};
use crate::C64;

pub type CMatrix = DMatrix<C64>;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    pub dim: usize,
    pub matrix: CMatrix,
    pub label: &'static str,
}

impl TruncatedOperator {
    /// Annihilation operator: `√k` on the first superdiagonal.
    pub fn annihilation(dim: usize, label: &'static str) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        for k in 1..dim {
            m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
        }
        TruncatedOperator { dim, matrix: m, label }
    }

    pub fn adjoint(&self, label: &'static str) -> Self {
        TruncatedOperator {
            dim: self.dim,
            matrix: self.matrix.adjoint(),
            label,
        }
    }
}

/// `{a, a†, n, c, c†}` for one mode.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    pub a: CMatrix,
    pub ad: CMatrix,
    pub n: CMatrix,
    pub c: CMatrix,
    pub cd: CMatrix,
}

impl ModeOperators {
    pub fn new(dim: usize) -> Self {
        let a = TruncatedOperator::annihilation(dim, "a").matrix;
        let ad = a.adjoint();
        let n = &ad * &a;
        let c = (&a * &a) * C64::new(0.5, 0.0);
        let cd = c.adjoint();
        ModeOperators { a, ad, n, c, cd }
    }
}

fn commutator(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x * y - y * x
}

/// Largest `|x_ij|` over the leading `k × k` block.
fn max_abs_block(x: &CMatrix, k: usize) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..k.min(x.nrows()) {
        for c in 0..k.min(x.ncols()) {
            worst = worst.max(x[(r, c)].norm());
        }
    }
    worst
}

fn max_abs_where(x: &CMatrix, keep: impl Fn(usize) -> bool) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..x.nrows() {
        if !keep(r) {
            continue;
        }
        for c in 0..x.ncols() {
            if keep(c) {
                worst = worst.max(x[(r, c)].norm());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    /// Max deviation on levels `0..N-2`.
    pub interior: f64,
    /// Max deviation over the whole truncated matrix.
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureReport {
    pub cutoff: usize,
    pub checks: Vec<IdentityCheck>,
    /// Max over every photon/phonon pair commutator on the two-mode space.
    pub cross_sector: f64,
    pub cross_cutoff: usize,
}

impl ClosureReport {
    pub fn max_interior(&self) -> f64 {
        self.checks.iter().fold(0.0f64, |a, c| a.max(c.interior))
    }

    pub fn max_full(&self) -> f64 {
        self.checks.iter().fold(0.0f64, |a, c| a.max(c.full))
    }
}

fn kron_left(x: &CMatrix, other: usize) -> CMatrix {
    x.kronecker(&CMatrix::identity(other, other))
}

fn kron_right(y: &CMatrix, other: usize) -> CMatrix {
    CMatrix::identity(other, other).kronecker(y)
}

/// Checks the pair-operator commutators and their mixed first-order
/// counterparts for cutoff `n` (at least 6).
///
/// Photon and phonon sectors are checked on the two-mode space at cutoff
/// `min(n, 12)`, where the dimension stays small.
pub fn verify_closure(n: usize) -> Result<ClosureReport> {
    if n < 6 {
        return Err(Error::InvalidParam {
            field: "fock_cutoff",
            reason: format!("must be >= 6, got {n}"),
        });
    }
    let half = C64::new(0.5, 0.0);
    let two = C64::new(2.0, 0.0);
    let id = CMatrix::identity(n, n);
    let zero = CMatrix::zeros(n, n);
    let interior = n - 2;

    let mut checks = Vec::new();
    let mut push = |name: &'static str, lhs: CMatrix, rhs: &CMatrix| {
        let diff = lhs - rhs;
        checks.push(IdentityCheck {
            name,
            interior: max_abs_block(&diff, interior),
            full: max_abs_block(&diff, n),
        });
    };

    for (sector, names) in [
        ("photon", ["[c,c†] = n+½", "[c,n] = 2c", "[n,c†] = 2c†"]),
        ("phonon", ["[d,d†] = m+½", "[d,m] = 2d", "[m,d†] = 2d†"]),
    ] {
        let o = ModeOperators::new(n);
        push(names[0], commutator(&o.c, &o.cd), &(&o.n + &id * half));
        push(names[1], commutator(&o.c, &o.n), &(&o.c * two));
        push(names[2], commutator(&o.n, &o.cd), &(&o.cd * two));
        if sector == "photon" {
            push("[c,a] = 0", commutator(&o.c, &o.a), &zero);
            push("[c†,a†] = 0", commutator(&o.cd, &o.ad), &zero);
            push("[c,a†] = a", commutator(&o.c, &o.ad), &o.a);
            push("[a,n] = a", commutator(&o.a, &o.n), &o.a);
            push("[a,c†] = a†", commutator(&o.a, &o.cd), &o.ad);
            push("[n,a†] = a†", commutator(&o.n, &o.ad), &o.ad);
        }
    }

    let k = n.min(12);
    let o = ModeOperators::new(k);
    let ops = [&o.c, &o.cd, &o.n];
    let mut cross = 0.0f64;
    for x in ops {
        let xx = kron_left(x, k);
        for y in ops {
            let yy = kron_right(y, k);
            cross = cross.max(max_abs_block(&commutator(&xx, &yy), k * k));
        }
    }

    Ok(ClosureReport {
        cutoff: n,
        checks,
        cross_sector: cross,
        cross_cutoff: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianReport {
    pub cutoff: usize,
    pub dim: usize,
    /// `max|H - H†| / max|H|` for the quadrature form.
    pub hermiticity_quadrature: f64,
    /// Same for the pair-operator form.
    pub hermiticity_pair: f64,
    /// `max|H_quad - H_pair - offset| / max|H_quad|` on the interior block.
    pub interior_deviation: f64,
    /// Same without the interior restriction.
    pub full_deviation: f64,
    pub scale: f64,
}

/// Builds the Hamiltonian in quadrature form
///
/// ```text
/// ω̃n + Ω̃m + ½ε n (b+b†)² - ½β (a+a†)² (b-b†)² + (α a + α* a†)
/// ```
///
/// and in pair-operator form with effective frequencies
///
/// ```text
/// ωn + Ωm + ε[n(m+d+d†) - ρ(n+c+c†)(d+d†-m)] + (α a + α* a†)
/// ```
///
/// on the two-mode space (photon ⊗ phonon, ħ = 1, drive at t = 0) and
/// compares them. Expanding the quadratures gives
/// `H_quad = H_pair + β(c + c† - d - d†) + ½β`; that offset is added back
/// before comparing.
pub fn verify_hamiltonian(
    p: &SystemParams,
    d: &DerivedParams,
    n: usize,
    dim_cap: usize,
) -> Result<HamiltonianReport> {
    if n < 8 {
        return Err(Error::InvalidParam {
            field: "hamiltonian_cutoff",
            reason: format!("must be >= 8, got {n}"),
        });
    }
    let dim = n * n;
    if dim > dim_cap {
        return Err(Error::MemoryBudget { dim, cap: dim_cap });
    }
    let o = ModeOperators::new(n);
    let re = |x: f64| C64::new(x, 0.0);
    let a = kron_left(&o.a, n);
    let ad = kron_left(&o.ad, n);
    let nn = kron_left(&o.n, n);
    let c = kron_left(&o.c, n);
    let cd = kron_left(&o.cd, n);
    let b = kron_right(&o.a, n);
    let bd = kron_right(&o.ad, n);
    let mm = kron_right(&o.n, n);
    let dd = kron_right(&o.c, n);
    let ddd = kron_right(&o.cd, n);
    let id = CMatrix::identity(dim, dim);

    let alpha = p.alpha();
    let drive = &a * alpha + &ad * alpha.conj();

    let xa = &a + &ad;
    let xb = &b + &bd;
    let pb = &b - &bd;
    let quad = &nn * re(p.omega_bare)
        + &mm * re(p.omega_m_bare)
        + (&nn * (&xb * &xb)) * re(0.5 * p.epsilon)
        - ((&xa * &xa) * (&pb * &pb)) * re(0.5 * d.beta)
        + &drive;

    let rho = d.rho_eff();
    let pair = &nn * re(d.omega_eff)
        + &mm * re(d.omega_m_eff)
        + (&nn * (&mm + &dd + &ddd)
            - ((&nn + &c + &cd) * (&dd + &ddd - &mm)) * re(rho))
            * re(p.epsilon)
        + &drive;

    let offset = (&c + &cd - &dd - &ddd) * re(d.beta) + &id * re(0.5 * d.beta);

    let scale = quad.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(f64::MIN_POSITIVE);
    let pair_scale = pair.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(f64::MIN_POSITIVE);
    let herm = |h: &CMatrix, s: f64| max_abs_block(&(h - h.adjoint()), dim) / s;

    let diff = &quad - &pair - &offset;
    // photon level i = idx / n, phonon level j = idx % n
    let interior = |idx: usize| idx / n < n - 2 && idx % n < n - 2;

    Ok(HamiltonianReport {
        cutoff: n,
        dim,
        hermiticity_quadrature: herm(&quad, scale),
        hermiticity_pair: herm(&pair, pair_scale),
        interior_deviation: max_abs_where(&diff, interior) / scale,
        full_deviation: max_abs_where(&diff, |_| true) / scale,
        scale,
    })
}
