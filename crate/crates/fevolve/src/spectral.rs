//! Spectral bracketing of discrete operator pencils, norm-convergence
//! studies over refinement families, h-stability and dissipativity checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigenvalues, lanczos_extremal, smallest_singular_value};
use crate::mesh_basis::GramMatrix;
use crate::operator::DiscreteOperator;

/// Dofs above which the dense generalized eigensolve gives way to Lanczos.
const DENSE_EIG_LIMIT: usize = 2000;

/// Default cap on sup ||A^-1|| before a family counts as unstable.
pub const STABILITY_THRESHOLD: f64 = 1e12;

/// Extremal generalized eigenvalues of S x = lambda M x together with the
/// weighted norms and optional continuum bracket verdict.
#[derive(Debug, Clone, Copy)]
pub struct SpectralReport {
    pub h: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub norm_a: f64,
    pub norm_ainv: f64,
    pub bracket_lo: Option<f64>,
    pub bracket_hi: Option<f64>,
    pub bracketing_ok: bool,
    pub stability_ok: bool,
}

impl SpectralReport {
    pub fn csv_header() -> &'static str {
        "h,lambda_min,lambda_max,norm_A,norm_Ainv,bracketing_ok,stable"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            self.h,
            self.lambda_min,
            self.lambda_max,
            self.norm_a,
            self.norm_ainv,
            self.bracketing_ok,
            self.stability_ok
        )
    }
}

fn check_symmetry(s: &DMatrix<f64>) -> Result<()> {
    let n = s.nrows();
    let max_abs = s.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * max_abs.max(1e-300) {
        return Err(Error::NotSymmetric { residual: asym });
    }
    Ok(())
}

/// Extremal eigenvalues of the symmetric pencil (S, M): dense below
/// `DENSE_EIG_LIMIT` dofs, Lanczos on L^-1 S L^-T above.
pub fn extremal_pencil_eigenvalues(s: &DMatrix<f64>, mass: &GramMatrix) -> Result<(f64, f64)> {
    check_symmetry(s)?;
    let n = s.nrows();
    if n != mass.dim() {
        return Err(Error::DimensionMismatch {
            expected: mass.dim(),
            got: n,
        });
    }
    if n <= DENSE_EIG_LIMIT {
        let vals = generalized_symmetric_eigenvalues(s, mass.matrix())?;
        let lo = *vals.first().ok_or_else(|| {
            Error::EigensolveFailure("empty spectrum".into())
        })?;
        let hi = *vals.last().unwrap();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::EigensolveFailure("non-finite eigenvalue".into()));
        }
        Ok((lo, hi))
    } else {
        let apply = |v: &DVector<f64>| {
            let t = mass.factor_solve(v);
            let t = s * t;
            mass.factor_t_solve(&t)
        };
        Ok(lanczos_extremal(n, apply, 300))
    }
}

/// Bracket the pencil spectrum: m <= lambda_min <= lambda_max <= M with a
/// 1e-8 slack when continuum bounds are supplied.
pub fn spectral_bracketing(
    s: &DiscreteOperator,
    mass: &GramMatrix,
    h: f64,
    bracket: Option<(f64, f64)>,
) -> Result<SpectralReport> {
    let (lambda_min, lambda_max) = extremal_pencil_eigenvalues(&s.matrix, mass)?;
    let norm_a = lambda_max.abs().max(lambda_min.abs());
    let norm_ainv = if lambda_min > 0.0 {
        1.0 / lambda_min
    } else {
        f64::INFINITY
    };
    let bracketing_ok = match bracket {
        Some((lo, hi)) => lo - 1e-8 <= lambda_min && lambda_max <= hi + 1e-8,
        None => true,
    };
    Ok(SpectralReport {
        h,
        lambda_min,
        lambda_max,
        norm_a,
        norm_ainv,
        bracket_lo: bracket.map(|b| b.0),
        bracket_hi: bracket.map(|b| b.1),
        bracketing_ok,
        stability_ok: norm_ainv.is_finite(),
    })
}

/// Row of a norm-convergence table plus the study-level verdict.
#[derive(Debug, Clone)]
pub struct NormConvergenceStudy {
    pub rows: Vec<SpectralReport>,
    /// lambda_min nonincreasing (so ||A^-1|| nondecreasing) as h decreases.
    pub monotone: bool,
    /// Richardson extrapolation of lambda_min from the two finest members.
    pub extrapolated_lambda_min: f64,
}

/// Study of weighted norms across a refinement family of one operator.
/// Entries are (h, stiffness, mass); order is free, reports come back sorted
/// by decreasing h.
pub fn norm_convergence_study(
    family: &[(f64, DMatrix<f64>, GramMatrix)],
    order: f64,
) -> Result<NormConvergenceStudy> {
    if family.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: family.len(),
        });
    }
    let mut idx: Vec<usize> = (0..family.len()).collect();
    idx.sort_by(|&a, &b| {
        family[b]
            .0
            .partial_cmp(&family[a].0)
            .expect("non-finite spacing")
    });
    for w in idx.windows(2) {
        if family[w[0]].0 == family[w[1]].0 {
            return Err(Error::InconsistentFamily(format!(
                "duplicate spacing h = {}",
                family[w[0]].0
            )));
        }
    }
    let mut rows = Vec::with_capacity(family.len());
    for &i in &idx {
        let (h, s, mass) = &family[i];
        let (lo, hi) = extremal_pencil_eigenvalues(s, mass)?;
        rows.push(SpectralReport {
            h: *h,
            lambda_min: lo,
            lambda_max: hi,
            norm_a: hi.abs().max(lo.abs()),
            norm_ainv: if lo > 0.0 { 1.0 / lo } else { f64::INFINITY },
            bracket_lo: None,
            bracket_hi: None,
            bracketing_ok: true,
            stability_ok: lo > 0.0,
        });
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].lambda_min <= w[0].lambda_min + 1e-10);
    // Richardson with the projection order: lambda(h) = lambda + C h^mu
    let a = &rows[rows.len() - 2];
    let b = &rows[rows.len() - 1];
    let t = (a.h / b.h).powf(order);
    let extrapolated_lambda_min = (t * b.lambda_min - a.lambda_min) / (t - 1.0);
    Ok(NormConvergenceStudy {
        rows,
        monotone,
        extrapolated_lambda_min,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub sup_inv_norm: f64,
}

/// h-stability: sup over the family of the weighted inverse norm
/// ||A^-1|| = 1 / sigma_min(m A m^-1); singular members count as infinity.
pub fn h_stability_check(
    family: &[(f64, DiscreteOperator)],
    threshold: Option<f64>,
) -> StabilityVerdict {
    let threshold = threshold.unwrap_or(STABILITY_THRESHOLD);
    let mut sup = 0.0f64;
    for (_, op) in family {
        let n = op.matrix.nrows();
        let g = &op.domain_gram;
        // T = m B m^-1, built column by column through the factor
        let mut t = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let col = g.factor_apply(&(&op.matrix * g.factor_solve(&e)));
            t.set_column(j, &col);
        }
        let smin = smallest_singular_value(&t);
        let smax = t.norm();
        let inv = if smin <= 1e-14 * smax.max(1e-300) {
            f64::INFINITY
        } else {
            1.0 / smin
        };
        sup = sup.max(inv);
    }
    StabilityVerdict {
        stable: sup.is_finite() && sup < threshold,
        sup_inv_norm: sup,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DissipativityVerdict {
    pub dissipative: bool,
    pub max_re: f64,
}

/// Max of Re <Bx, x> over random discrete-unit vectors plus the extremal
/// eigenvector of the symmetric part; dissipative iff the max stays below
/// 1e-10.
pub fn dissipativity_check(
    b: &DiscreteOperator,
    samples: usize,
    seed: u64,
) -> DissipativityVerdict {
    let n = b.matrix.nrows();
    let g = &b.domain_gram;
    let mut max_re = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = |x: &DVector<f64>| -> f64 {
        let bx = &b.matrix * x;
        g.factor_apply(&bx).dot(&g.factor_apply(x))
    };
    for _ in 0..samples {
        let mut x = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        let nx = g.norm(&x);
        if nx == 0.0 {
            continue;
        }
        x /= nx;
        max_re = max_re.max(quad(&x));
    }
    // exact maximizer: top eigenvector of sym(m B m^-1), pulled back by m
    let mut t = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let col = g.factor_apply(&(&b.matrix * g.factor_solve(&e)));
        t.set_column(j, &col);
    }
    let sym = (&t + t.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    max_re = max_re.max(top);
    DissipativityVerdict {
        dissipative: max_re <= 1e-10,
        max_re,
    }
}
