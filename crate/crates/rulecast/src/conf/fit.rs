//! Two-step weighted least-squares fit of the confidence function.
//!
//! Step 1 exploits that for fixed λ the recency curve is linear in
//! `a1 = α/(1+φ)` and `a2 = α·φ/(1+φ)`, so it reduces to a 1-D scan over λ
//! with a tiny constrained linear solve per point, refined by golden-section
//! search. Step 2 seeds ρ, κ with a closed-form linear fit and polishes the
//! clipped objective with Nelder-Mead.

use super::BucketTarget;

pub const ALPHA_MAX: f64 = 1.0;
pub const LAMBDA_MAX: f64 = 16.0;
pub const PHI_MAX: f64 = 10.0;
pub const RHO_BOUND: f64 = 10.0;
pub const KAPPA_BOUND: f64 = 1.0;
pub const GAMMA_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub alpha: f64,
    pub lambda: f64,
    pub phi: f64,
    /// True when the optimizer could not produce a usable fit and the static
    /// estimate (α = weighted mean target, λ = φ = 0) was used instead.
    pub fallback: bool,
}

fn weighted_mean(buckets: &[BucketTarget]) -> f64 {
    let wsum: f64 = buckets.iter().map(|b| b.weight).sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    buckets.iter().map(|b| b.weight * b.target).sum::<f64>() / wsum
}

/// Constrained least squares for (a1, a2) at fixed λ over the feasible
/// region a1, a2 >= 0, a1 + a2 <= ALPHA_MAX, a2 <= PHI_MAX·a1.
/// Returns (a1, a2, sse).
fn solve_linear(buckets: &[BucketTarget], lambda: f64) -> (f64, f64, f64) {
    let us: Vec<f64> = buckets
        .iter()
        .map(|b| (-lambda * (b.min_delta as f64 - 1.0)).exp2())
        .collect();
    let sse = |a1: f64, a2: f64| -> f64 {
        buckets
            .iter()
            .zip(&us)
            .map(|(b, &u)| {
                let r = a1 * u + a2 - b.target;
                b.weight * r * r
            })
            .sum()
    };
    let feasible = |a1: f64, a2: f64| {
        a1 >= 0.0 && a2 >= 0.0 && a1 + a2 <= ALPHA_MAX + 1e-12 && a2 <= PHI_MAX * a1 + 1e-12
    };

    let mut candidates: Vec<(f64, f64)> = vec![(0.0, 0.0)];

    // Interior stationary point (unconstrained normal equations).
    let (mut suu, mut su, mut sw, mut suy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (b, &u) in buckets.iter().zip(&us) {
        suu += b.weight * u * u;
        su += b.weight * u;
        sw += b.weight;
        suy += b.weight * u * b.target;
        sy += b.weight * b.target;
    }
    let det = suu * sw - su * su;
    if det.abs() > 1e-12 * suu.max(sw).max(1.0) {
        let a1 = (suy * sw - su * sy) / det;
        let a2 = (suu * sy - su * suy) / det;
        if feasible(a1, a2) {
            candidates.push((a1, a2));
        }
    }
    // Edge a2 = 0.
    if suu > 0.0 {
        let a1 = (suy / suu).clamp(0.0, ALPHA_MAX);
        candidates.push((a1, 0.0));
    }
    // Edge a2 = PHI_MAX·a1 (φ at its bound).
    {
        let (mut svv, mut svy) = (0.0, 0.0);
        for (b, &u) in buckets.iter().zip(&us) {
            let v = u + PHI_MAX;
            svv += b.weight * v * v;
            svy += b.weight * v * b.target;
        }
        if svv > 0.0 {
            let a1 = (svy / svv).clamp(0.0, ALPHA_MAX / (1.0 + PHI_MAX));
            candidates.push((a1, PHI_MAX * a1));
        }
    }
    // Edge a1 + a2 = ALPHA_MAX.
    {
        let (mut sdd, mut sdy) = (0.0, 0.0);
        for (b, &u) in buckets.iter().zip(&us) {
            let d = u - 1.0;
            sdd += b.weight * d * d;
            sdy += b.weight * d * (b.target - ALPHA_MAX);
        }
        if sdd > 0.0 {
            let lo = ALPHA_MAX / (1.0 + PHI_MAX);
            let a1 = (sdy / sdd).clamp(lo, ALPHA_MAX);
            candidates.push((a1, ALPHA_MAX - a1));
        }
    }

    let mut best = (0.0, 0.0, f64::INFINITY);
    for (a1, a2) in candidates {
        if !feasible(a1, a2) {
            continue;
        }
        let e = sse(a1, a2);
        if e < best.2 {
            best = (a1, a2, e);
        }
    }
    best
}

/// Step 1: fit (α, λ, φ) to the min(Δ)-bucketed targets by minimizing the
/// count-weighted SSE within the declared bounds. Deterministic.
pub fn fit_recency(buckets: &[BucketTarget]) -> FitOutcome {
    if buckets.is_empty() {
        return FitOutcome {
            alpha: 0.0,
            lambda: 0.0,
            phi: 0.0,
            fallback: true,
        };
    }

    const GRID: usize = 513;
    let step = LAMBDA_MAX / (GRID - 1) as f64;
    let mut best_lambda = 0.0;
    let mut best_sse = f64::INFINITY;
    for i in 0..GRID {
        let lambda = i as f64 * step;
        let (_, _, sse) = solve_linear(buckets, lambda);
        if sse < best_sse {
            best_sse = sse;
            best_lambda = lambda;
        }
    }

    // Golden-section refinement around the best grid point.
    let mut lo = (best_lambda - step).max(0.0);
    let mut hi = (best_lambda + step).min(LAMBDA_MAX);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = solve_linear(buckets, x1).2;
    let mut f2 = solve_linear(buckets, x2).2;
    for _ in 0..120 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = solve_linear(buckets, x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = solve_linear(buckets, x2).2;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let (a1, a2, sse) = solve_linear(buckets, lambda);

    if !sse.is_finite() {
        return FitOutcome {
            alpha: weighted_mean(buckets),
            lambda: 0.0,
            phi: 0.0,
            fallback: true,
        };
    }
    let alpha = a1 + a2;
    if a1 <= 0.0 {
        // Flat-at-zero curve; λ and φ carry no information.
        return FitOutcome {
            alpha: a2.min(ALPHA_MAX),
            lambda: 0.0,
            phi: 0.0,
            fallback: false,
        };
    }
    FitOutcome {
        alpha,
        lambda,
        phi: a2 / a1,
        fallback: false,
    }
}

/// Clipped step-2 objective: count-weighted SSE of f+g against the targets,
/// expressed on the residuals e = target - f.
fn frequency_sse(points: &[(f64, f64, f64, f64)], rho: f64, kappa: f64, gamma: f64) -> f64 {
    points
        .iter()
        .map(|&(x1, x2, e, w)| {
            let g = (rho * x1 + kappa * x2).clamp(-gamma, gamma);
            let r = g - e;
            w * r * r
        })
        .sum()
}

fn clamp_freq_params(p: [f64; 3]) -> [f64; 3] {
    [
        p[0].clamp(-RHO_BOUND, RHO_BOUND),
        p[1].clamp(-KAPPA_BOUND, KAPPA_BOUND),
        p[2].clamp(0.0, GAMMA_MAX),
    ]
}

/// Nelder-Mead on the clipped objective; parameters are clamped to their
/// bounds inside the objective so the simplex cannot escape the box.
fn nelder_mead(points: &[(f64, f64, f64, f64)], start: [f64; 3]) -> ([f64; 3], f64) {
    let eval = |p: [f64; 3]| {
        let c = clamp_freq_params(p);
        frequency_sse(points, c[0], c[1], c[2])
    };
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, eval(start)));
    for i in 0..3 {
        let mut p = start;
        let scale: f64 = [0.25, 0.05, 0.05][i];
        p[i] += if p[i].abs() > 1e-6 {
            0.2 * p[i].abs().max(scale)
        } else {
            scale
        };
        simplex.push((p, eval(p)));
    }
    for _ in 0..600 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        if spread < 1e-18 * (1.0 + simplex[0].1) {
            break;
        }
        let centroid = {
            let mut c = [0.0; 3];
            for s in &simplex[..3] {
                for (ci, si) in c.iter_mut().zip(s.0) {
                    *ci += si / 3.0;
                }
            }
            c
        };
        let worst = simplex[3];
        let reflect = std::array::from_fn(|i| centroid[i] + (centroid[i] - worst.0[i]));
        let fr = eval(reflect);
        if fr < simplex[0].1 {
            let expand = std::array::from_fn(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]));
            let fe = eval(expand);
            simplex[3] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflect, fr);
        } else {
            let contract = std::array::from_fn(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]));
            let fc = eval(contract);
            if fc < worst.1 {
                simplex[3] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    let p: [f64; 3] = std::array::from_fn(|i| best[i] + 0.5 * (s.0[i] - best[i]));
                    *s = (p, eval(p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (clamp_freq_params(simplex[0].0), simplex[0].1)
}

/// Weighted linear LS for (ρ, κ) ignoring the clip. Returns clamped params.
fn linear_seed(points: &[(f64, f64, f64, f64)]) -> (f64, f64) {
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x1, x2, e, w) in points {
        s11 += w * x1 * x1;
        s12 += w * x1 * x2;
        s22 += w * x2 * x2;
        s1y += w * x1 * e;
        s2y += w * x2 * e;
    }
    let det = s11 * s22 - s12 * s12;
    let (rho, kappa) = if det.abs() > 1e-12 * s11.max(s22).max(1.0) {
        ((s1y * s22 - s12 * s2y) / det, (s11 * s2y - s12 * s1y) / det)
    } else if s22 > 0.0 {
        (0.0, s2y / s22)
    } else if s11 > 0.0 {
        (s1y / s11, 0.0)
    } else {
        (0.0, 0.0)
    };
    (
        rho.clamp(-RHO_BOUND, RHO_BOUND),
        kappa.clamp(-KAPPA_BOUND, KAPPA_BOUND),
    )
}

/// Step 2: fit (ρ, κ, γ) to the (min(Δ), |Δ_W|)-bucketed targets with the
/// step-1 recency parameters held fixed. Falls back to g ≡ 0 when the fit
/// yields nothing finite.
pub fn fit_frequency(
    buckets: &[BucketTarget],
    recency: &FitOutcome,
    window: u32,
) -> (f64, f64, f64) {
    if buckets.is_empty() || window == 0 {
        return (0.0, 0.0, 0.0);
    }
    let f_of = |m: u32| -> f64 {
        let decay = (-recency.lambda * (m as f64 - 1.0)).exp2();
        recency.alpha / (1.0 + recency.phi) * (decay + recency.phi)
    };
    // (x1 = n/W, x2 = 1/m, residual target, weight)
    let points: Vec<(f64, f64, f64, f64)> = buckets
        .iter()
        .map(|b| {
            (
                b.freq_in_window as f64 / window as f64,
                1.0 / b.min_delta as f64,
                b.target - f_of(b.min_delta),
                b.weight,
            )
        })
        .collect();

    let gamma0 = points
        .iter()
        .map(|p| p.2.abs())
        .fold(0.0f64, f64::max)
        .min(GAMMA_MAX);
    if gamma0 == 0.0 {
        return (0.0, 0.0, 0.0); // residuals all zero
    }

    let seed_all = linear_seed(&points);
    // Fit only strictly-unclipped points, treating |e| = γ0 as clipped.
    let unclipped: Vec<_> = points
        .iter()
        .copied()
        .filter(|p| p.2.abs() < gamma0 * (1.0 - 1e-12))
        .collect();
    let seed_unclipped = if unclipped.len() >= 2 {
        linear_seed(&unclipped)
    } else {
        seed_all
    };

    let starts = [
        [seed_unclipped.0, seed_unclipped.1, gamma0],
        [seed_all.0, seed_all.1, gamma0],
        [seed_all.0, seed_all.1, GAMMA_MAX],
        [0.0, 0.0, gamma0],
    ];
    let mut best: ([f64; 3], f64) = ([0.0, 0.0, 0.0], frequency_sse(&points, 0.0, 0.0, 0.0));
    for s in starts {
        let direct = frequency_sse(&points, s[0], s[1], s[2]);
        if direct < best.1 {
            best = (clamp_freq_params(s), direct);
        }
        let (p, sse) = nelder_mead(&points, s);
        if sse < best.1 {
            best = (p, sse);
        }
    }
    if !best.1.is_finite() {
        return (0.0, 0.0, 0.0);
    }
    (best.0[0], best.0[1], best.0[2])
}
