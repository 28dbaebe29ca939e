//! Convergence in `H` and decay in `k`, measured against a fine-scale
//! reference solution computed once per study.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lod::{
    error_norms, lod_solve, solve_coarse_fem, solve_reference, CorrectorOptions, CorrectorStats, GalerkinSolution,
    LodOptions,
    ReferenceMethod,
};
use crate::problem::Problem;
use crate::solvers::SolveReport;

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub reference: ReferenceMethod,
    pub reference_tol: f64,
    pub corrector: CorrectorOptions,
    /// Add plain coarse finite element rows.
    pub fem_baseline: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            reference: ReferenceMethod::Pcg,
            reference_tol: 1e-10,
            corrector: CorrectorOptions::default(),
            fem_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub method: &'static str,
    pub h: f64,
    pub k: Option<usize>,
    pub coarse_dofs: usize,
    pub energy_error: f64,
    pub mass_error: f64,
    /// Wall time of the solve; not part of reproducible output.
    #[serde(skip)]
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub method: &'static str,
    pub norm: &'static str,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub fits: Vec<SlopeFit>,
    pub reference: SolveReport,
    pub warnings: Vec<String>,
}

/// Least-squares slope of `log y` against `log x`; `None` for fewer than
/// two usable points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Geometric mean of `e[i+1]/e[i]` over the steps taken while `e[i]` is
/// still at or above `floor`.
pub fn decay_ratio(errors: &[f64], floor: f64) -> Option<f64> {
    let mut logs = Vec::new();
    for w in errors.windows(2) {
        if w[0] < floor {
            break;
        }
        logs.push((w[1].max(f64::MIN_POSITIVE) / w[0]).ln());
    }
    if logs.is_empty() {
        return None;
    }
    Some((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

fn reference_solution(problem: &Problem, opts: &StudyOptions) -> Result<(Vec<f64>, SolveReport)> {
    let g = problem.boundary_values();
    solve_reference(
        problem.op.matrix(),
        &problem.load,
        problem.net.dirichlet_mask(),
        g.as_deref(),
        opts.reference,
        opts.reference_tol,
    )
}

/// LOD solution on mesh width `h` with localization `k`, lifting the
/// boundary data if there is any.
pub fn lod_on_mesh(
    problem: &Problem,
    h: f64,
    k: usize,
    corrector: CorrectorOptions,
    warnings: &mut Vec<String>,
) -> Result<(GalerkinSolution, CorrectorStats)> {
    let space = problem.coarse_space(h)?;
    warnings.extend(space.mesh().warnings.iter().cloned());
    let g = problem.lifting(&space);
    if let Some(g) = &g {
        let defect = space.lifting_defect(g)?;
        if defect > 1e-8 {
            warnings.push(format!("H = {h}: lifting is not a coarse function (defect {defect:.2e})"));
        }
        if let Some(exact) = problem.boundary_values() {
            let off = problem
                .net
                .dirichlet_nodes()
                .iter()
                .flat_map(|&x| (0..problem.n_comp()).map(move |c| c * problem.net.num_nodes() + x))
                .map(|i| (g[i] - exact[i]).abs())
                .fold(0.0f64, f64::max);
            if off > 1e-10 {
                warnings.push(format!("H = {h}: boundary data is not matched by its coarse lifting ({off:.2e})"));
            }
        }
    }
    let opts = LodOptions { k, corrector };
    let (sol, basis) = lod_solve(&problem.op, &space, &problem.load, g.as_deref(), &opts)?;
    Ok((sol, basis.stats().clone()))
}

/// Errors of LOD (and optionally coarse FEM) over a list of mesh widths.
pub fn convergence_study(problem: &Problem, hs: &[f64], k: usize, opts: &StudyOptions) -> Result<StudyOutput> {
    if hs.is_empty() {
        return Err(Error::InvalidInput("convergence study needs at least one H".into()));
    }
    let (u, reference) = reference_solution(problem, opts)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &h in hs {
        let start = Instant::now();
        let (sol, _) = lod_on_mesh(problem, h, k, opts.corrector, &mut warnings)?;
        let e = error_norms(&problem.op, &problem.mass, &u, &sol.u);
        rows.push(StudyRow {
            method: "lod",
            h,
            k: Some(k),
            coarse_dofs: sol.reduced_dim,
            energy_error: e.energy_rel,
            mass_error: e.mass_rel,
            time_s: start.elapsed().as_secs_f64(),
        });
        if opts.fem_baseline {
            let start = Instant::now();
            let space = problem.coarse_space(h)?;
            let g = problem.lifting(&space);
            let sol = solve_coarse_fem(&problem.op, &space, &problem.load, g.as_deref())?;
            let e = error_norms(&problem.op, &problem.mass, &u, &sol.u);
            rows.push(StudyRow {
                method: "fem",
                h,
                k: None,
                coarse_dofs: sol.reduced_dim,
                energy_error: e.energy_rel,
                mass_error: e.mass_rel,
                time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    let mut fits = Vec::new();
    for method in ["lod", "fem"] {
        let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.method == method).collect();
        let h: Vec<f64> = sel.iter().map(|r| r.h).collect();
        for (norm, vals) in [
            ("energy", sel.iter().map(|r| r.energy_error).collect::<Vec<_>>()),
            ("mass", sel.iter().map(|r| r.mass_error).collect()),
        ] {
            if let Some(slope) = loglog_slope(&h, &vals) {
                fits.push(SlopeFit { method, norm, slope });
            }
        }
    }
    Ok(StudyOutput {
        rows,
        fits,
        reference,
        warnings,
    })
}

/// Errors of LOD at fixed `h` for each localization parameter in `ks`.
pub fn decay_study(problem: &Problem, h: f64, ks: &[usize], opts: &StudyOptions) -> Result<StudyOutput> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("decay study needs at least one k".into()));
    }
    let (u, reference) = reference_solution(problem, opts)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &k in ks {
        let start = Instant::now();
        let (sol, _) = lod_on_mesh(problem, h, k, opts.corrector, &mut warnings)?;
        let e = error_norms(&problem.op, &problem.mass, &u, &sol.u);
        rows.push(StudyRow {
            method: "lod",
            h,
            k: Some(k),
            coarse_dofs: sol.reduced_dim,
            energy_error: e.energy_rel,
            mass_error: e.mass_rel,
            time_s: start.elapsed().as_secs_f64(),
        });
    }
    warnings.dedup();
    Ok(StudyOutput {
        rows,
        fits: Vec::new(),
        reference,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn decay_ratio_stops_at_floor() {
        let e = [1e-1, 1e-2, 1e-4, 1e-4];
        // Steps from 1e-1 and 1e-2 count; 1e-4 is below the floor.
        let r = decay_ratio(&e, 1e-3).unwrap();
        assert!((r - 1e-1_f64.sqrt().powi(3)).abs() < 1e-12);
        assert!(decay_ratio(&[1e-5, 1e-6], 1e-3).is_none());
    }
}
