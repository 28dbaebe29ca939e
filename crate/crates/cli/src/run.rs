//! Command implementations. Each produces its output file and a summary
//! object; wall times are collected separately and only ever printed.

use std::time::Instant;

use anyhow::Context;
use netlod_core::audit::{audit_network, generated_network_mu, interpolation_audit, MuMode};
use netlod_core::lod::{solve_reference, CoarseSpace, CorrectorOptions};
use netlod_core::mesh::CoarseMesh;
use netlod_core::netgen::{generate_fiber_network, tag_dirichlet_nodes, Face, GenTarget};
use netlod_core::operators::assemble_mass;
use netlod_core::problem::{BoundarySpec, Problem};
use netlod_core::study::{convergence_study, decay_ratio, decay_study, lod_on_mesh, StudyOptions, StudyOutput};
use netlod_core::SpatialNetwork;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{check_divides, generator_or_default, CommandKind, ExperimentConfig, Rational};
use crate::output::{num, opt_num, write_output, CsvTable};
use crate::UsageError;

/// Relative K-error below which decay steps no longer count.
pub const DECAY_FLOOR: f64 = 1e-3;

pub struct Outcome {
    pub summary: Value,
    pub lines: Vec<String>,
    pub timings: Vec<(String, f64)>,
}

impl Outcome {
    pub fn report(&self, json: bool, timings: bool) -> anyhow::Result<()> {
        if json {
            let mut obj = self.summary.clone();
            obj["ok"] = json!(true);
            if timings {
                obj["timings_s"] = self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            }
            println!("{}", serde_json::to_string(&obj)?);
        } else {
            for l in &self.lines {
                println!("{l}");
            }
            if timings {
                for (k, v) in &self.timings {
                    println!("time {k}: {v:.3} s");
                }
            }
        }
        Ok(())
    }
}

struct Loaded {
    net: SpatialNetwork,
    provenance: Value,
    generated: Option<Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load_network(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Loaded> {
    let mut provenance = cfg.provenance();
    if let Some(path) = &cfg.network.file {
        let bytes = std::fs::read(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| UsageError(format!("{} is not UTF-8", path.display())))?;
        let net = SpatialNetwork::from_json(&text)
            .map_err(|e| UsageError(format!("invalid network file {}: {e}", path.display())))?;
        provenance["network_sha256"] = json!(sha256_hex(&bytes));
        return Ok(Loaded {
            net,
            provenance,
            generated: None,
        });
    }
    let gen = cfg
        .network
        .generator
        .as_ref()
        .ok_or_else(|| UsageError("no network: pass --net FILE or generator flags (--density/--mass, --seed)".into()))?;
    let start = Instant::now();
    let (net, report) = generate_fiber_network(gen).context("generating network")?;
    timings.push(("generate".into(), start.elapsed().as_secs_f64()));
    Ok(Loaded {
        net,
        provenance,
        generated: Some(serde_json::to_value(&report)?),
    })
}

fn resolve_faces(faces: &[String], dim: usize) -> anyhow::Result<Vec<Face>> {
    let spec = BoundarySpec {
        faces: faces.to_vec(),
        ..BoundarySpec::default()
    };
    spec.resolve_faces(dim).map_err(|e| UsageError(e.to_string()).into())
}

fn write_if(cfg: &ExperimentConfig, contents: &str) -> anyhow::Result<Option<String>> {
    match &cfg.out {
        Some(p) => {
            write_output(p, contents)?;
            Ok(Some(p.display().to_string()))
        }
        None => Ok(None),
    }
}

fn problem(cfg: &ExperimentConfig, net: SpatialNetwork) -> anyhow::Result<Problem> {
    let mut p = Problem::new(net, cfg.problem.clone()).context("setting up the problem")?;
    p.strict_mesh = cfg.strict_mesh;
    Ok(p)
}

fn study_options(cfg: &ExperimentConfig) -> StudyOptions {
    StudyOptions {
        reference: cfg.reference.method,
        reference_tol: cfg.reference.tol,
        corrector: CorrectorOptions::default(),
        fem_baseline: cfg.fem_baseline,
    }
}

fn checked_hs(cfg: &ExperimentConfig, domain: &[f64]) -> anyhow::Result<Vec<f64>> {
    if cfg.h.is_empty() {
        return Err(UsageError("at least one H is required".into()).into());
    }
    for &h in &cfg.h {
        check_divides(h, domain)?;
    }
    Ok(cfg.h.iter().map(Rational::value).collect())
}

fn h_label(cfg: &ExperimentConfig, h: f64) -> String {
    cfg.h
        .iter()
        .find(|r| r.value() == h)
        .map(|r| r.to_string())
        .unwrap_or_else(|| num(h))
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let mut timings = Vec::new();
    let start = Instant::now();
    let mut out = match cfg.command {
        CommandKind::Generate => generate(cfg, &mut timings),
        CommandKind::Audit => audit(cfg, &mut timings),
        CommandKind::Solve => solve(cfg, &mut timings),
        CommandKind::Reference => reference(cfg, &mut timings),
        CommandKind::Convergence | CommandKind::Decay => study(cfg, &mut timings),
        CommandKind::InterpAudit => interp_audit(cfg, &mut timings),
    }?;
    out.timings = timings;
    out.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    Ok(out)
}

fn generate(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    let out_path = cfg
        .out
        .as_deref()
        .ok_or_else(|| UsageError("generate needs --out".into()))?;
    let loaded = load_network(cfg, timings)?;
    let faces = resolve_faces(&cfg.network.faces, loaded.net.dim())?;
    let (net, face_reports) = if faces.is_empty() {
        (loaded.net, Vec::new())
    } else {
        tag_dirichlet_nodes(loaded.net, &faces, None).context("tagging Dirichlet faces")?
    };
    let text = net.to_json_with(Some(loaded.provenance.clone()))?;
    write_output(out_path, &text)?;
    let summary = json!({
        "command": "generate",
        "out": out_path.display().to_string(),
        "nodes": net.num_nodes(),
        "edges": net.num_edges(),
        "dirichlet_nodes": net.dirichlet_nodes().len(),
        "total_length": net.total_length(),
        "max_edge_length": net.max_edge_length(),
        "generation": loaded.generated,
        "faces": face_reports,
        "provenance": loaded.provenance,
    });
    let lines = vec![format!(
        "generated {} nodes, {} edges, mass {:.4}, R0 {:.4e} -> {}",
        net.num_nodes(),
        net.num_edges(),
        net.total_length(),
        net.max_edge_length(),
        out_path.display()
    )];
    Ok(Outcome {
        summary,
        lines,
        timings: Vec::new(),
    })
}

fn audit(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    if !cfg.audit.generated_seeds.is_empty() {
        return generated_audit(cfg, timings);
    }
    let loaded = load_network(cfg, timings)?;
    let mut net = loaded.net;
    if cfg.audit.modes.contains(&MuMode::Friedrichs) {
        let faces = resolve_faces(&cfg.problem.boundary.faces, net.dim())?;
        if faces.is_empty() {
            return Err(UsageError("the friedrichs mode needs Dirichlet faces (--bc faces=...)".into()).into());
        }
        net = tag_dirichlet_nodes(net, &faces, None).context("tagging Dirichlet faces")?.0;
    }
    if cfg.audit.r.is_empty() {
        return Err(UsageError("audit needs at least one R".into()).into());
    }
    let start = Instant::now();
    let report = audit_network(&net, &cfg.audit.r, cfg.audit.samples, &cfg.audit.modes)?;
    timings.push(("audit".into(), start.elapsed().as_secs_f64()));

    let d = net.dim();
    let mut header = vec!["mode".to_string(), "R".to_string()];
    header.extend((1..=d).map(|a| format!("x{a}")));
    header.extend(["lambda2".to_string(), "inv_lambda2_over_R2".to_string()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = CsvTable::new(&header, loaded.provenance.clone());
    for est in &report.mu {
        for s in &est.samples {
            let mut row = vec![s.mode.name().to_string(), num(s.r)];
            row.extend(s.center.iter().map(|&c| num(c)));
            row.extend([num(s.lambda), num(s.inv_lambda_over_r2)]);
            table.row(row);
        }
    }
    table.note(format!("r0={} h_min={} total_mass={}", num(report.r0), num(report.h_min), num(report.total_mass)));
    for h in &report.homogeneity {
        table.note(format!(
            "homogeneity R={} boxes={} mean={} rho={} sigma={} empty={}",
            num(h.r),
            h.densities.len(),
            num(h.mean),
            num(h.rho),
            num(h.sigma),
            h.empty_boxes
        ));
    }
    let mut lines = vec![format!("R0 = {:.4e}, H >= {:.4e}", report.r0, report.h_min)];
    for est in &report.mu {
        let means: Vec<String> = est
            .mean_inv_lambda
            .iter()
            .map(|(r, m)| format!("{}:{}", num(*r), num(*m)))
            .collect();
        table.note(format!(
            "mu mode={} mu2={} slope={} samples={} failed={} mean_inv_lambda={}",
            est.mode.name(),
            num(est.mu2),
            opt_num(est.slope),
            est.samples.len(),
            est.failed.len(),
            means.join(";")
        ));
        for (r, c) in &est.failed {
            let c: Vec<String> = c.iter().map(|&v| num(v)).collect();
            table.note(format!("failed mode={} R={} center={}", est.mode.name(), num(*r), c.join(";")));
        }
        lines.push(format!(
            "{}: mu^2 = {:.4}, slope = {}, {} samples, {} failed connectivity",
            est.mode.name(),
            est.mu2,
            est.slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "n/a".into()),
            est.samples.len(),
            est.failed.len()
        ));
    }
    let written = write_if(cfg, &table.render())?;
    let summary = json!({
        "command": "audit",
        "out": written,
        "r0": report.r0,
        "h_min": report.h_min,
        "total_mass": report.total_mass,
        "homogeneity": report.homogeneity.iter().map(|h| json!({
            "r": h.r, "mean": h.mean, "rho": h.rho, "sigma": h.sigma, "empty_boxes": h.empty_boxes,
        })).collect::<Vec<_>>(),
        "mu": report.mu.iter().map(|m| json!({
            "mode": m.mode, "mu2": m.mu2, "slope": m.slope, "samples": m.samples.len(),
            "failed": m.failed.len(), "mean_inv_lambda": m.mean_inv_lambda,
        })).collect::<Vec<_>>(),
        "provenance": loaded.provenance,
    });
    Ok(Outcome {
        summary,
        lines,
        timings: Vec::new(),
    })
}

fn generated_audit(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    if cfg.network.file.is_some() {
        return Err(UsageError("--generated-seeds generates its own networks; drop --net".into()).into());
    }
    let gen = generator_or_default(cfg.network.generator.clone());
    let GenTarget::Density(density) = gen.target else {
        return Err(UsageError("--generated-seeds needs a density target (--density)".into()).into());
    };
    if cfg.audit.r.is_empty() {
        return Err(UsageError("audit needs at least one R".into()).into());
    }
    let provenance = cfg.provenance();
    let start = Instant::now();
    let sweep = generated_network_mu(&cfg.audit.r, gen.segment_length, density, &cfg.audit.generated_seeds)?;
    timings.push(("audit".into(), start.elapsed().as_secs_f64()));
    let mut table = CsvTable::new(&["mode", "R", "x1", "x2", "lambda2", "inv_lambda2_over_R2"], provenance.clone());
    for s in &sweep.samples {
        table.row(vec![
            "generated".into(),
            num(s.r),
            num(s.r),
            num(s.r),
            num(s.lambda),
            num(1.0 / (s.lambda * s.r * s.r)),
        ]);
    }
    for s in &sweep.samples {
        table.note(format!("sample R={} seed={} nodes={}", num(s.r), s.seed, s.nodes));
    }
    let means: Vec<String> = sweep
        .mean_inv_lambda
        .iter()
        .map(|(r, m)| format!("{}:{}", num(*r), num(*m)))
        .collect();
    table.note(format!(
        "mu mode=generated mu2={} mean_mu2={} slope={} samples={} mean_inv_lambda={}",
        num(sweep.mu2),
        num(sweep.mean_mu2),
        opt_num(sweep.slope),
        sweep.samples.len(),
        means.join(";")
    ));
    let written = write_if(cfg, &table.render())?;
    let lines = vec![format!(
        "generated: mu^2 = {:.4} (mean {:.4}), slope = {}, {} networks",
        sweep.mu2,
        sweep.mean_mu2,
        sweep.slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "n/a".into()),
        sweep.samples.len()
    )];
    Ok(Outcome {
        summary: json!({
            "command": "audit",
            "out": written,
            "mu": [{
                "mode": "generated", "mu2": sweep.mu2, "mean_mu2": sweep.mean_mu2, "slope": sweep.slope,
                "samples": sweep.samples.len(), "mean_inv_lambda": sweep.mean_inv_lambda,
            }],
            "provenance": provenance,
        }),
        lines,
        timings: Vec::new(),
    })
}

/// Per-node values: one array of components per node.
fn node_values(u: &[f64], n_nodes: usize, n_comp: usize) -> Vec<Vec<f64>> {
    (0..n_nodes)
        .map(|x| (0..n_comp).map(|c| u[c * n_nodes + x]).collect())
        .collect()
}

fn solution_json(p: &Problem, provenance: &Value, method: &str, u: &[f64], extra: Value) -> Value {
    let mut obj = json!({
        "schema": "netlod-solution v1",
        "method": method,
        "model": p.spec.model.model.name(),
        "n_nodes": p.net.num_nodes(),
        "n_comp": p.n_comp(),
        "values": node_values(u, p.net.num_nodes(), p.n_comp()),
    });
    if let (Some(o), Value::Object(e)) = (obj.as_object_mut(), extra) {
        o.extend(e);
    }
    obj["provenance"] = provenance.clone();
    obj
}

fn write_json(cfg: &ExperimentConfig, v: &Value) -> anyhow::Result<Option<String>> {
    match &cfg.out {
        Some(p) => {
            write_output(p, &(serde_json::to_string(v)? + "\n"))?;
            Ok(Some(p.display().to_string()))
        }
        None => Ok(None),
    }
}

fn solve(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    let h = cfg.single_h()?;
    let k = cfg.single_k()?;
    let loaded = load_network(cfg, timings)?;
    check_divides(h, loaded.net.domain())?;
    let p = problem(cfg, loaded.net)?;
    let mut warnings = Vec::new();
    let start = Instant::now();
    let (sol, stats) = lod_on_mesh(&p, h.value(), k, CorrectorOptions::default(), &mut warnings)?;
    timings.push(("lod".into(), start.elapsed().as_secs_f64()));
    let residuals = json!({
        "reduced_asymmetry": sol.asymmetry,
        "max_patch_residual": stats.max_residual,
    });
    let file = solution_json(
        &p,
        &loaded.provenance,
        "lod",
        &sol.u,
        json!({
            "H": h.to_string(),
            "k": k,
            "coarse_dofs": sol.reduced_dim,
            "residuals": residuals,
            "correctors": stats,
            "warnings": warnings,
        }),
    );
    let written = write_json(cfg, &file)?;
    let mut lines = vec![format!(
        "lod {} H = {h}, k = {k}: {} coarse dofs, {} patches (largest {} dofs)",
        p.spec.model.model.name(),
        sol.reduced_dim,
        stats.patches,
        stats.max_patch_dofs
    )];
    lines.extend(warnings.iter().map(|w| format!("warning: {w}")));
    let summary = json!({
        "command": "solve",
        "out": written,
        "H": h.to_string(),
        "k": k,
        "coarse_dofs": sol.reduced_dim,
        "residuals": residuals,
        "correctors": stats,
        "warnings": warnings,
        "provenance": loaded.provenance,
    });
    Ok(Outcome {
        summary,
        lines,
        timings: Vec::new(),
    })
}

fn reference(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    let loaded = load_network(cfg, timings)?;
    let p = problem(cfg, loaded.net)?;
    let g = p.boundary_values();
    let start = Instant::now();
    let (u, rep) = solve_reference(
        p.op.matrix(),
        &p.load,
        p.net.dirichlet_mask(),
        g.as_deref(),
        cfg.reference.method,
        cfg.reference.tol,
    )?;
    timings.push(("reference".into(), start.elapsed().as_secs_f64()));
    let solver = json!({
        "method": rep.method,
        "iterations": rep.iterations,
        "relative_residual": rep.relative_residual,
    });
    let file = solution_json(&p, &loaded.provenance, "reference", &u, json!({ "solver": solver }));
    let written = write_json(cfg, &file)?;
    let lines = vec![format!(
        "reference {} ({}): {} iterations, relative residual {:.3e}",
        p.spec.model.model.name(),
        rep.method,
        rep.iterations,
        rep.relative_residual
    )];
    Ok(Outcome {
        summary: json!({
            "command": "reference",
            "out": written,
            "dofs": u.len(),
            "solver": solver,
            "provenance": loaded.provenance,
        }),
        lines,
        timings: Vec::new(),
    })
}

fn study_table(cfg: &ExperimentConfig, out: &StudyOutput, provenance: &Value) -> CsvTable {
    let mut t = CsvTable::new(
        &["method", "H", "k", "coarse_dofs", "energy_error", "mass_error"],
        provenance.clone(),
    );
    for r in &out.rows {
        t.row(vec![
            r.method.to_string(),
            h_label(cfg, r.h),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.coarse_dofs.to_string(),
            num(r.energy_error),
            num(r.mass_error),
        ]);
    }
    for f in &out.fits {
        t.note(format!("fit method={} norm={} slope={}", f.method, f.norm, num(f.slope)));
    }
    t.note(format!(
        "reference method={} iterations={} relative_residual={}",
        out.reference.method,
        out.reference.iterations,
        num(out.reference.relative_residual)
    ));
    for w in &out.warnings {
        t.note(format!("warning {w}"));
    }
    t
}

fn study(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    let loaded = load_network(cfg, timings)?;
    let hs = checked_hs(cfg, loaded.net.domain())?;
    let p = problem(cfg, loaded.net)?;
    let opts = study_options(cfg);
    let start = Instant::now();
    let (out, name) = if cfg.command == CommandKind::Decay {
        if cfg.k.is_empty() || cfg.k.contains(&0) {
            return Err(UsageError("decay needs a list of k >= 1".into()).into());
        }
        (decay_study(&p, cfg.single_h()?.value(), &cfg.k, &opts)?, "decay")
    } else {
        let k = cfg.single_k()?;
        if k == 0 {
            return Err(UsageError("k must be at least 1".into()).into());
        }
        (convergence_study(&p, &hs, k, &opts)?, "convergence")
    };
    timings.push((name.into(), start.elapsed().as_secs_f64()));
    for r in &out.rows {
        let label = format!(
            "{} H={} k={}",
            r.method,
            h_label(cfg, r.h),
            r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into())
        );
        timings.push((label, r.time_s));
    }
    let mut table = study_table(cfg, &out, &loaded.provenance);
    let mut ratios = serde_json::Map::new();
    if cfg.command == CommandKind::Decay {
        let e: Vec<f64> = out.rows.iter().map(|r| r.energy_error).collect();
        let m: Vec<f64> = out.rows.iter().map(|r| r.mass_error).collect();
        for (norm, v) in [("energy", e), ("mass", m)] {
            let ratio = decay_ratio(&v, DECAY_FLOOR);
            table.note(format!("decay norm={norm} floor={} ratio={}", num(DECAY_FLOOR), opt_num(ratio)));
            ratios.insert(norm.into(), json!(ratio));
        }
    }
    let written = write_if(cfg, &table.render())?;
    let mut lines: Vec<String> = out
        .rows
        .iter()
        .map(|r| {
            format!(
                "{:<4} H = {:<5} k = {:<2} dofs = {:<6} K-error = {:.4e}  M-error = {:.4e}",
                r.method,
                h_label(cfg, r.h),
                r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
                r.coarse_dofs,
                r.energy_error,
                r.mass_error
            )
        })
        .collect();
    lines.extend(out.fits.iter().map(|f| format!("slope {} {}: {:.3}", f.method, f.norm, f.slope)));
    lines.extend(ratios.iter().map(|(k, v)| format!("decay ratio {k}: {v}")));
    lines.extend(out.warnings.iter().map(|w| format!("warning: {w}")));
    let summary = json!({
        "command": name,
        "out": written,
        "rows": out.rows,
        "fits": out.fits,
        "decay_ratio": if ratios.is_empty() { Value::Null } else { Value::Object(ratios) },
        "reference": {
            "method": out.reference.method,
            "iterations": out.reference.iterations,
            "relative_residual": out.reference.relative_residual,
        },
        "warnings": out.warnings,
        "provenance": loaded.provenance,
    });
    Ok(Outcome {
        summary,
        lines,
        timings: Vec::new(),
    })
}

fn interp_audit(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> anyhow::Result<Outcome> {
    let loaded = load_network(cfg, timings)?;
    let hs = checked_hs(cfg, loaded.net.domain())?;
    let faces = resolve_faces(&cfg.problem.boundary.faces, loaded.net.dim())?;
    let net = if faces.is_empty() {
        loaded.net
    } else {
        tag_dirichlet_nodes(loaded.net, &faces, None).context("tagging Dirichlet faces")?.0
    };
    let mass = assemble_mass(&net).diagonal();
    let d = net.dim() as f64;
    let mut table = CsvTable::new(
        &["H", "element", "nodes", "gram_condition", "max_psi_scaled"],
        loaded.provenance.clone(),
    );
    let mut audits = Vec::new();
    let start = Instant::now();
    for (&h, hr) in hs.iter().zip(&cfg.h) {
        let mesh = CoarseMesh::new(net.domain(), h, &faces, Some(net.max_edge_length()), cfg.strict_mesh)?;
        let space = CoarseSpace::new(&net, mesh, &mass)?;
        let qi = space.interp();
        let mut psi_max = vec![0.0f64; space.mesh().num_elements()];
        for (k, &t) in qi.assignment().iter().enumerate() {
            psi_max[t] = psi_max[t].max(qi.psi_norms()[k] * h.powf(d / 2.0));
        }
        for (e, info) in qi.gram_info(space.mesh(), &net)?.iter().enumerate() {
            table.row(vec![
                hr.to_string(),
                e.to_string(),
                info.nodes.to_string(),
                num(info.condition),
                num(psi_max[e]),
            ]);
        }
        let a = interpolation_audit(&space, cfg.interp_seed)?;
        table.note(format!(
            "summary H={hr} duality_error={} idempotency_error={} max_psi_scaled={} max_gram_condition={} min_element_nodes={}",
            num(a.duality_error),
            num(a.idempotency_error),
            num(a.max_psi_scaled),
            num(a.max_gram_condition),
            a.min_element_nodes
        ));
        audits.push((hr.to_string(), a));
    }
    timings.push(("interp-audit".into(), start.elapsed().as_secs_f64()));
    // Largest increase of the scaled dual norm from a coarser to a finer mesh.
    let scaled: Vec<f64> = audits.iter().map(|(_, a)| a.max_psi_scaled).collect();
    let mut growth = 1.0f64;
    for i in 0..scaled.len() {
        for j in i + 1..scaled.len() {
            growth = growth.max(scaled[j] / scaled[i]);
        }
    }
    table.note(format!("psi_growth={}", num(growth)));
    let written = write_if(cfg, &table.render())?;
    let mut lines: Vec<String> = audits
        .iter()
        .map(|(h, a)| {
            format!(
                "H = {h}: duality {:.2e}, idempotency {:.2e}, max |psi| H^(d/2) = {:.4}, max cond = {:.3e}",
                a.duality_error, a.idempotency_error, a.max_psi_scaled, a.max_gram_condition
            )
        })
        .collect();
    lines.push(format!("scaled dual norm growth across H: {growth:.3}"));
    let summary = json!({
        "command": "interp-audit",
        "out": written,
        "meshes": audits.iter().map(|(h, a)| json!({ "H": h, "audit": a })).collect::<Vec<_>>(),
        "psi_growth": growth,
        "provenance": loaded.provenance,
    });
    Ok(Outcome {
        summary,
        lines,
        timings: Vec::new(),
    })
}
