use giet::affine::ExtractOptions;
use giet::cocycle;
use giet::combinatorics::{self, Permutation, PermutationJson};
use giet::giem::{self, RenormState};
use giet::rigidity::{self, Outcome, Pair, TheoremOptions};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{dec, dec_float, Output};

/// Parameters shared by all commands after flags and config are merged.
pub struct Params {
    pub depth: Option<usize>,
    pub prec: u32,
    pub seed: u64,
    pub linearize: bool,
}

fn letter_columns(pi: &Permutation, prefix: &str) -> Vec<String> {
    pi.alphabet().iter().map(|a| format!("{prefix}_{a}")).collect()
}

fn extract_options(c: &ExperimentConfig) -> ExtractOptions {
    let d = ExtractOptions::default();
    ExtractOptions {
        depth: c.extract_depth.unwrap_or(d.depth),
        lookahead: c.lookahead.unwrap_or(d.lookahead),
        nodes: c.nodes.unwrap_or(d.nodes),
        nonlinearity_tol: c.tolerances.nonlinearity,
        cauchy_tol: c.tolerances.cauchy,
        ..d
    }
}

fn theorem_options(c: &ExperimentConfig, p: &Params) -> TheoremOptions {
    TheoremOptions {
        depth: p.depth.unwrap_or(35),
        extract: extract_options(c),
        linearize: p.linearize,
        model_depth: c.model_depth.unwrap_or(TheoremOptions::default().model_depth),
        ..TheoremOptions::default()
    }
}

fn trace_row(s: &RenormState, nodes: usize) -> Result<Vec<String>, CliError> {
    let step = s.seq.steps.last().expect("level ≥ 1");
    let mut row = vec![
        s.level.to_string(),
        step.eps.to_string(),
        step.pi.name(step.winner).to_string(),
        step.pi.name(step.loser).to_string(),
        dec_float(&s.length),
    ];
    row.extend(s.q.iter().map(|q| q.to_string()));
    row.extend((0..s.d()).map(|a| dec_float(&s.dom_len(a))));
    row.extend(giem::mean_log_derivative(s, nodes)?.into_iter().map(dec));
    Ok(row)
}

pub fn renormalize(c: &ExperimentConfig, p: &Params, out: &mut Output) -> Result<(), CliError> {
    let f = c.map(0, p.prec)?;
    let depth = p.depth.unwrap_or(30);
    let nodes = c.nodes.unwrap_or(32);
    let mut header: Vec<String> = ["n", "eps", "winner", "loser", "|I^n|"].iter().map(|s| s.to_string()).collect();
    header.extend(letter_columns(f.pi(), "q"));
    header.extend(letter_columns(f.pi(), "lambda"));
    header.extend(letter_columns(f.pi(), "L"));
    let mut rows = Vec::with_capacity(depth);
    let mut s = RenormState::initial(f);
    let result = (|| -> Result<(), CliError> {
        for _ in 0..depth {
            s = giem::rv_step(&s)?;
            rows.push(trace_row(&s, nodes)?);
        }
        Ok(())
    })();
    // A partial trace is still written when renormalization stops early.
    out.csv("trace.csv", &header, &rows)?;
    result
}

#[derive(Serialize)]
struct ModelFile<'a> {
    model: &'a giet::affine::AffineIem,
    omega: &'a [f64],
    normalization_residual: f64,
    mean_nonlinearity: f64,
    k_bounded: Option<usize>,
}

pub fn affine_model(c: &ExperimentConfig, p: &Params, out: &mut Output) -> Result<(), CliError> {
    let f = c.map(0, p.prec)?;
    let opts = theorem_options(c, p);
    let run = rigidity::theorem_one(&f, &opts)?;
    let r = &run.report;
    out.json(
        "model.json",
        &ModelFile {
            model: &r.model,
            omega: &r.extraction.omega,
            normalization_residual: r.normalization_residual,
            mean_nonlinearity: r.extraction.mean_nonlinearity,
            k_bounded: r.extraction.k_bounded,
        },
    )?;
    let rows: Vec<Vec<String>> = r
        .lengths
        .trace
        .iter()
        .map(|t| vec![t.depth.to_string(), dec(t.d_p_gap), dec(t.kappa_window), dec(t.residual_normalization)])
        .collect();
    let header = ["depth", "d_p_gap", "kappa_window", "residual_normalization"].map(String::from);
    out.csv("model_trace.csv", &header, &rows)?;
    out.series("distance.csv", &run.t1.distance.series)?;
    out.series("slope_increments.csv", &r.extraction.increments)?;
    out.series("slope_residuals.csv", &r.extraction.residuals)?;
    out.json("report.json", &json!({ "theorem_1": run.t1 }))?;
    Ok(())
}

#[derive(Serialize)]
struct RigidityFile {
    theorems: rigidity::TheoremReport,
    pair_depth: usize,
    table_depth: usize,
    table_points: usize,
    table_max_gap: f64,
    refinement_defect: f64,
    c8: Outcome<rigidity::C8Estimate>,
    dh: Outcome<rigidity::DhReport>,
    psi_increment_fit: Outcome<rigidity::RateFit>,
}

pub fn rigidity(c: &ExperimentConfig, p: &Params, out: &mut Output) -> Result<(), CliError> {
    let f = c.map(0, p.prec)?;
    let g = c.map(1, p.prec)?;
    let opts = theorem_options(c, p);
    let table_depth = c.table_depth.unwrap_or(25);
    let pair = Pair::until_length(
        &f,
        &g,
        opts.depth.max(table_depth),
        c.tolerances.enclosure_length,
        opts.depth.max(table_depth) + 400,
    )?;
    let theorems = rigidity::theorem_checks(&f, Some(&g), &opts);
    let table = rigidity::build_conjugacy(&pair, table_depth)?;
    let c8 = rigidity::c8_estimate(&pair, pair.depth(), c.tolerances.c8_spread);
    let samples = rigidity::sample_points(&table, c.samples.unwrap_or(50), p.seed, pair.prec());
    let dh = match &c8 {
        Ok(e) => rigidity::dh_check(&pair, &table, &samples, e.c8, table_depth).map_err(|e| e.to_string()),
        Err(e) => Err(format!("no C8 estimate: {e}")),
    };
    let increments = psi_increments(&pair, &samples, table_depth);
    let fit_tail: Vec<(usize, f64)> = increments.iter().cloned().filter(|(n, _)| *n >= opts.fit_from).collect();

    if let Some(Outcome::Ok(t3)) = &theorems.t3 {
        out.series("distance.csv", &t3.series)?;
    }
    if let Outcome::Ok(t1) = &theorems.t1 {
        out.series("distance_model.csv", &t1.distance.series)?;
    }
    out.series("psi_increments.csv", &increments)?;
    if let Ok(e) = &c8 {
        let spread: Vec<(usize, f64)> = e.levels.iter().map(|(n, _, s)| (*n, *s)).collect();
        out.series("c8_spread.csv", &spread)?;
    }
    if let Ok(r) = &dh {
        let header = ["x", "fd_slope", "psi", "predicted", "rel_dev"].map(String::from);
        let rows: Vec<Vec<String>> = r
            .samples
            .iter()
            .map(|s| vec![dec(s.x), dec(s.fd_slope), dec(s.psi), dec(s.predicted), dec(s.rel_dev)])
            .collect();
        out.csv("dh_samples.csv", &header, &rows)?;
    }
    if p.linearize {
        if let Some(Outcome::Ok(t2)) = &theorems.t2 {
            out.json("linearization.json", &json!({ "f": t2.strong_f, "g": t2.strong_g }))?;
        }
    }
    let file = RigidityFile {
        pair_depth: pair.depth(),
        table_depth,
        table_points: table.deepest().points.len(),
        table_max_gap: table.deepest().max_gap,
        refinement_defect: table.refinement_defect(),
        theorems,
        c8: c8.into(),
        dh: dh.into(),
        psi_increment_fit: rigidity::rate_fit(&fit_tail).into(),
    };
    out.json("report.json", &file)?;
    Ok(())
}

/// Largest ψ increment over the samples at each level, keeping levels where it is positive.
fn psi_increments(pair: &Pair, samples: &[rug::Float], depth: usize) -> Vec<(usize, f64)> {
    let mut worst = vec![0.0f64; depth];
    for x in samples {
        if let Ok(s) = rigidity::psi_series(pair, x, depth) {
            for (n, v) in s.increments {
                worst[n] = worst[n].max(v);
            }
        }
    }
    worst.into_iter().enumerate().filter(|(_, v)| *v > 0.0).collect()
}

pub fn cocycle_audit(c: &ExperimentConfig, p: &Params, out: &mut Output) -> Result<(), CliError> {
    let pi = c.permutation(p.prec)?;
    let genus = cocycle::genus(&pi);
    let class = combinatorics::rauzy_class(&pi);
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for q in &class {
        for eps in [0u8, 1] {
            let step = combinatorics::rauzy_move(q, eps)?;
            checked += 1;
            if let Err(e) = cocycle::check_intertwine(&step) {
                failures.push(json!({ "pi": PermutationJson::from(q), "eps": eps, "error": e.to_string() }));
            }
        }
    }
    let seq = match c.explicit_sequence(&pi)? {
        Some(s) => s,
        None => combinatorics::generate_k_bounded(&pi, p.depth.unwrap_or(60), c.k.unwrap_or(4), p.seed)?,
    };
    let hyper = if genus == 1 {
        Outcome::from(cocycle::hyperbolicity_probe(&seq, c.samples.unwrap_or(32), p.seed, seq.len().min(10) / 2))
    } else {
        Outcome::Failed(format!("genus {genus}; hyperbolicity needs genus one"))
    };
    let central = if seq.end() == seq.pi(0) && !seq.is_empty() {
        Some(Outcome::from(cocycle::psi_p(&seq).map(|cs| {
            let m = cocycle::cocycle_product(&seq, 0, seq.len());
            let basis = cs.basis();
            let fixed = basis.iter().all(|v| m.apply_q(v) == *v);
            json!({
                "basis": basis.iter().map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "fixed_by_loop": fixed,
            })
        })))
    } else {
        None
    };
    let product = cocycle::cocycle_product(&seq, 0, seq.len());
    out.json(
        "audit.json",
        &json!({
            "pi": PermutationJson::from(&pi),
            "genus": genus,
            "rauzy_class_size": class.len(),
            "intertwining": { "checked": checked, "failures": failures },
            "sequence": seq.types().iter().map(|e| json!({ "eps": e })).collect::<Vec<_>>(),
            "k_minimal": combinatorics::minimal_k(&seq, 64),
            "product": product.rows_as_strings(),
            "hyperbolicity": hyper,
            "central": central,
        }),
    )?;
    Ok(())
}
