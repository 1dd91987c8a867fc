use std::fmt::Write as _;
use std::path::Path;

use abphase::scenario::{Convergence, RunReport, SweepReport};
use anyhow::Context;

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "-".to_string(), f)
}

pub fn table(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {} ({:?}, {:?} units)", r.scenario, r.kind, r.units);
    if let Some(x) = r.reference {
        let _ = writeln!(s, "reference {x:.12e}");
    }
    let _ = writeln!(
        s,
        "{:<24} {:>20} {:>16} {:>11} {:>10} {:>10}  converged",
        "method", "value", "normalized", "error", "evals", "wall ms"
    );
    for o in &r.outcomes {
        let _ = write!(
            s,
            "{:<24} {:>20} {:>16} {:>11} {:>10} {:>10.1}  {}",
            o.method,
            opt(o.value, |v| format!("{v:.12e}")),
            opt(o.normalized, |v| format!("{v:.10}")),
            opt(o.error_estimate, |v| format!("{v:.2e}")),
            o.n_evaluations,
            o.wall_ms,
            if o.converged { "yes" } else { "NO" },
        );
        if let Some(e) = &o.error {
            let _ = write!(s, "  ({e})");
        }
        s.push('\n');
    }
    if !r.deviations.is_empty() {
        s.push_str("deviations\n");
        for d in &r.deviations {
            let _ = writeln!(s, "  {:<24} {:<24} {:.3e}", d.a, d.b, d.value);
        }
    }
    if let Some(d) = &r.diagnostics {
        s.push_str("diagnostics\n");
        match (d.self_term, &d.self_term_error) {
            (Some(v), _) => {
                let _ = writeln!(s, "  self term                {v:.6e} rad");
            }
            (None, Some(e)) => {
                let _ = writeln!(s, "  self term                unavailable ({e})");
            }
            _ => {}
        }
        if let Some(sh) = &d.shell {
            let _ = writeln!(s, "  seed disk radius         {:.6}", sh.seed_disk_radius);
            let _ = writeln!(s, "  seed flux                {:.9e}", sh.seed_flux);
            let _ = writeln!(s, "  linked flux              {:.9e}", sh.linked_flux);
            let _ = writeln!(s, "  unclassified flux        {:.3e}", sh.unclassified_flux);
            let _ = writeln!(s, "  boundary flux            {:.3e}", sh.boundary_flux);
            let _ = writeln!(s, "  lines traced             {}", sh.lines_traced);
            let _ = writeln!(s, "  cells closed / open      {} / {}", sh.cells_closed, sh.cells_open);
            let _ = writeln!(s, "  max closure gap          {:.3e}", sh.max_closure_gap);
            let _ = writeln!(s, "  max arclength            {:.3}", sh.max_arclength);
            let hist: Vec<String> = sh.linking_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let _ = writeln!(s, "  linking histogram        {}", hist.join(" "));
        }
    }
    s
}

pub fn sweep_table(sw: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sweep {} over {}", sw.scenario, sw.parameter);
    for row in &sw.rows {
        let _ = writeln!(s, "\n{} = {}", sw.parameter, row.value);
        match (&row.report, &row.error) {
            (Some(r), _) => s.push_str(&table(r)),
            (None, Some(e)) => {
                let _ = writeln!(s, "failed: {e}");
            }
            _ => {}
        }
    }
    s.push_str("\nconvergence\n");
    for c in &sw.convergence {
        let devs: Vec<String> = c.deviations.iter().map(|d| opt(*d, |v| format!("{v:.3e}"))).collect();
        let _ = writeln!(
            s,
            "  {:<24} deviation [{}] monotone {}  error estimates monotone {}",
            c.method,
            devs.join(", "),
            c.deviation_monotone,
            c.error_monotone
        );
    }
    s
}

pub fn write_csv(path: &Path, rows: &[(String, &RunReport)], convergence: &[Convergence]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["scenario", "method", "phase_rad", "phase_normalized", "err_estimate", "n_evals", "wall_ms", "converged"])?;
    let cell = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
    for (name, r) in rows {
        for o in &r.outcomes {
            w.write_record([
                name.clone(),
                o.method.clone(),
                cell(o.value),
                cell(o.normalized),
                cell(o.error_estimate),
                o.n_evaluations.to_string(),
                format!("{:.3}", o.wall_ms),
                o.converged.to_string(),
            ])?;
        }
    }
    w.flush()?;
    drop(w);
    if !convergence.is_empty() {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
        for c in convergence {
            let devs: Vec<String> = c.deviations.iter().map(|d| cell(*d)).collect();
            writeln!(
                f,
                "# convergence {}: deviation_monotone={} error_monotone={} deviations={}",
                c.method,
                c.deviation_monotone,
                c.error_monotone,
                devs.join(";")
            )?;
        }
    }
    Ok(())
}
