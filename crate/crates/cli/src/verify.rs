use nfc_core::analysis::theorems::{run_theorem, TheoremReport, VerifyConfig, THEOREM_IDS};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{create_dir, table, write_json, write_text};

pub fn verify(cfg: &RunConfig, overrides: &[(String, f64)]) -> Result<Vec<TheoremReport>> {
    let mut vcfg: VerifyConfig = cfg.verify.clone();
    for (name, value) in overrides {
        vcfg.tolerances.set(name, *value)?;
    }
    let reports: Vec<TheoremReport> = THEOREM_IDS
        .par_iter()
        .map(|id| run_theorem(id, &vcfg))
        .collect::<nfc_core::Result<_>>()?;
    let dir = cfg.out.join("verify");
    create_dir(&dir)?;
    write_json(&dir.join("report.json"), &reports)?;
    write_json(&dir.join("config.json"), &vcfg)?;
    write_text(&dir.join("report.txt"), &reports_text(&reports))?;
    Ok(reports)
}

pub fn reports_text(reports: &[TheoremReport]) -> String {
    let mut rows = Vec::new();
    for r in reports {
        rows.push(vec![
            r.id.clone(),
            if r.passed { "pass" } else { "FAIL" }.to_string(),
            r.instances.to_string(),
            format!("{:.3e}", r.max_violation),
        ]);
        for c in &r.checks {
            rows.push(vec![
                format!("  {}", c.name),
                if c.passed { "pass" } else { "FAIL" }.to_string(),
                String::new(),
                format!("{:.3e} / {:.1e}", c.violation, c.tolerance),
            ]);
        }
    }
    table(&["theorem", "status", "instances", "max_violation"], &rows)
}
