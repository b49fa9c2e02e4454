//! Collects whatever `restore`, `ablate` and `verify` left in the output
//! directory into one report, together with the resolved schedule.

use std::path::Path;

use nfc_core::analysis::theorems::TheoremReport;
use nfc_core::schedules::ContinuationState;
use serde::{Deserialize, Serialize};

use crate::commands::{resolved_schedule, Comparison, Summary};
use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{fmt_opt, read_json, table, write_json, write_text};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyStatus {
    pub passed: usize,
    pub failed: Vec<String>,
    pub max_violation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schedule: Vec<ContinuationState>,
    pub restore: Option<Summary>,
    pub ablation: Option<Comparison>,
    pub verify: Option<VerifyStatus>,
}

fn load_if_present<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.is_file() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn report(cfg: &RunConfig) -> Result<Report> {
    let out = &cfg.out;
    let verify = load_if_present::<Vec<TheoremReport>>(&out.join("verify/report.json"))?.map(|rs| VerifyStatus {
        passed: rs.iter().filter(|r| r.passed).count(),
        failed: rs.iter().filter(|r| !r.passed).map(|r| r.id.clone()).collect(),
        max_violation: rs.iter().map(|r| r.max_violation).fold(f64::NEG_INFINITY, f64::max),
    });
    let restore: Option<Summary> = load_if_present(&out.join("restore/summary.json"))?;
    // the schedule that actually ran, when there is one
    let schedule = match &restore {
        Some(r) => r.schedule.clone(),
        None => resolved_schedule(cfg, cfg.sigma_y)?,
    };
    let report = Report {
        schedule,
        restore,
        ablation: load_if_present(&out.join("ablate/comparison.json"))?,
        verify,
    };
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &report.to_text())?;
    Ok(report)
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(r) = &self.restore {
            s.push_str("== restore\n");
            s.push_str(&r.to_text());
            s.push('\n');
        }
        if let Some(a) = &self.ablation {
            s.push_str("== ablation\n");
            s.push_str(&a.to_text());
            s.push('\n');
        }
        if let Some(v) = &self.verify {
            s.push_str(&format!(
                "== verify\npassed {}  failed {:?}  max normalized violation {:.3e}\n\n",
                v.passed, v.failed, v.max_violation
            ));
        }
        let rows: Vec<Vec<String>> = self
            .schedule
            .iter()
            .map(|st| {
                vec![
                    st.k.to_string(),
                    format!("{:.6}", st.sigma),
                    format!("{:.4}", st.omega_frac),
                    format!("{:.4}", st.lambda),
                    format!("{:.5}", st.tau),
                    format!("{:.4}", st.w_detail),
                ]
            })
            .collect();
        s.push_str("== schedule\n");
        s.push_str(&table(
            &["k", "sigma", "omega_frac", "lambda", "tau", "w_detail"],
            &rows,
        ));
        s.push_str(&format!("steps {}\n", fmt_opt(Some(self.schedule.len() as f64), 0)));
        s
    }
}
