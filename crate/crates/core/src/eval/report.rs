//! Per-run records, aggregates and their CSV / JSON / text forms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{detection_stats, match_detections, Matching, Summary};
use crate::error::{Error, Result};

/// One agent in one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub agent: String,
    /// Strongest batch detection, or the first online detection.
    pub tau_star: Option<u64>,
    /// Undiscounted sum of rewards over the scored episode.
    pub reward: f64,
    pub discounted_reward: f64,
    pub regret: Option<f64>,
    /// Undiscounted reward within each true segment.
    pub segment_rewards: Vec<f64>,
    pub detections: Vec<u64>,
    pub switches: Vec<u64>,
    pub q_tables: usize,
    pub q_bytes: usize,
}

/// Precision and recall at one window, pooled over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub window: u64,
    pub matching: Matching,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub runs: usize,
    pub reward: Summary,
    pub discounted_reward: Summary,
    /// Over the runs with a detection.
    pub tau_star: Option<Summary>,
    pub regret: Option<Summary>,
    pub windows: Vec<WindowScore>,
    /// Largest table count and storage seen in any run.
    pub q_tables: usize,
    pub q_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub seed: u64,
    pub changepoints: Vec<u64>,
    /// Rewards are negated costs; text tables print costs.
    pub reports_cost: bool,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<AgentSummary>,
}

impl MetricsReport {
    /// Aggregate `records`; `agents` fixes the order of the summaries.
    pub fn from_records(
        name: &str,
        seed: u64,
        changepoints: Vec<u64>,
        windows: &[u64],
        reports_cost: bool,
        agents: &[String],
        records: Vec<RunRecord>,
    ) -> Result<Self> {
        let summaries = agents
            .iter()
            .map(|agent| summarise(agent, &records, &changepoints, windows))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsReport {
            name: name.to_string(),
            seed,
            changepoints,
            reports_cost,
            records,
            summaries,
        })
    }

    pub fn summary(&self, agent: &str) -> Option<&AgentSummary> {
        self.summaries.iter().find(|s| s.agent == agent)
    }

    pub fn records_of<'a>(&'a self, agent: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.agent == agent)
    }

    /// One row per run and agent, a blank line, then the aggregate block.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record([
            "run",
            "seed",
            "agent",
            "tau_star",
            "reward",
            "discounted_reward",
            "regret",
            "detections",
        ])?;
        for r in &self.records {
            w.write_record([
                r.run.to_string(),
                r.seed.to_string(),
                r.agent.clone(),
                r.tau_star.map(|t| t.to_string()).unwrap_or_default(),
                r.reward.to_string(),
                r.discounted_reward.to_string(),
                r.regret.map(|x| x.to_string()).unwrap_or_default(),
                join(&r.detections),
            ])?;
        }
        w.write_record([""])?;
        w.write_record(["agent", "metric", "mean", "sd", "median", "n"])?;
        for s in &self.summaries {
            let mut stat = |metric: &str, v: &Summary| {
                w.write_record([
                    s.agent.clone(),
                    metric.to_string(),
                    v.mean.to_string(),
                    v.sd.to_string(),
                    v.median.to_string(),
                    v.n.to_string(),
                ])
            };
            stat("reward", &s.reward)?;
            stat("discounted_reward", &s.discounted_reward)?;
            if let Some(t) = &s.tau_star {
                stat("tau_star", t)?;
            }
            if let Some(r) = &s.regret {
                stat("regret", r)?;
            }
            for ws in &s.windows {
                for (metric, value) in [("precision", ws.precision), ("recall", ws.recall)] {
                    w.write_record([
                        s.agent.clone(),
                        format!("{metric}_w{}", ws.window),
                        value.to_string(),
                        String::new(),
                        String::new(),
                        s.runs.to_string(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::validation(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write `<name>.csv`, `<name>.json` and `<name>.txt` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem: String = self
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let files = [
            (dir.join(format!("{stem}.csv")), self.to_csv()?),
            (dir.join(format!("{stem}.json")), self.to_json()?),
            (dir.join(format!("{stem}.txt")), self.render_table()),
        ];
        let mut written = Vec::new();
        for (path, text) in files {
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Plain-text table with one row per agent. Columns without data for any
    /// agent are left out.
    pub fn render_table(&self) -> String {
        let sign = if self.reports_cost { -1.0 } else { 1.0 };
        let value = if self.reports_cost { "cost" } else { "reward" };
        let any_tau = self.summaries.iter().any(|s| s.tau_star.is_some());
        let any_regret = self.summaries.iter().any(|s| s.regret.is_some());
        let any_detector = self
            .records
            .iter()
            .any(|r| !r.detections.is_empty() || !r.switches.is_empty());
        let mut header = vec!["Agent".to_string(), format!("{value} mean ± SD"), format!("{value} median")];
        if any_tau {
            header.extend(["τ* mean".into(), "τ* SD".into(), "τ* median".into()]);
        }
        if any_regret {
            header.extend(["regret mean ± SD".into(), "regret median".into()]);
        }
        let windows: Vec<u64> = self.summaries.first().map_or(Vec::new(), |s| s.windows.iter().map(|w| w.window).collect());
        if any_detector && !self.changepoints.is_empty() {
            for w in &windows {
                header.extend([format!("precision W={w}"), format!("recall W={w}")]);
            }
        }
        let mut rows = vec![header];
        for s in &self.summaries {
            let r = &s.reward;
            let mut row = vec![
                s.agent.clone(),
                format!("{:.2} ± {:.2}", sign * r.mean, r.sd),
                format!("{:.2}", sign * r.median),
            ];
            if any_tau {
                match &s.tau_star {
                    Some(t) => row.extend([format!("{:.2}", t.mean), format!("{:.2}", t.sd), format!("{:.1}", t.median)]),
                    None => row.extend(["-".into(), "-".into(), "-".into()]),
                }
            }
            if any_regret {
                match &s.regret {
                    Some(g) => row.extend([format!("{:.2} ± {:.2}", g.mean, g.sd), format!("{:.2}", g.median)]),
                    None => row.extend(["-".into(), "-".into()]),
                }
            }
            if any_detector && !self.changepoints.is_empty() {
                for ws in &s.windows {
                    row.extend([format!("{:.4}", ws.precision), format!("{:.4}", ws.recall)]);
                }
            }
            rows.push(row);
        }
        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "{} ({} runs, seed {})", self.name, self.summaries.first().map_or(0, |s| s.runs), self.seed);
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    let pad = w - cell.chars().count();
                    if c == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (ncol - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }
}

fn join(epochs: &[u64]) -> String {
    epochs.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn summarise(agent: &str, records: &[RunRecord], truth: &[u64], windows: &[u64]) -> Result<AgentSummary> {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| r.agent == agent).collect();
    if mine.is_empty() {
        return Err(Error::validation(format!("no records for agent {agent}")));
    }
    let rewards: Vec<f64> = mine.iter().map(|r| r.reward).collect();
    let discounted: Vec<f64> = mine.iter().map(|r| r.discounted_reward).collect();
    let taus: Vec<f64> = mine.iter().filter_map(|r| r.tau_star).map(|t| t as f64).collect();
    let regrets: Vec<f64> = mine.iter().filter_map(|r| r.regret).collect();
    let windows = windows
        .iter()
        .map(|&w| {
            let matching = mine
                .iter()
                .map(|r| match_detections(&r.detections, truth, w))
                .fold(Matching::default(), Matching::merge);
            WindowScore {
                window: w,
                matching,
                precision: matching.precision(),
                recall: matching.recall(),
            }
        })
        .collect();
    Ok(AgentSummary {
        agent: agent.to_string(),
        runs: mine.len(),
        reward: detection_stats(&rewards)?,
        discounted_reward: detection_stats(&discounted)?,
        tau_star: if taus.is_empty() { None } else { Some(detection_stats(&taus)?) },
        regret: if regrets.is_empty() { None } else { Some(detection_stats(&regrets)?) },
        windows,
        q_tables: mine.iter().map(|r| r.q_tables).max().unwrap_or(0),
        q_bytes: mine.iter().map(|r| r.q_bytes).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(run: usize, agent: &str, reward: f64, detections: Vec<u64>) -> RunRecord {
        RunRecord {
            run,
            seed: run as u64,
            agent: agent.into(),
            tau_star: detections.first().copied(),
            reward,
            discounted_reward: reward / 2.0,
            regret: None,
            segment_rewards: vec![reward],
            detections,
            switches: Vec::new(),
            q_tables: 1,
            q_bytes: 200,
        }
    }

    #[test]
    fn single_run_aggregates_equal_the_run() {
        let r = MetricsReport::from_records("t", 0, vec![1000], &[100], false, &["A".into()], vec![record(0, "A", 5.0, vec![1010])])
            .unwrap();
        let s = &r.summaries[0];
        assert_eq!((s.reward.mean, s.reward.sd, s.reward.median), (5.0, 0.0, 5.0));
        assert_eq!(s.tau_star.unwrap().mean, 1010.0);
        assert_eq!((s.windows[0].precision, s.windows[0].recall), (1.0, 1.0));
    }

    #[test]
    fn csv_has_run_rows_then_aggregates() {
        let recs = vec![record(0, "A", 1.0, vec![]), record(1, "A", 3.0, vec![990, 1500])];
        let r = MetricsReport::from_records("t", 0, vec![1000], &[100], false, &["A".into()], recs).unwrap();
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "run,seed,agent,tau_star,reward,discounted_reward,regret,detections");
        assert_eq!(lines[2], "1,1,A,990,3,1.5,,990;1500");
        assert!(lines.contains(&"A,reward,2,1.4142135623730951,2,2"));
        assert!(lines.contains(&"A,precision_w100,0.5,,,2"));
    }

    #[test]
    fn cost_tables_negate() {
        let r = MetricsReport::from_records("t", 0, vec![], &[100], true, &["A".into()], vec![record(0, "A", -7.0, vec![])]).unwrap();
        assert!(r.render_table().contains("7.00 ± 0.00"));
    }
}
