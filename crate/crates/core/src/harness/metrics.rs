use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One epoch's exported measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Greedy final-goal success rate without demonstrations.
    pub final_success: f64,
    /// Latest per-step success rates from demonstrated test episodes.
    pub step_success: Vec<f64>,
    /// Exploration parameters in force during the epoch, per task step.
    pub eps: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Cumulative environment steps at the end of the epoch.
    pub env_steps: u64,
}

/// Per-run log: exported rows plus diagnostics that stay out of the CSV so
/// that it is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub setting: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    /// Polyak-averaged per-step success after each epoch's evaluation.
    pub averaged_success: Vec<Vec<f64>>,
    pub wall_secs: Vec<f64>,
    /// Per-step fraction of the epoch's training episodes (exploring, with
    /// demonstrations where scheduled) that reached each subgoal.
    pub train_success: Vec<Vec<f64>>,
}

impl MetricsLog {
    pub fn new(setting: impl Into<String>, seed: u64) -> Self {
        Self {
            setting: setting.into(),
            seed,
            rows: Vec::new(),
            averaged_success: Vec::new(),
            wall_secs: Vec::new(),
            train_success: Vec::new(),
        }
    }

    pub fn final_curve(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.final_success).collect()
    }

    pub fn num_steps(&self) -> Option<usize> {
        self.rows.first().map(|r| r.step_success.len())
    }
}

pub fn csv_header(num_steps: usize) -> Vec<String> {
    let mut h: Vec<String> = ["setting", "seed", "epoch", "final_success"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["step_success", "eps", "sigma"] {
        h.extend((0..num_steps).map(|i| format!("{prefix}_{i}")));
    }
    h.push("env_steps".into());
    h
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes every row of every log. All logs must share the task-step count.
/// Floats use the shortest representation that parses back exactly.
pub fn write_csv<W: Write>(logs: &[MetricsLog], w: W) -> Result<()> {
    let n = logs
        .iter()
        .find_map(MetricsLog::num_steps)
        .ok_or_else(|| Error::invalid("no metrics rows to export"))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(n)).map_err(csv_err)?;
    for log in logs {
        for r in &log.rows {
            if r.step_success.len() != n || r.eps.len() != n || r.sigma.len() != n {
                return Err(Error::shape("metrics rows disagree on the task-step count"));
            }
            let mut rec = vec![
                log.setting.clone(),
                log.seed.to_string(),
                r.epoch.to_string(),
                r.final_success.to_string(),
            ];
            for v in r.step_success.iter().chain(&r.eps).chain(&r.sigma) {
                rec.push(v.to_string());
            }
            rec.push(r.env_steps.to_string());
            out.write_record(&rec).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses a file written by [`write_csv`], regrouping rows into logs in
/// order of first appearance.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<MetricsLog>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    if header.len() < 5 || !(header.len() - 5).is_multiple_of(3) {
        return Err(Error::invalid("unrecognized metrics header"));
    }
    let n = (header.len() - 5) / 3;
    if header != csv_header(n) {
        return Err(Error::invalid("unrecognized metrics header"));
    }
    let bad = |what: &str, v: &str| Error::invalid(format!("bad {what} value {v:?} in metrics"));
    let float = |v: &str| v.parse::<f64>().map_err(|_| bad("numeric", v));
    let mut logs: Vec<MetricsLog> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let setting = &rec[0];
        let seed: u64 = rec[1].parse().map_err(|_| bad("seed", &rec[1]))?;
        let floats = (4..4 + 3 * n)
            .map(|i| float(&rec[i]))
            .collect::<Result<Vec<_>>>()?;
        let row = MetricsRow {
            epoch: rec[2].parse().map_err(|_| bad("epoch", &rec[2]))?,
            final_success: float(&rec[3])?,
            step_success: floats[..n].to_vec(),
            eps: floats[n..2 * n].to_vec(),
            sigma: floats[2 * n..].to_vec(),
            env_steps: rec[4 + 3 * n]
                .parse()
                .map_err(|_| bad("env_steps", &rec[4 + 3 * n]))?,
        };
        match logs
            .iter_mut()
            .find(|l| l.setting == setting && l.seed == seed)
        {
            Some(l) => l.rows.push(row),
            None => {
                let mut l = MetricsLog::new(setting, seed);
                l.rows.push(row);
                logs.push(l);
            }
        }
    }
    Ok(logs)
}

/// Across-seed mean and sample standard deviation of final-goal success
/// for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub setting: String,
    pub seeds: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Curve {
    pub fn peak(&self) -> f64 {
        self.mean.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    /// Mean of the curve, an area under it normalized by length.
    pub fn area(&self) -> f64 {
        if self.mean.is_empty() {
            0.0
        } else {
            self.mean.iter().sum::<f64>() / self.mean.len() as f64
        }
    }

    /// Average across-seed std over the last `fraction` of epochs (at least
    /// one epoch).
    pub fn tail_std(&self, fraction: f64) -> f64 {
        let n = self.std.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        self.std[n - k..].iter().sum::<f64>() / k as f64
    }
}

/// Groups logs by setting (order of first appearance) and averages their
/// curves. Runs of one setting must have equal lengths.
pub fn aggregate(logs: &[MetricsLog]) -> Result<Vec<Curve>> {
    let mut order: Vec<&str> = Vec::new();
    for l in logs {
        if !order.contains(&l.setting.as_str()) {
            order.push(&l.setting);
        }
    }
    order
        .into_iter()
        .map(|setting| {
            let runs: Vec<Vec<f64>> = logs
                .iter()
                .filter(|l| l.setting == setting)
                .map(MetricsLog::final_curve)
                .collect();
            let len = runs[0].len();
            if runs.iter().any(|r| r.len() != len) {
                return Err(Error::shape(format!(
                    "runs of {setting:?} differ in length"
                )));
            }
            let (mean, std) = (0..len)
                .map(|e| mean_std(&runs.iter().map(|r| r[e]).collect::<Vec<_>>()))
                .unzip();
            Ok(Curve {
                setting: setting.to_string(),
                seeds: runs.len(),
                mean,
                std,
            })
        })
        .collect()
}

/// Mean and sample (n - 1) standard deviation; the std of one value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
