//! Run records and their file formats.
//!
//! A [`RunRecord`] is the single artifact of an experiment run: metrics with
//! standard errors, pass/fail gates, plottable curves, the timeout rate, and
//! a result hash. Rerunning with an identical config and seed reproduces the
//! record bit-for-bit (the wall time is excluded from the hash).
//!
//! CSV contract: '.' decimal separator, '\n' line endings, one header row;
//! floats are written in Rust's shortest round-trip form.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex_digest, ConfigError, ExperimentConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A plottable data series.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything produced by one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub graph_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub metrics: Vec<Metric>,
    pub gates: Vec<Gate>,
    pub curves: Vec<Curve>,
    pub timeout_rate: f64,
    pub wall_secs: f64,
    /// Hash over all reproducible fields (everything except `wall_secs`).
    pub result_hash: String,
}

impl RunRecord {
    pub fn assemble(
        cfg: &ExperimentConfig,
        metrics: Vec<Metric>,
        gates: Vec<Gate>,
        curves: Vec<Curve>,
        timeout_rate: f64,
        wall_secs: f64,
    ) -> RunRecord {
        let mut record = RunRecord {
            experiment: cfg.experiment.clone(),
            graph_id: cfg.graph_id(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            metrics,
            gates,
            curves,
            timeout_rate,
            wall_secs,
            result_hash: String::new(),
        };
        record.result_hash = record.compute_result_hash();
        record
    }

    fn compute_result_hash(&self) -> String {
        let mut clone = self.clone();
        clone.wall_secs = 0.0;
        clone.result_hash = String::new();
        let canonical = serde_json::to_string(&clone).expect("record serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex_digest(&h.finalize())
    }

    pub fn all_gates_pass(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    /// The flat metrics CSV with the fixed column contract
    /// `(seed, graph_id, a, param, value, stderr)`.
    pub fn metrics_csv(&self, process_scalar: Option<f64>) -> String {
        let mut out = String::from("seed,graph_id,a,param,value,stderr\n");
        let a = process_scalar.map(|x| fmt_f64(x)).unwrap_or_default();
        for m in &self.metrics {
            let se = m.stderr.map(fmt_f64).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.seed,
                self.graph_id,
                a,
                m.name,
                fmt_f64(m.value),
                se
            ));
        }
        out
    }

    /// Writes the record JSON, the metrics CSV, and one CSV per curve into
    /// `dir`. Returns the written paths.
    pub fn emit_plotdata(
        &self,
        dir: &Path,
        process_scalar: Option<f64>,
    ) -> Result<Vec<std::path::PathBuf>, ConfigError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let base = format!("{}-{}-{}", self.experiment, self.graph_id_slug(), self.seed);

        let record_path = dir.join(format!("{base}.json"));
        std::fs::File::create(&record_path)?
            .write_all(self.to_json_string().as_bytes())?;
        written.push(record_path);

        let metrics_path = dir.join(format!("{base}-metrics.csv"));
        std::fs::File::create(&metrics_path)?
            .write_all(self.metrics_csv(process_scalar).as_bytes())?;
        written.push(metrics_path);

        for curve in &self.curves {
            let mut csv = curve.columns.join(",");
            csv.push('\n');
            for row in &curve.rows {
                let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                csv.push_str(&cells.join(","));
                csv.push('\n');
            }
            let path = dir.join(format!("{base}-{}.csv", curve.name));
            std::fs::File::create(&path)?.write_all(csv.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }

    fn graph_id_slug(&self) -> String {
        self.graph_id
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect()
    }
}

fn fmt_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_cfg() -> ExperimentConfig {
        ExperimentConfig::from_json_str(
            r#"{"experiment": "polya", "graph": {"path": {"n": 3}}, "seed": 9}"#,
        )
        .unwrap()
    }

    #[test]
    fn result_hash_ignores_wall_time() {
        let cfg = dummy_cfg();
        let m = vec![Metric { name: "x".into(), value: 1.5, stderr: None }];
        let a = RunRecord::assemble(&cfg, m.clone(), vec![], vec![], 0.0, 1.0);
        let b = RunRecord::assemble(&cfg, m, vec![], vec![], 0.0, 99.0);
        assert_eq!(a.result_hash, b.result_hash);

        let c = RunRecord::assemble(
            &cfg,
            vec![Metric { name: "x".into(), value: 1.6, stderr: None }],
            vec![],
            vec![],
            0.0,
            1.0,
        );
        assert_ne!(a.result_hash, c.result_hash);
    }

    #[test]
    fn metrics_csv_contract() {
        let cfg = dummy_cfg();
        let rec = RunRecord::assemble(
            &cfg,
            vec![Metric { name: "ks_p".into(), value: 0.25, stderr: Some(0.001) }],
            vec![],
            vec![],
            0.0,
            0.0,
        );
        let csv = rec.metrics_csv(Some(2.0));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "seed,graph_id,a,param,value,stderr");
        assert_eq!(lines.next().unwrap(), "9,path(3),2.0,ks_p,0.25,0.001");
    }

    #[test]
    fn emits_curves_to_files() {
        let cfg = dummy_cfg();
        let rec = RunRecord::assemble(
            &cfg,
            vec![],
            vec![],
            vec![Curve {
                name: "survival".into(),
                columns: vec!["m".into(), "p".into()],
                rows: vec![vec![1.0, 0.5], vec![2.0, 0.25]],
            }],
            0.0,
            0.0,
        );
        let dir = tempfile::tempdir().unwrap();
        let written = rec.emit_plotdata(dir.path(), None).unwrap();
        assert_eq!(written.len(), 3);
        let csv = std::fs::read_to_string(&written[2]).unwrap();
        assert_eq!(csv, "m,p\n1.0,0.5\n2.0,0.25\n");
    }
}
