//! Evaluation reports: per-instance CSV plus an aggregate table whose
//! every number is recomputable from the CSV.

use std::collections::BTreeMap;

/// One method's makespan on one instance.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub instance: usize,
    pub method: String,
    pub makespan: u32,
    /// Set only for oracle rows.
    pub certified: Option<bool>,
}

/// Aggregate report over a dataset.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<ResultRow>,
    pub methods: Vec<String>,
    pub n_instances: usize,
    /// Mean makespan per method.
    pub means: BTreeMap<String, f64>,
    /// Gap of each method's mean against the reference mean.
    pub gaps: BTreeMap<String, f64>,
    /// What the gap column compares against.
    pub reference: String,
    pub reference_mean: f64,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl EvalReport {
    /// Builds the aggregate view. The reference is the oracle mean when
    /// oracle rows exist and every one is certified; otherwise the
    /// per-instance best across all evaluated methods ("best-found").
    pub fn build(
        rows: Vec<ResultRow>,
        methods: Vec<String>,
        n_instances: usize,
        seed: Option<u64>,
        config_hash: String,
    ) -> Self {
        let mut means = BTreeMap::new();
        for method in &methods {
            let sum: u64 = rows
                .iter()
                .filter(|r| &r.method == method)
                .map(|r| r.makespan as u64)
                .sum();
            means.insert(method.clone(), sum as f64 / n_instances as f64);
        }

        let oracle_rows: Vec<&ResultRow> = rows.iter().filter(|r| r.method == "oracle").collect();
        let oracle_is_reference = oracle_rows.len() == n_instances
            && oracle_rows.iter().all(|r| r.certified == Some(true));
        let (reference, reference_mean) = if oracle_is_reference {
            ("oracle".to_string(), means["oracle"])
        } else {
            // Per-instance best across methods.
            let mut best = vec![u32::MAX; n_instances];
            for r in &rows {
                best[r.instance] = best[r.instance].min(r.makespan);
            }
            let mean = best.iter().map(|&b| b as u64).sum::<u64>() as f64 / n_instances as f64;
            ("best-found".to_string(), mean)
        };

        let gaps = means
            .iter()
            .map(|(m, v)| (m.clone(), v / reference_mean - 1.0))
            .collect();

        Self {
            rows,
            methods,
            n_instances,
            means,
            gaps,
            reference,
            reference_mean,
            seed,
            config_hash,
        }
    }

    /// Per-instance CSV; the table is recomputable from this.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,method,makespan,certified\n");
        for r in &self.rows {
            let certified = match r.certified {
                None => "".to_string(),
                Some(c) => c.to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{certified}\n",
                r.instance, r.method, r.makespan
            ));
        }
        out
    }

    /// Aggregate table, one line per method.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "instances: {}   reference: {} (mean {:.2})   config: {}   seed: {}\n",
            self.n_instances,
            self.reference,
            self.reference_mean,
            self.config_hash,
            self.seed.map_or("-".to_string(), |s| s.to_string()),
        ));
        out.push_str(&format!(
            "{:<16} {:>12} {:>9}\n",
            "method", "mean_makespan", "gap"
        ));
        for method in &self.methods {
            out.push_str(&format!(
                "{:<16} {:>12.2} {:>8.1}%\n",
                method,
                self.means[method],
                self.gaps[method] * 100.0
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ResultRow> {
        vec![
            ResultRow {
                instance: 0,
                method: "SPT".into(),
                makespan: 33,
                certified: None,
            },
            ResultRow {
                instance: 0,
                method: "oracle".into(),
                makespan: 18,
                certified: Some(true),
            },
            ResultRow {
                instance: 1,
                method: "SPT".into(),
                makespan: 20,
                certified: None,
            },
            ResultRow {
                instance: 1,
                method: "oracle".into(),
                makespan: 20,
                certified: Some(true),
            },
        ]
    }

    #[test]
    fn oracle_reference_and_gaps() {
        let report = EvalReport::build(
            rows(),
            vec!["SPT".into(), "oracle".into()],
            2,
            Some(7),
            "abc".into(),
        );
        assert_eq!(report.reference, "oracle");
        assert_eq!(report.means["SPT"], 26.5);
        assert_eq!(report.reference_mean, 19.0);
        assert!((report.gaps["SPT"] - (26.5 / 19.0 - 1.0)).abs() < 1e-12);
        assert_eq!(report.gaps["oracle"], 0.0);
    }

    #[test]
    fn uncertified_oracle_falls_back_to_best_found() {
        let mut r = rows();
        r[1].certified = Some(false);
        let report = EvalReport::build(
            r,
            vec!["SPT".into(), "oracle".into()],
            2,
            None,
            "abc".into(),
        );
        assert_eq!(report.reference, "best-found");
        assert_eq!(report.reference_mean, 19.0);
    }

    #[test]
    fn means_are_recomputable_from_csv() {
        let report = EvalReport::build(
            rows(),
            vec!["SPT".into(), "oracle".into()],
            2,
            None,
            "h".into(),
        );
        let csv = report.to_csv();
        let mut sum = 0.0;
        let mut count = 0;
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields[1] == "SPT" {
                sum += fields[2].parse::<f64>().unwrap();
                count += 1;
            }
        }
        assert_eq!(sum / count as f64, report.means["SPT"]);
        let table = report.to_table();
        assert!(table.contains("SPT"));
        assert!(table.contains("oracle"));
    }
}
