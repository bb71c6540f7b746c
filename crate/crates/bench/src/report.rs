use std::fmt::Write as _;

use crate::measure::Stat;

/// One measured point.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub parameter: u64,
    pub mean: f64,
    pub std: f64,
    pub unit: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<Row>,
}

impl BenchReport {
    pub fn push(&mut self, experiment: &str, parameter: u64, stat: Stat, unit: &str) {
        self.rows.push(Row {
            experiment: experiment.to_string(),
            parameter,
            mean: stat.mean,
            std: stat.std,
            unit: unit.to_string(),
        });
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
    }

    /// Rows of one experiment in insertion order.
    pub fn series(&self, experiment: &str) -> Vec<&Row> {
        self.rows.iter().filter(|r| r.experiment == experiment).collect()
    }

    pub fn get(&self, experiment: &str, parameter: u64) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.experiment == experiment && r.parameter == parameter)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment,parameter,mean,std,unit\n");
        for r in &self.rows {
            writeln!(out, "{},{},{:.3},{:.3},{}", r.experiment, r.parameter, r.mean, r.std, r.unit)
                .expect("writing to a String cannot fail");
        }
        out
    }

    /// `figure,series,x,y` lines for external plotting.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("figure,series,x,y\n");
        for r in &self.rows {
            let figure = match r.experiment.as_str() {
                "size-compressed" | "size-tag" => "sizes",
                "hash" | "compress" | "translate" => "batch-throughput",
                _ => "signatures",
            };
            writeln!(out, "{figure},{},{},{:.3}", r.experiment, r.parameter, r.mean)
                .expect("writing to a String cannot fail");
        }
        out
    }
}
