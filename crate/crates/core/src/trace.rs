use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Why a run ended before its scheduled duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub time: f64,
    pub signal: String,
}

/// Uniformly sampled named channels from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub names: Vec<String>,
    pub time: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    /// Sampling interval, s.
    pub sample_dt: f64,
    pub divergence: Option<Divergence>,
}

impl SimTrace {
    pub fn new(names: Vec<String>, sample_dt: f64) -> Self {
        let data = vec![Vec::new(); names.len()];
        Self {
            names,
            time: Vec::new(),
            data,
            sample_dt,
            divergence: None,
        }
    }

    pub fn push(&mut self, t: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.data.len());
        self.time.push(t);
        for (c, v) in self.data.iter_mut().zip(values) {
            c.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.channel(name)
            .ok_or_else(|| Error::Scenario(format!("trace has no channel `{name}`")))
    }

    pub fn start_time(&self) -> f64 {
        self.time.first().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header).map_err(csv_err)?;
        let mut row = Vec::with_capacity(header.len());
        for (k, t) in self.time.iter().enumerate() {
            row.clear();
            row.push(fmt_num(*t));
            row.extend(self.data.iter().map(|c| fmt_num(c[k])));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("time") {
            return Err(Error::Scenario(
                "trace CSV must start with a `time` column".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut tr = SimTrace::new(names, 0.0);
        let mut vals = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            vals.clear();
            for field in rec.iter() {
                vals.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("trace CSV row {}: `{field}`: {e}", line + 2))
                })?);
            }
            if vals.len() != tr.names.len() + 1 {
                return Err(Error::Parse(format!(
                    "trace CSV row {} has {} fields",
                    line + 2,
                    vals.len()
                )));
            }
            tr.push(vals[0], &vals[1..]);
        }
        if tr.time.len() >= 2 {
            tr.sample_dt = (tr.time[tr.time.len() - 1] - tr.time[0]) / (tr.time.len() - 1) as f64;
        }
        Ok(tr)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("CSV: {e}"))
}

/// Shortest round-trip decimal representation; deterministic across runs.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}
