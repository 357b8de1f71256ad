//! Study CSVs reshaped into long (x, y, series) rows for plotting.
//!
//! Text columns label the series; every selected numeric column other than
//! the x column becomes its own series. Values are copied verbatim, so
//! parsing the output gives back exactly the numbers of the source.

use std::io::{Read, Write};

use crate::error::{LabError, LabResult};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotSpec {
    /// Defaults to the first column.
    pub x: Option<String>,
    /// Defaults to every numeric column except x.
    pub y: Vec<String>,
}

fn numeric(s: &str) -> bool {
    s.parse::<f64>().is_ok()
}

pub fn emit_plotdata<R: Read, W: Write>(input: R, output: W, spec: &PlotSpec) -> LabResult<usize> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = rd.records().collect::<Result<_, _>>()?;
    let mut wr = csv::Writer::from_writer(output);
    wr.write_record(["x", "y", "series"])?;
    if header.is_empty() {
        wr.flush().map_err(|e| LabError::Io("plotdata".into(), e))?;
        return Ok(0);
    }
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Usage(format!("no column {name:?}; columns: {}", header.join(", "))))
    };
    let xi = match &spec.x {
        Some(x) => col(x)?,
        None => 0,
    };
    let is_numeric = |j: usize| rows.iter().all(|r| numeric(&r[j]));
    let ys: Vec<usize> = if spec.y.is_empty() {
        (0..header.len()).filter(|&j| j != xi && is_numeric(j)).collect()
    } else {
        spec.y.iter().map(|y| col(y)).collect::<LabResult<_>>()?
    };
    let labels: Vec<usize> = (0..header.len())
        .filter(|&j| j != xi && !ys.contains(&j) && !is_numeric(j))
        .collect();
    let mut n = 0;
    for r in &rows {
        let mut prefix: Vec<&str> = labels.iter().map(|&j| &r[j]).filter(|s| !s.is_empty()).collect();
        for &j in &ys {
            prefix.push(&header[j]);
            wr.write_record([&r[xi], &r[j], &prefix.join("/")])?;
            prefix.pop();
            n += 1;
        }
    }
    wr.flush().map_err(|e| LabError::Io("plotdata".into(), e))?;
    Ok(n)
}
