//! Recorded waveforms, CSV files, resampling and error metrics.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaveError {
    #[error("i/o error: {0}")]
    Io(std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: malformed number '{token}'")]
    Number { row: usize, token: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("time ranges do not overlap: [{a0}, {a1}] vs [{b0}, {b1}]")]
    Disjoint { a0: f64, a1: f64, b0: f64, b1: f64 },
    #[error("no signal names in common")]
    NoCommonSignals,
    #[error("waveform has fewer than two samples")]
    TooShort,
    #[error("invalid grid step {0}")]
    GridStep(f64),
}

impl From<std::io::Error> for WaveError {
    fn from(e: std::io::Error) -> Self {
        WaveError::Io(e)
    }
}

/// Time series of named signals. Times never decrease; a time may appear
/// twice, for the values just before and just after a switching instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Waveform {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Waveform {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>) {
        assert_eq!(values.len(), self.names.len(), "row width mismatch");
        debug_assert!(
            self.times.last().is_none_or(|&last| t >= last),
            "time went backwards"
        );
        self.times.push(t);
        self.rows.push(values);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.index_of(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), WaveError> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| WaveError::Csv(e.to_string());
        w.write_record(std::iter::once("time").chain(self.names.iter().map(String::as_str)))
            .map_err(csv_err)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            w.write_record(
                std::iter::once(t)
                    .chain(row)
                    .map(|v| format!("{:.16e}", v + 0.0)),
            )
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, WaveError> {
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| WaveError::Csv(e.to_string()))?
            .clone();
        match header.get(0) {
            Some(h) if h.trim() == "time" => {}
            Some(h) => {
                return Err(WaveError::Header(format!(
                    "first column must be 'time', found '{h}'"
                )))
            }
            None => return Err(WaveError::Header("empty header".into())),
        }
        let names: Vec<String> = header
            .iter()
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        if names.iter().any(String::is_empty) {
            return Err(WaveError::Header("empty signal name".into()));
        }
        let mut wave = Waveform::new(names);
        for (idx, record) in r.records().enumerate() {
            let row = idx + 2;
            let record = record.map_err(|e| WaveError::Csv(e.to_string()))?;
            if record.len() != header.len() {
                return Err(WaveError::Ragged {
                    row,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            let mut values = record.iter().map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| WaveError::Number {
                    row,
                    token: tok.to_string(),
                })
            });
            let t = values.next().expect("nonempty record")?;
            let vals = values.collect::<Result<Vec<_>, _>>()?;
            wave.times.push(t);
            wave.rows.push(vals);
        }
        Ok(wave)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WaveError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WaveError> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Keep only the named signals, in the given order.
    pub fn select(&self, names: &[String]) -> Option<Waveform> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.index_of(n))
            .collect::<Option<_>>()?;
        Some(Waveform {
            names: names.to_vec(),
            times: self.times.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&k| r[k]).collect())
                .collect(),
        })
    }

    /// Value of every signal at `tau`. At a repeated time the later row
    /// wins, so a switching instant reads its post-switching values.
    /// Outside the recorded range the nearest row is returned.
    /// Linear interpolation at `tau`. At a duplicated time the first
    /// (pre-switching) row is returned; just after it, the second one is
    /// the left end of the interpolation.
    pub fn value_at(&self, tau: f64) -> Vec<f64> {
        let n = self.times.partition_point(|&t| t <= tau);
        if n == 0 {
            return self.rows[0].clone();
        }
        let i = n - 1;
        if self.times[i] == tau {
            return self.rows[self.times.partition_point(|&t| t < tau)].clone();
        }
        if i + 1 == self.len() {
            return self.rows[i].clone();
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (tau - t0) / (t1 - t0);
        self.rows[i]
            .iter()
            .zip(&self.rows[i + 1])
            .map(|(a, b)| a + (b - a) * w)
            .collect()
    }

    pub fn resample(&self, grid: &UniformGrid) -> Waveform {
        let mut out = Waveform::new(self.names.clone());
        for tau in grid.points() {
            out.push(tau, self.value_at(tau));
        }
        out
    }

    /// Median positive spacing between samples.
    pub fn median_step(&self) -> Option<f64> {
        let mut dts: Vec<f64> = self
            .times
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&d| d > 0.0)
            .collect();
        if dts.is_empty() {
            return None;
        }
        dts.sort_by(f64::total_cmp);
        Some(dts[dts.len() / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl UniformGrid {
    /// Grid from `start` that stays within `end`.
    pub fn spanning(start: f64, end: f64, step: f64) -> Self {
        let count = ((end - start) / step * (1.0 + 1e-12)).floor() as usize + 1;
        Self { start, step, count }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.start + k as f64 * self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalMetrics {
    pub name: String,
    pub rmse: f64,
    pub max_abs: f64,
    /// RMSE over the RMS of the reference; `None` when the reference is
    /// identically zero.
    pub rel_rms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub grid: UniformGrid,
    pub signals: Vec<SignalMetrics>,
}

impl ComparisonReport {
    pub fn signal(&self, name: &str) -> Option<&SignalMetrics> {
        self.signals.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "grid: start={:.16e} step={:.16e} points={}",
            self.grid.start, self.grid.step, self.grid.count
        )?;
        writeln!(
            f,
            "{:<16} {:>24} {:>24} {:>24}",
            "signal", "rmse", "max_abs", "rel_rms"
        )?;
        for s in &self.signals {
            let rel = s
                .rel_rms
                .map_or_else(|| "undefined".to_string(), |r| format!("{r:.16e}"));
            writeln!(
                f,
                "{:<16} {:>24.16e} {:>24.16e} {:>24}",
                s.name, s.rmse, s.max_abs, rel
            )?;
        }
        Ok(())
    }
}

/// Compare `a` against the reference `b` on a uniform grid over the
/// overlap of their time ranges. Without `grid_step` the finer of the two
/// median sample spacings is used.
pub fn compare(
    a: &Waveform,
    b: &Waveform,
    grid_step: Option<f64>,
) -> Result<ComparisonReport, WaveError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(WaveError::TooShort);
    }
    let (a0, a1) = (a.times[0], a.times[a.len() - 1]);
    let (b0, b1) = (b.times[0], b.times[b.len() - 1]);
    let (start, end) = (a0.max(b0), a1.min(b1));
    if end <= start {
        return Err(WaveError::Disjoint { a0, a1, b0, b1 });
    }
    let step = match grid_step {
        Some(s) => s,
        None => a
            .median_step()
            .into_iter()
            .chain(b.median_step())
            .fold(f64::INFINITY, f64::min),
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(WaveError::GridStep(step));
    }
    let grid = UniformGrid::spanning(start, end, step);

    let common: Vec<(usize, usize)> = a
        .names
        .iter()
        .enumerate()
        .filter_map(|(ia, n)| b.index_of(n).map(|ib| (ia, ib)))
        .collect();
    if common.is_empty() {
        return Err(WaveError::NoCommonSignals);
    }
    let ra = a.resample(&grid);
    let rb = b.resample(&grid);
    let n = grid.count as f64;
    let signals = common
        .into_iter()
        .map(|(ia, ib)| {
            let (mut se, mut sr, mut max_abs) = (0.0, 0.0, 0.0f64);
            for (xa, xb) in ra.rows.iter().zip(&rb.rows) {
                let d = xa[ia] - xb[ib];
                se += d * d;
                sr += xb[ib] * xb[ib];
                max_abs = max_abs.max(d.abs());
            }
            let rmse = (se / n).sqrt();
            let rms_ref = (sr / n).sqrt();
            SignalMetrics {
                name: a.names[ia].clone(),
                rmse,
                max_abs,
                rel_rms: (rms_ref > 0.0).then(|| rmse / rms_ref),
            }
        })
        .collect();
    Ok(ComparisonReport { grid, signals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Waveform {
        let mut w = Waveform::new(vec!["v(a)".into(), "i(L1)".into()]);
        w.push(0.0, vec![0.0, 1.0]);
        w.push(0.5, vec![1.0, 2.0]);
        w.push(0.5, vec![3.0, 0.0]);
        w
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "time,v(a),i(L1)");
        assert_eq!(
            lines[1],
            "0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0"
        );
    }

    #[test]
    fn csv_round_trip_keeps_duplicate_order() {
        let w = sample();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert_eq!(Waveform::read_csv(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            Waveform::read_csv("t,a\n0,1\n".as_bytes()),
            Err(WaveError::Header(_))
        ));
        assert!(matches!(
            Waveform::read_csv("time,a\n0,1\n1\n".as_bytes()),
            Err(WaveError::Ragged { row: 3, .. })
        ));
        assert!(matches!(
            Waveform::read_csv("time,a\n0,x\n".as_bytes()),
            Err(WaveError::Number { row: 2, .. })
        ));
    }

    #[test]
    fn duplicate_time_reads_pre_value_at_the_instant() {
        let mut w = sample();
        assert_eq!(w.value_at(0.5), vec![1.0, 2.0]);
        w.push(1.0, vec![5.0, 0.0]);
        assert_eq!(w.value_at(0.75), vec![4.0, 0.0]);
        assert_eq!(w.value_at(0.25), vec![0.5, 1.5]);
    }

    #[test]
    fn metrics() {
        let mut zero = Waveform::new(vec!["x".into()]);
        let mut one = Waveform::new(vec!["x".into()]);
        for k in 0..11 {
            zero.push(k as f64 * 0.1, vec![0.0]);
            one.push(k as f64 * 0.1, vec![1.0]);
        }
        let r = compare(&one, &zero, None).unwrap();
        let s = r.signal("x").unwrap();
        assert!((s.rmse - 1.0).abs() < 1e-15);
        assert_eq!(s.max_abs, 1.0);
        assert_eq!(s.rel_rms, None);
        let r = compare(&one, &one, None).unwrap();
        assert_eq!(r.signals[0].rmse, 0.0);
        assert_eq!(r.signals[0].rel_rms, Some(0.0));
        assert_eq!(r.grid.count, 11);
    }

    #[test]
    fn disjoint_ranges_rejected() {
        let mut a = Waveform::new(vec!["x".into()]);
        a.push(0.0, vec![0.0]);
        a.push(1.0, vec![0.0]);
        let mut b = Waveform::new(vec!["x".into()]);
        b.push(2.0, vec![0.0]);
        b.push(3.0, vec![0.0]);
        assert!(matches!(
            compare(&a, &b, None),
            Err(WaveError::Disjoint { .. })
        ));
    }
}
