//! Load-cell recordings: parsing, centred moving-average smoothing and
//! resultant-force summaries.

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const DEFAULT_SPAN: usize = 100;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1000.0;

const FORCE_COLUMNS: [&str; 4] = ["t_s", "fx_n", "fy_n", "fz_n"];
const TORQUE_COLUMNS: [&str; 3] = ["tx_nm", "ty_nm", "tz_nm"];

#[derive(Debug, Clone, PartialEq)]
pub struct ForceSeries {
    pub sample_rate_hz: f64,
    pub time_s: Vec<f64>,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub fz: Vec<f64>,
    pub torques: Option<[Vec<f64>; 3]>,
}

impl ForceSeries {
    /// Series sampled uniformly at `sample_rate_hz` from `t = 0`.
    pub fn uniform(sample_rate_hz: f64, fx: Vec<f64>, fy: Vec<f64>, fz: Vec<f64>) -> Result<Self> {
        let time_s = (0..fx.len()).map(|i| i as f64 / sample_rate_hz).collect();
        let series = Self { sample_rate_hz, time_s, fx, fy, fz, torques: None };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Domain(format!("sample rate must be positive, got {}", self.sample_rate_hz)));
        }
        let n = self.time_s.len();
        let mut lens = vec![self.fx.len(), self.fy.len(), self.fz.len()];
        if let Some(t) = &self.torques {
            lens.extend(t.iter().map(Vec::len));
        }
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Domain("force channels differ in length".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    fn channels(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![("fx_n", &self.fx), ("fy_n", &self.fy), ("fz_n", &self.fz)];
        if let Some([tx, ty, tz]) = &self.torques {
            out.extend([("tx_nm", tx.as_slice()), ("ty_nm", ty.as_slice()), ("tz_nm", tz.as_slice())]);
        }
        out
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.fx
            .iter()
            .zip(&self.fy)
            .zip(&self.fz)
            .map(|((x, y), z)| (x * x + y * y + z * z).sqrt())
            .collect()
    }
}

/// Centred moving average with shrinking edge windows.
///
/// An even span is reduced by one. Near either end the window narrows
/// symmetrically, so the first and last samples pass through unchanged.
/// Each mean is kept inside its window's range, which makes constant runs
/// come out exactly.
pub fn smooth(x: &[f64], span: usize) -> Vec<f64> {
    let width = if span.is_multiple_of(2) { span.saturating_sub(1) } else { span }.max(1);
    let half_max = (width - 1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let half = half_max.min(i).min(n - 1 - i);
            let window = &x[i - half..=i + half];
            let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (window.iter().sum::<f64>() / window.len() as f64).clamp(lo, hi)
        })
        .collect()
}

pub fn smooth_forces(series: &ForceSeries, span: usize) -> Result<ForceSeries> {
    if span == 0 {
        return Err(Error::Domain("smoothing span must be at least 1".into()));
    }
    if series.is_empty() {
        return Err(Error::Domain("cannot smooth an empty force series".into()));
    }
    series.validate()?;
    Ok(ForceSeries {
        sample_rate_hz: series.sample_rate_hz,
        time_s: series.time_s.clone(),
        fx: smooth(&series.fx, span),
        fy: smooth(&series.fy, span),
        fz: smooth(&series.fz, span),
        torques: series.torques.as_ref().map(|t| t.each_ref().map(|c| smooth(c, span))),
    })
}

/// Largest resultant force over the series. Pass the smoothed series.
pub fn max_force_magnitude(series: &ForceSeries) -> Result<f64> {
    series.validate()?;
    if series.is_empty() {
        return Err(Error::Domain("empty force series".into()));
    }
    Ok(series.magnitudes().into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceSummary {
    pub samples: usize,
    pub span: usize,
    pub sample_rate_hz: f64,
    pub max_magnitude_n: f64,
    pub channels: BTreeMap<String, ChannelRange>,
}

/// Smooths every channel and summarises the smoothed result.
pub fn analyze_forces(series: &ForceSeries, span: usize) -> Result<(ForceSeries, ForceSummary)> {
    let smoothed = smooth_forces(series, span)?;
    let max_magnitude_n = max_force_magnitude(&smoothed)?;
    let channels = smoothed
        .channels()
        .into_iter()
        .map(|(name, values)| {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (name.to_string(), ChannelRange { min, max })
        })
        .collect();
    let summary = ForceSummary {
        samples: smoothed.len(),
        span,
        sample_rate_hz: smoothed.sample_rate_hz,
        max_magnitude_n,
        channels,
    };
    Ok((smoothed, summary))
}

/// Reads `t_s,fx_n,fy_n,fz_n[,tx_nm,ty_nm,tz_nm]` with strictly increasing time.
pub fn read_force_csv<R: Read>(reader: R) -> Result<ForceSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.is_empty() || names == [""] {
        return Err(Error::Parse { line: 1, message: "empty force file".into() });
    }
    let with_torque = match names.len() {
        4 => false,
        7 => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected columns t_s,fx_n,fy_n,fz_n[,tx_nm,ty_nm,tz_nm], got {}", names.join(",")),
            })
        }
    };
    let expected: Vec<&str> = FORCE_COLUMNS.iter().chain(if with_torque { &TORQUE_COLUMNS[..] } else { &[] }).copied().collect();
    if names != expected {
        return Err(Error::Parse { line: 1, message: format!("expected header {}, got {}", expected.join(","), names.join(",")) });
    }

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); expected.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != expected.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, got {}", expected.len(), record.len()) });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("column {}: {field:?} is not a number", expected[c]) })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("column {}: non-finite value", expected[c]) });
            }
            cols[c].push(v);
        }
        let t = &cols[0];
        if t.len() > 1 && t[t.len() - 1] <= t[t.len() - 2] {
            return Err(Error::Parse { line, message: "time must be strictly increasing".into() });
        }
    }
    if cols[0].is_empty() {
        return Err(Error::Parse { line: 2, message: "force file has no samples".into() });
    }

    let mut it = cols.into_iter();
    let mut next = || it.next().unwrap_or_default();
    let (time_s, fx, fy, fz) = (next(), next(), next(), next());
    let torques = with_torque.then(|| [next(), next(), next()]);
    let n = time_s.len();
    let sample_rate_hz = if n > 1 { (n - 1) as f64 / (time_s[n - 1] - time_s[0]) } else { DEFAULT_SAMPLE_RATE_HZ };
    let series = ForceSeries { sample_rate_hz, time_s, fx, fy, fz, torques };
    series.validate()?;
    Ok(series)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse { line, message: e.to_string() }
}

pub fn write_force_csv<W: Write>(series: &ForceSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let channels = series.channels();
    let mut header = vec!["t_s"];
    header.extend(channels.iter().map(|(n, _)| *n));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for i in 0..series.len() {
        let mut row = vec![series.time_s[i].to_string()];
        row.extend(channels.iter().map(|(_, c)| c[i].to_string()));
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the edge rule, written out per sample.
    fn oracle(x: &[f64], width: usize) -> Vec<f64> {
        let n = x.len() as isize;
        let half = (width as isize - 1) / 2;
        (0..n)
            .map(|i| {
                let h = half.min(i).min(n - 1 - i);
                let mut acc = 0.0;
                for j in (i - h)..=(i + h) {
                    acc += x[j as usize];
                }
                acc / (2 * h + 1) as f64
            })
            .collect()
    }

    #[test]
    fn constant_is_unchanged() {
        let x = vec![5.0; 300];
        assert!(smooth(&x, 100).iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn impulse_peak() {
        let mut x = vec![0.0; 1000];
        x[500] = 1.0;
        let y = smooth(&x, 100);
        assert_eq!(y[500], 1.0 / 99.0);
        assert_eq!(y[500 - 49], 1.0 / 99.0);
        assert_eq!(y[500 - 50], 0.0);
    }

    #[test]
    fn edge_windows_shrink() {
        let x: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let y = smooth(&x, 7);
        assert_eq!(y[0], x[0]);
        assert_eq!(y[1], (x[0] + x[1] + x[2]) / 3.0);
        assert_eq!(y[19], x[19]);
        assert_eq!(y, oracle(&x, 7));
        assert_eq!(smooth(&x, 8), oracle(&x, 7));
        assert_eq!(smooth(&x, 1), x);
    }

    #[test]
    fn resultant_magnitudes() {
        let s = ForceSeries::uniform(1000.0, vec![3.0; 50], vec![4.0; 50], vec![0.0; 50]).unwrap();
        assert!((max_force_magnitude(&smooth_forces(&s, 100).unwrap()).unwrap() - 5.0).abs() < 1e-12);
        let zero = ForceSeries::uniform(1000.0, vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]).unwrap();
        assert_eq!(max_force_magnitude(&zero).unwrap(), 0.0);
        let empty = ForceSeries::uniform(1000.0, vec![], vec![], vec![]).unwrap();
        assert!(max_force_magnitude(&empty).is_err());
        assert!(smooth_forces(&empty, 100).is_err());
    }

    #[test]
    fn ramp_fixture() {
        let fy: Vec<f64> = (0..1000).map(|i| 0.01 * i as f64).collect();
        let s = ForceSeries::uniform(1000.0, vec![0.0; 1000], fy.clone(), vec![0.0; 1000]).unwrap();
        let smoothed = smooth_forces(&s, 100).unwrap();
        let expected = oracle(&fy, 99).into_iter().fold(0.0, f64::max);
        let got = max_force_magnitude(&smoothed).unwrap();
        assert_eq!(got, expected);
        assert!((got - 9.99).abs() < 1e-9);
    }

    #[test]
    fn mismatched_channels_rejected() {
        assert!(ForceSeries::uniform(1000.0, vec![0.0; 3], vec![0.0; 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "t_s,fx_n,fy_n,fz_n\n0,3,4,0\n0.001,3,4,0\n0.002,3,4,0\n";
        let s = read_force_csv(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s.sample_rate_hz - 1000.0).abs() < 1e-6);
        let mut buf = Vec::new();
        write_force_csv(&s, &mut buf).unwrap();
        assert_eq!(read_force_csv(buf.as_slice()).unwrap(), s);

        let torque = "t_s,fx_n,fy_n,fz_n,tx_nm,ty_nm,tz_nm\n0,1,2,3,4,5,6\n";
        assert!(read_force_csv(torque.as_bytes()).unwrap().torques.is_some());

        match read_force_csv("t_s,fx_n,fy_n,fz_n\n0,1,2,3\n0.1,1,x,3\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match read_force_csv("t_s,fx_n,fy_n,fz_n\n0,1,2,3\n0,1,2,3\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_force_csv("".as_bytes()).is_err());
        assert!(read_force_csv("t_s,fx_n,fy_n\n0,1,2\n".as_bytes()).is_err());
        assert!(read_force_csv("t_s,fx_n,fy_n,fz_n\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn smoothing_is_linear(
                x in proptest::collection::vec(-50.0f64..50.0, 1..400),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
                span in 1usize..120,
            ) {
                let y: Vec<f64> = x.iter().rev().map(|v| v * 0.5 + 1.0).collect();
                let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
                let lhs = smooth(&combo, span);
                let (sx, sy) = (smooth(&x, span), smooth(&y, span));
                for i in 0..x.len() {
                    prop_assert!((lhs[i] - (a * sx[i] + b * sy[i])).abs() < 1e-12);
                }
            }

            #[test]
            fn matches_direct_oracle(x in proptest::collection::vec(-10.0f64..10.0, 1..300), span in 1usize..150) {
                let width = if span.is_multiple_of(2) { span - 1 } else { span }.max(1);
                let got = smooth(&x, span);
                let want = oracle(&x, width);
                for (g, w) in got.iter().zip(&want) {
                    prop_assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }
}
