//! Flat-file formats shared by the command-line tools and the service.
//!
//! Every CSV may start with `#` comment lines; writers use one to record the
//! session seed. Readers check the header exactly and report the offending
//! line and field on error.

use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foc::FoTransferFunction;
use crate::gap::GapMatrix;
use crate::looprt::{LogRow, RunEvent, RunLog};
use crate::plant::PlantMatrix;
use crate::sysid::StepDataset;
use crate::tuner::{PiGains, TuneResult};
use crate::CHANNELS;

fn numbered(prefix: &str) -> impl Iterator<Item = String> + '_ {
    (1..=CHANNELS).map(move |i| format!("{prefix}{i}"))
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse {
            line: p.line() as usize,
            reason: e.to_string(),
        },
        None => Error::Io(e.to_string()),
    }
}

fn seed_comment<W: Write>(w: &mut W, seed: Option<u64>) -> Result<()> {
    if let Some(s) = seed {
        writeln!(w, "# seed={s}")?;
    }
    Ok(())
}

/// Writes a header and numeric rows.
pub fn write_columns<W: Write>(
    mut w: W,
    headers: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
    seed: Option<u64>,
) -> Result<()> {
    seed_comment(&mut w, seed)?;
    let mut out = WriterBuilder::new().from_writer(w);
    out.write_record(headers).map_err(csv_err)?;
    for row in rows {
        out.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

struct Table {
    rows: Vec<(usize, StringRecord)>,
}

fn read_table<R: Read>(mut r: R, expected: &[String]) -> Result<Table> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let line = 1 + text
        .lines()
        .take_while(|l| l.starts_with('#') || l.trim().is_empty())
        .count();
    let mut rdr = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line,
            reason: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != expected.len() {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        rows.push((line, rec));
    }
    Ok(Table { rows })
}

fn field<T: std::str::FromStr>(rec: &StringRecord, line: usize, idx: usize, name: &str) -> Result<T> {
    let raw = &rec[idx];
    raw.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("field `{name}`: cannot parse `{raw}`"),
    })
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn dataset_header() -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(numbered("u"))
        .chain(numbered("y"))
        .collect()
}

/// Concatenates records on one time axis: `t,u1..u16,y1..y16`.
pub fn write_dataset<W: Write>(w: W, records: &[StepDataset], seed: Option<u64>) -> Result<()> {
    let mut rows = Vec::new();
    let mut offset = 0.0;
    for d in records {
        d.validate()?;
        let u = d.drive();
        for (k, &t) in d.times.iter().enumerate() {
            let mut row = Vec::with_capacity(1 + 2 * CHANNELS);
            row.push(offset + t);
            row.extend_from_slice(&u);
            row.extend(d.responses.iter().map(|r| r[k]));
            rows.push(row);
        }
        offset += d.times.last().copied().unwrap_or(0.0);
    }
    write_columns(w, &dataset_header(), rows, seed)
}

/// Splits a dataset file back into records wherever the drive vector changes.
pub fn read_dataset<R: Read>(r: R) -> Result<Vec<StepDataset>> {
    let header = dataset_header();
    let table = read_table(r, &header)?;
    let mut out: Vec<(usize, Vec<f64>, StepDataset)> = Vec::new();
    for (line, rec) in &table.rows {
        let mut vals = Vec::with_capacity(header.len());
        for (i, name) in header.iter().enumerate() {
            vals.push(field::<f64>(rec, *line, i, name)?);
        }
        let (t, u, y) = (vals[0], &vals[1..=CHANNELS], &vals[CHANNELS + 1..]);
        let same = out.last().is_some_and(|(_, prev, _)| prev.as_slice() == u);
        if !same {
            let nonzero: Vec<usize> = (0..CHANNELS).filter(|&j| u[j] != 0.0).collect();
            let (channel_in, amplitude) = match nonzero.as_slice() {
                [j] => (Some(*j), u[*j]),
                _ if u.iter().all(|&v| v == u[0] && v != 0.0) => (None, u[0]),
                _ => {
                    return Err(Error::Parse {
                        line: *line,
                        reason: "drive must step one input or all inputs equally".into(),
                    })
                }
            };
            out.push((
                *line,
                u.to_vec(),
                StepDataset {
                    channel_in,
                    amplitude,
                    times: Vec::new(),
                    responses: vec![Vec::new(); CHANNELS],
                },
            ));
        }
        let (_, _, d) = out.last_mut().expect("just pushed");
        d.times.push(t);
        for (resp, v) in d.responses.iter_mut().zip(y) {
            resp.push(*v);
        }
    }
    out.into_iter()
        .map(|(line, _, mut d)| {
            let start = d.times[0];
            for t in d.times.iter_mut() {
                *t -= start;
            }
            d.validate().map_err(|e| Error::Parse {
                line,
                reason: e.to_string(),
            })?;
            Ok(d)
        })
        .collect()
}

/// One identified element `G_{channel,input}` (both 1-based in files).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub channel: usize,
    pub input: usize,
    pub model: FoTransferFunction,
    /// Percent; NaN when undefined.
    pub fit: f64,
}

const MODEL_HEADER: [&str; 7] = ["channel", "input", "K", "T", "alpha", "L", "fit"];

pub fn write_models<W: Write>(w: W, records: &[ModelRecord], seed: Option<u64>) -> Result<()> {
    let rows = records.iter().map(|r| {
        vec![
            (r.channel + 1) as f64,
            (r.input + 1) as f64,
            r.model.gain,
            r.model.time_const,
            r.model.order,
            r.model.delay,
            r.fit,
        ]
    });
    write_columns(w, &owned(&MODEL_HEADER), rows, seed)
}

fn index(rec: &StringRecord, line: usize, idx: usize, name: &str) -> Result<usize> {
    let v: usize = field(rec, line, idx, name)?;
    if !(1..=CHANNELS).contains(&v) {
        return Err(Error::Parse {
            line,
            reason: format!("field `{name}`: {v} outside 1..={CHANNELS}"),
        });
    }
    Ok(v - 1)
}

pub fn read_models<R: Read>(r: R) -> Result<Vec<ModelRecord>> {
    let table = read_table(r, &owned(&MODEL_HEADER))?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let model = FoTransferFunction {
                gain: field(rec, line, 2, "K")?,
                time_const: field(rec, line, 3, "T")?,
                order: field(rec, line, 4, "alpha")?,
                delay: field(rec, line, 5, "L")?,
            };
            model.validate().map_err(|e| Error::Parse {
                line,
                reason: e.to_string(),
            })?;
            Ok(ModelRecord {
                channel: index(rec, line, 0, "channel")?,
                input: index(rec, line, 1, "input")?,
                model,
                fit: field(rec, line, 6, "fit")?,
            })
        })
        .collect()
}

/// Diagonal-only records fill the diagonal; missing couplings are zero.
pub fn plant_from_records(records: &[ModelRecord]) -> Result<PlantMatrix> {
    let zero = FoTransferFunction {
        gain: 0.0,
        time_const: 1.0,
        order: 1.0,
        delay: 0.0,
    };
    let mut elements = vec![None; CHANNELS * CHANNELS];
    for r in records {
        let slot = &mut elements[r.channel * CHANNELS + r.input];
        if slot.is_some() {
            return Err(Error::InvalidConfig(format!(
                "two models for element ({}, {})",
                r.channel + 1,
                r.input + 1
            )));
        }
        *slot = Some(r.model);
    }
    for i in 0..CHANNELS {
        if elements[i * CHANNELS + i].is_none() {
            return Err(Error::InvalidConfig(format!("no model for channel {}", i + 1)));
        }
    }
    PlantMatrix::new(elements.into_iter().map(|e| e.unwrap_or(zero)).collect())
}

/// Diagonal elements as records with no fit information.
pub fn diagonal_records(plant: &PlantMatrix) -> Vec<ModelRecord> {
    (0..CHANNELS)
        .map(|i| ModelRecord {
            channel: i,
            input: i,
            model: *plant.element(i, i),
            fit: f64::NAN,
        })
        .collect()
}

/// Tuned gains of one channel, in the plant's input units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub channel: usize,
    pub gains: PiGains,
    pub feasible: bool,
    pub pm: f64,
    pub gm: f64,
    pub itae: f64,
}

impl GainRecord {
    pub fn from_result(channel: usize, r: &TuneResult) -> Self {
        Self {
            channel,
            gains: r.gains,
            feasible: r.feasible,
            pm: r.achieved.phase_margin_deg,
            gm: r.achieved.gain_margin_db,
            itae: r.itae_value,
        }
    }
}

const GAIN_HEADER: [&str; 7] = ["channel", "K", "I", "feasible", "pm", "gm", "itae"];

pub fn write_gains<W: Write>(mut w: W, records: &[GainRecord], seed: Option<u64>) -> Result<()> {
    seed_comment(&mut w, seed)?;
    let mut out = WriterBuilder::new().from_writer(w);
    out.write_record(GAIN_HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([
            (r.channel + 1).to_string(),
            r.gains.prop_k.to_string(),
            r.gains.integ_i.to_string(),
            r.feasible.to_string(),
            r.pm.to_string(),
            r.gm.to_string(),
            r.itae.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_gains<R: Read>(r: R) -> Result<Vec<GainRecord>> {
    let table = read_table(r, &owned(&GAIN_HEADER))?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let gains = PiGains {
                prop_k: field(rec, line, 1, "K")?,
                integ_i: field(rec, line, 2, "I")?,
            };
            gains.validate().map_err(|e| Error::Parse {
                line,
                reason: e.to_string(),
            })?;
            Ok(GainRecord {
                channel: index(rec, line, 0, "channel")?,
                gains,
                feasible: field(rec, line, 3, "feasible")?,
                pm: field(rec, line, 4, "pm")?,
                gm: field(rec, line, 5, "gm")?,
                itae: field(rec, line, 6, "itae")?,
            })
        })
        .collect()
}

/// Gains for all 16 channels, in channel order.
pub fn gains_by_channel(records: &[GainRecord]) -> Result<[PiGains; CHANNELS]> {
    let mut out = [None; CHANNELS];
    for r in records {
        if out[r.channel].replace(r.gains).is_some() {
            return Err(Error::InvalidConfig(format!("two gain records for channel {}", r.channel + 1)));
        }
    }
    let mut gains = [PiGains {
        prop_k: 0.0,
        integ_i: 0.0,
    }; CHANNELS];
    for (i, g) in out.iter().enumerate() {
        gains[i] = g.ok_or_else(|| Error::InvalidConfig(format!("no gains for channel {}", i + 1)))?;
    }
    Ok(gains)
}

/// `n × n` matrix with a label column and header.
pub fn write_gap_matrix<W: Write>(mut w: W, m: &GapMatrix, seed: Option<u64>) -> Result<()> {
    seed_comment(&mut w, seed)?;
    let mut out = WriterBuilder::new().from_writer(w);
    out.write_record(std::iter::once("").chain(m.labels.iter().map(String::as_str)))
        .map_err(csv_err)?;
    for (label, row) in m.labels.iter().zip(&m.values) {
        out.write_record(std::iter::once(label.clone()).chain(row.iter().map(|v| v.to_string())))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_gap_matrix<R: Read>(r: R) -> Result<GapMatrix> {
    let mut rdr = ReaderBuilder::new().comment(Some(b'#')).trim(Trim::All).from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut row = Vec::with_capacity(labels.len());
        for (i, name) in labels.iter().enumerate() {
            row.push(field::<f64>(&rec, line, i + 1, name)?);
        }
        values.push(row);
    }
    if values.len() != labels.len() {
        return Err(Error::Parse {
            line: values.len() + 1,
            reason: format!("{} rows for {} columns", values.len(), labels.len()),
        });
    }
    Ok(GapMatrix { labels, values })
}

/// `(i, j, δ)` rows, 1-based, for surface plots.
pub fn write_gap_triplets<W: Write>(w: W, m: &GapMatrix, seed: Option<u64>) -> Result<()> {
    let rows = m
        .triplets()
        .into_iter()
        .map(|(i, j, d)| vec![(i + 1) as f64, (j + 1) as f64, d]);
    write_columns(w, &owned(&["i", "j", "delta"]), rows, seed)
}

fn runlog_header() -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(numbered("sp"))
        .chain(numbered("y"))
        .chain(numbered("u"))
        .collect()
}

/// `t,sp1..sp16,y1..y16,u1..u16`; measured temperatures, drives in counts.
pub fn write_runlog<W: Write>(w: W, log: &RunLog, seed: Option<u64>) -> Result<()> {
    let rows = log.rows.iter().map(|r| {
        let mut row = Vec::with_capacity(1 + 3 * CHANNELS);
        row.push(r.t);
        row.extend_from_slice(&r.setpoint);
        row.extend_from_slice(&r.measured);
        row.extend_from_slice(&r.drive);
        row
    });
    write_columns(w, &runlog_header(), rows, seed)
}

/// Reads a RunLog table. True temperatures are not stored and come back NaN;
/// events live in the sidecar.
pub fn read_runlog<R: Read>(r: R) -> Result<RunLog> {
    let header = runlog_header();
    let table = read_table(r, &header)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let mut vals = Vec::with_capacity(header.len());
        for (i, name) in header.iter().enumerate() {
            vals.push(field::<f64>(rec, *line, i, name)?);
        }
        let block = |k: usize| -> [f64; CHANNELS] { std::array::from_fn(|i| vals[1 + k * CHANNELS + i]) };
        rows.push(LogRow {
            t: vals[0],
            setpoint: block(0),
            measured: block(1),
            truth: [f64::NAN; CHANNELS],
            drive: block(2),
        });
    }
    Ok(RunLog {
        rows,
        events: Vec::new(),
    })
}

/// One JSON object per line: `{"t":…,"kind":…,"detail":…}`, after an
/// optional `# seed=N` line.
pub fn write_events<W: Write>(mut w: W, events: &[RunEvent], seed: Option<u64>) -> Result<()> {
    seed_comment(&mut w, seed)?;
    for e in events {
        let line = serde_json::to_string(e).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(mut r: R) -> Result<Vec<RunEvent>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_lines_count_comments() {
        let text = "# seed=1\nchannel,K,I,feasible,pm,gm,itae\n1,x,1,true,1,1,1\n";
        assert!(matches!(read_gains(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn header_mismatch_reports_line() {
        let text = "# seed=3\nchannel,K,I,feasible,pm,gm\n1,2,3,true,60,inf\n";
        match read_gains(text.as_bytes()) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("expected header"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_field_names_the_column() {
        let text = "channel,K,I,feasible,pm,gm,itae\n1,0.5,0.1,true,60,inf,3\n2,abc,0.1,true,60,inf,3\n";
        match read_gains(text.as_bytes()) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("`K`"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gains_round_trip_with_infinite_margin() {
        let rec = GainRecord {
            channel: 4,
            gains: PiGains::new(0.37, 0.05).unwrap(),
            feasible: true,
            pm: 60.02,
            gm: f64::INFINITY,
            itae: 2541.6,
        };
        let mut buf = Vec::new();
        write_gains(&mut buf, &[rec], Some(9)).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# seed=9\n"));
        assert_eq!(read_gains(buf.as_slice()).unwrap(), vec![rec]);
    }
}
