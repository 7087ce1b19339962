//! CSV trace format.
//!
//! The first line is a `#` metadata comment carrying the tool version, the
//! config hash and the seed. It is followed by a header row and one row per
//! [`StepRecord`] in the order of [`TRACE_COLUMNS`]. Floats are written with
//! 17 significant digits. Per-horizon vectors (`pred_*`, `var_*`, `plan_*`)
//! pack their entries into one field separated by `;`, first step first.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector4;

use crate::constraints::ConstraintCase;
use crate::error::{Error, Result};
use crate::qp::QpStatus;
use crate::sim::StepRecord;
use crate::tv::CommittedDirection;
use crate::vehicle::{EvInput, EvState, TvState};

pub const TRACE_COLUMNS: [&str; 33] = [
    "step",
    "time",
    "ev_s",
    "ev_d",
    "ev_phi",
    "ev_v",
    "u_a",
    "u_delta",
    "tv_x",
    "tv_vx",
    "tv_y",
    "tv_vy",
    "status",
    "fallback",
    "case",
    "committed",
    "gp_size",
    "gp_active",
    "gap",
    "objective",
    "qp_iterations",
    "pred_x",
    "pred_vx",
    "pred_y",
    "pred_vy",
    "var_x",
    "var_vx",
    "var_y",
    "var_vy",
    "plan_s",
    "plan_d",
    "plan_phi",
    "plan_v",
];

/// Metadata carried on the first line of a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceHeader {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl TraceHeader {
    fn line(&self) -> String {
        format!(
            "# race {} config_sha256={} seed={}",
            self.version, self.config_hash, self.seed
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |m: &str| Error::Trace {
            line: 1,
            message: m.to_string(),
        };
        let rest = line
            .strip_prefix("# race ")
            .ok_or_else(|| bad("missing metadata line"))?;
        let mut parts = rest.split_whitespace();
        let version = parts
            .next()
            .ok_or_else(|| bad("missing version"))?
            .to_string();
        let mut config_hash = None;
        let mut seed = None;
        for p in parts {
            if let Some(v) = p.strip_prefix("config_sha256=") {
                config_hash = Some(v.to_string());
            } else if let Some(v) = p.strip_prefix("seed=") {
                seed = Some(v.parse().map_err(|_| bad("bad seed"))?);
            }
        }
        Ok(Self {
            version,
            config_hash: config_hash.ok_or_else(|| bad("missing config hash"))?,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
        })
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn pack<I: IntoIterator<Item = f64>>(values: I) -> String {
    values
        .into_iter()
        .map(fmt_f64)
        .collect::<Vec<_>>()
        .join(";")
}

fn record_fields(r: &StepRecord) -> Vec<String> {
    let mut f = vec![r.step.to_string()];
    f.extend(
        [
            r.time,
            r.ev.s,
            r.ev.d,
            r.ev.phi,
            r.ev.v,
            r.input.a,
            r.input.delta,
            r.tv.x,
            r.tv.vx,
            r.tv.y,
            r.tv.vy,
        ]
        .map(fmt_f64),
    );
    f.push(r.status.label().to_string());
    f.push(u8::from(r.used_fallback).to_string());
    f.push(r.case.label().to_string());
    f.push(r.committed.label().to_string());
    f.push(r.gp_size.to_string());
    f.push(u8::from(r.gp_active).to_string());
    f.push(fmt_f64(r.gap));
    f.push(fmt_f64(r.objective));
    f.push(r.qp_iterations.to_string());
    f.push(pack(r.pred_means.iter().map(|t| t.x)));
    f.push(pack(r.pred_means.iter().map(|t| t.vx)));
    f.push(pack(r.pred_means.iter().map(|t| t.y)));
    f.push(pack(r.pred_means.iter().map(|t| t.vy)));
    for i in 0..4 {
        f.push(pack(r.pred_vars.iter().map(|v| v[i])));
    }
    f.push(pack(r.planned.iter().map(|e| e.s)));
    f.push(pack(r.planned.iter().map(|e| e.d)));
    f.push(pack(r.planned.iter().map(|e| e.phi)));
    f.push(pack(r.planned.iter().map(|e| e.v)));
    f
}

pub fn write_trace<W: Write>(out: W, header: &TraceHeader, records: &[StepRecord]) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<trace>", e);
    let mut out = out;
    writeln!(out, "{}", header.line()).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Trace {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record(record_fields(r)).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn write_trace_file(path: &Path, header: &TraceHeader, records: &[StepRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(std::io::BufWriter::new(file), header, records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn unpack(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|v| v.parse::<f64>().map_err(|_| format!("bad float {v:?}")))
        .collect()
}

fn parse_record(row: &csv::StringRecord) -> std::result::Result<StepRecord, String> {
    if row.len() != TRACE_COLUMNS.len() {
        return Err(format!(
            "expected {} fields, found {}",
            TRACE_COLUMNS.len(),
            row.len()
        ));
    }
    let num = |i: usize| {
        row[i]
            .parse::<f64>()
            .map_err(|_| format!("column {}: bad float", TRACE_COLUMNS[i]))
    };
    let int = |i: usize| {
        row[i]
            .parse::<usize>()
            .map_err(|_| format!("column {}: bad integer", TRACE_COLUMNS[i]))
    };
    let flag = |i: usize| match &row[i] {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("column {}: bad flag", TRACE_COLUMNS[i])),
    };
    let vec = |i: usize| unpack(&row[i]).map_err(|e| format!("column {}: {e}", TRACE_COLUMNS[i]));

    let (px, pvx, py, pvy) = (vec(21)?, vec(22)?, vec(23)?, vec(24)?);
    let vars: Vec<Vec<f64>> = (25..29).map(vec).collect::<std::result::Result<_, _>>()?;
    let (ps, pd, pphi, pv) = (vec(29)?, vec(30)?, vec(31)?, vec(32)?);
    let n = px.len();
    if !(vars
        .iter()
        .map(Vec::len)
        .chain([pvx.len(), py.len(), pvy.len()])
        .all(|l| l == n))
    {
        return Err("prediction columns differ in length".into());
    }
    let m = ps.len();
    if pd.len() != m || pphi.len() != m || pv.len() != m {
        return Err("plan columns differ in length".into());
    }
    Ok(StepRecord {
        step: int(0)?,
        time: num(1)?,
        ev: EvState::new(num(2)?, num(3)?, num(4)?, num(5)?),
        input: EvInput::new(num(6)?, num(7)?),
        tv: TvState::new(num(8)?, num(9)?, num(10)?, num(11)?),
        status: QpStatus::from_label(&row[12]).ok_or("bad status")?,
        used_fallback: flag(13)?,
        case: ConstraintCase::from_label(&row[14]).ok_or("bad case")?,
        committed: CommittedDirection::from_label(&row[15]).ok_or("bad committed direction")?,
        gp_size: int(16)?,
        gp_active: flag(17)?,
        gap: num(18)?,
        objective: num(19)?,
        qp_iterations: int(20)?,
        pred_means: (0..n)
            .map(|k| TvState::new(px[k], pvx[k], py[k], pvy[k]))
            .collect(),
        pred_vars: (0..n)
            .map(|k| Vector4::new(vars[0][k], vars[1][k], vars[2][k], vars[3][k]))
            .collect(),
        planned: (0..m)
            .map(|k| EvState::new(ps[k], pd[k], pphi[k], pv[k]))
            .collect(),
    })
}

pub fn read_trace<R: BufRead>(mut input: R) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| Error::io("<trace>", e))?;
    let header = TraceHeader::parse(first.trim_end())?;
    let mut reader = csv::Reader::from_reader(input);
    let names = reader.headers().map_err(|e| Error::Trace {
        line: 2,
        message: e.to_string(),
    })?;
    if names.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(Error::Trace {
            line: 2,
            message: "unexpected header row".into(),
        });
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 3;
        let row = row.map_err(|e| Error::Trace {
            line,
            message: e.to_string(),
        })?;
        records.push(parse_record(&row).map_err(|message| Error::Trace { line, message })?);
    }
    Ok((header, records))
}

pub fn read_trace_file(path: &Path) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(std::io::BufReader::new(file))
}
