use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{DataState, FeatureRow, ThroughputTrace};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 9] = [
    "t_s",
    "throughput_mbps",
    "speed_kmh",
    "dist_m",
    "rssi_dbm",
    "rsrp_dbm",
    "rsrq_db",
    "handovers",
    "data_state",
];

// Relative slack when deciding whether timestamps already lie on a uniform grid.
const GRID_TOLERANCE: f64 = 1e-6;

struct RawRow {
    t: f64,
    throughput: f64,
    features: FeatureRow,
}

/// Load a trace CSV. Columns are matched by name; unknown columns are ignored.
/// Non-uniform timestamps are resampled onto a uniform grid by linear interpolation.
pub fn load_trace(path: impl AsRef<Path>) -> Result<ThroughputTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_trace(file, id)
}

pub(crate) fn read_trace<R: std::io::Read>(reader: R, id: String) -> Result<ThroughputTrace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();

    let mut columns = [0usize; 9];
    for (slot, name) in columns.iter_mut().zip(TRACE_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }
    for h in headers.iter() {
        if !TRACE_HEADER.contains(&h) {
            warn!("trace {id}: ignoring extra column `{h}`");
        }
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| record.get(columns[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{}` as a number", TRACE_HEADER[k], field(k)),
            })
        };
        let handovers = field(7).parse::<u32>().map_err(|_| Error::Parse {
            line,
            message: format!("column `handovers`: expected a non-negative integer, got `{}`", field(7)),
        })?;
        let data_state = DataState::from_code(field(8)).ok_or_else(|| Error::Parse {
            line,
            message: format!("column `data_state`: expected C or I, got `{}`", field(8)),
        })?;
        let throughput = num(1)?;
        if !(throughput >= 0.0) {
            return Err(Error::Parse { line, message: format!("negative throughput {throughput}") });
        }
        rows.push(RawRow {
            t: num(0)?,
            throughput,
            features: FeatureRow {
                speed_kmh: num(2)?,
                dist_m: num(3)?,
                rssi_dbm: num(4)?,
                rsrp_dbm: num(5)?,
                rsrq_db: num(6)?,
                handovers,
                data_state,
            },
        });
    }

    if rows.is_empty() {
        return Err(Error::Invalid(format!("trace {id} has no rows")));
    }
    if rows.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Invalid(format!("trace {id}: timestamps must be strictly increasing")));
    }

    if rows.len() == 1 {
        let r = rows.pop().unwrap();
        return ThroughputTrace::new(id, 1.0, vec![r.throughput], vec![r.features]);
    }

    let step = rows[1].t - rows[0].t;
    let uniform = rows
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - step).abs() <= GRID_TOLERANCE * step);
    if uniform {
        let (throughput, features) = rows.into_iter().map(|r| (r.throughput, r.features)).unzip();
        return ThroughputTrace::new(id, step, throughput, features);
    }

    warn!("trace {id}: non-uniform timestamps, resampling onto a uniform grid");
    resample(id, &rows)
}

fn resample(id: String, rows: &[RawRow]) -> Result<ThroughputTrace> {
    let n = rows.len();
    let t0 = rows[0].t;
    let period = (rows[n - 1].t - t0) / (n - 1) as f64;
    let lerp = |a: f64, b: f64, w: f64| a + (b - a) * w;

    let mut throughput = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    let mut seg = 0usize;
    let mut consumed = 0usize; // rows whose handovers have been attributed
    for k in 0..n {
        let g = if k == n - 1 { rows[n - 1].t } else { t0 + k as f64 * period };
        while seg + 1 < n - 1 && rows[seg + 1].t <= g {
            seg += 1;
        }
        let (a, b) = (&rows[seg], &rows[seg + 1]);
        let w = ((g - a.t) / (b.t - a.t)).clamp(0.0, 1.0);

        let mut handovers = 0u32;
        while consumed < n && rows[consumed].t <= g {
            handovers += rows[consumed].features.handovers;
            consumed += 1;
        }
        let prev = if w >= 1.0 { b } else { a };
        throughput.push(lerp(a.throughput, b.throughput, w));
        features.push(FeatureRow {
            speed_kmh: lerp(a.features.speed_kmh, b.features.speed_kmh, w),
            dist_m: lerp(a.features.dist_m, b.features.dist_m, w),
            rssi_dbm: lerp(a.features.rssi_dbm, b.features.rssi_dbm, w),
            rsrp_dbm: lerp(a.features.rsrp_dbm, b.features.rsrp_dbm, w),
            rsrq_db: lerp(a.features.rsrq_db, b.features.rsrq_db, w),
            handovers,
            data_state: prev.features.data_state,
        });
    }
    ThroughputTrace::new(id, period, throughput, features)
}

pub fn save_trace(trace: &ThroughputTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_trace(trace, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace<W: Write>(trace: &ThroughputTrace, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", TRACE_HEADER.join(","))?;
    for (i, (y, f)) in trace.throughput.iter().zip(&trace.features).enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            i as f64 * trace.sample_period,
            y,
            f.speed_kmh,
            f.dist_m,
            f.rssi_dbm,
            f.rsrp_dbm,
            f.rsrq_db,
            f.handovers,
            f.data_state.code()
        )?;
    }
    Ok(())
}
