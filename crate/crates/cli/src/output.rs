//! Output files: CSV with a commented metadata header, JSON with a `meta`
//! block, and a `.meta.json` sidecar carrying timings for every CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use spincat::analysis::{AnalysisOptions, GridCell, RingScaling, StageTiming, SweepRow, TableCell};
use spincat::Error;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "-", env!("SPINCAT_GIT_DESCRIBE"));

#[derive(Serialize)]
pub struct Meta<'a, A: Serialize> {
    pub version: &'static str,
    pub command: &'static str,
    pub args: &'a A,
    pub options: &'a AnalysisOptions,
    pub timings: Vec<StageTiming>,
}

impl<'a, A: Serialize> Meta<'a, A> {
    pub fn new(command: &'static str, args: &'a A, options: &'a AnalysisOptions, timings: Vec<StageTiming>) -> Self {
        Meta {
            version: VERSION,
            command,
            args,
            options,
            timings,
        }
    }

    /// Everything except timings, so reruns reproduce it byte for byte.
    fn config_line(&self) -> Result<String, Error> {
        Ok(serde_json::to_string(&serde_json::json!({
            "command": self.command,
            "args": self.args,
            "options": self.options,
        }))?)
    }
}

pub fn timed<R>(f: impl FnOnce() -> Result<R, Error>) -> Result<(R, f64), Error> {
    let t = Instant::now();
    let r = f()?;
    Ok((r, t.elapsed().as_secs_f64()))
}

pub fn single_stage(stage: &str, seconds: f64) -> Vec<StageTiming> {
    vec![StageTiming {
        stage: stage.into(),
        seconds,
    }]
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, Error> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn json<A: Serialize, T: Serialize>(&self, stem: &str, meta: &Meta<A>, result: &T) -> Result<PathBuf, Error> {
        let path = self.dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&serde_json::json!({ "meta": meta, "result": result }))?;
        fs::write(&path, format!("{text}\n"))?;
        Ok(path)
    }

    pub fn csv<A: Serialize, R: Serialize>(&self, stem: &str, meta: &Meta<A>, rows: &[R]) -> Result<PathBuf, Error> {
        let path = self.dir.join(format!("{stem}.csv"));
        let mut file = fs::File::create(&path)?;
        writeln!(file, "# spincat {}", meta.version)?;
        writeln!(file, "# config {}", meta.config_line()?)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        for r in rows {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush()?;
        let sidecar = self.dir.join(format!("{stem}.meta.json"));
        fs::write(&sidecar, format!("{}\n", serde_json::to_string_pretty(meta)?))?;
        Ok(path)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

fn rfi(value: f64, divergent: bool) -> f64 {
    if divergent {
        f64::INFINITY
    } else {
        value
    }
}

#[derive(Serialize)]
pub struct GridRow {
    #[serde(rename = "M1")]
    m1: String,
    #[serde(rename = "M2")]
    m2: String,
    #[serde(rename = "D_FI")]
    d_fi: f64,
    #[serde(rename = "D_RFI")]
    d_rfi: f64,
}

impl From<&GridCell> for GridRow {
    fn from(c: &GridCell) -> Self {
        GridRow {
            m1: c.m1.to_string(),
            m2: c.m2.to_string(),
            d_fi: c.d_fi,
            d_rfi: rfi(c.d_rfi.value, c.d_rfi.divergent),
        }
    }
}

#[derive(Serialize)]
pub struct SweepRowOut {
    #[serde(rename = "M")]
    m: String,
    subset_id: String,
    #[serde(rename = "P")]
    p: f64,
}

impl From<&SweepRow> for SweepRowOut {
    fn from(r: &SweepRow) -> Self {
        SweepRowOut {
            m: r.m.to_string(),
            subset_id: r.subset_id.clone(),
            p: r.p,
        }
    }
}

#[derive(Serialize)]
pub struct RingRow {
    s_a: String,
    #[serde(rename = "S")]
    s: String,
    #[serde(rename = "D_FI")]
    d_fi: f64,
    #[serde(rename = "D_FI_components")]
    d_fi_components: f64,
    #[serde(rename = "D_RFI")]
    d_rfi: f64,
    #[serde(rename = "D_LM")]
    d_lm: Option<usize>,
    #[serde(rename = "D_FI_ideal")]
    d_fi_ideal: f64,
    #[serde(rename = "D_FI_linear_fit")]
    d_fi_fit: f64,
    #[serde(rename = "ln_D_RFI_fit")]
    ln_d_rfi_fit: Option<f64>,
}

pub fn ring_rows(r: &RingScaling) -> Vec<RingRow> {
    r.points
        .iter()
        .enumerate()
        .map(|(k, p)| RingRow {
            s_a: p.s_a.to_string(),
            s: p.total_spin.to_string(),
            d_fi: p.d_fi,
            d_fi_components: p.d_fi_components,
            d_rfi: rfi(p.d_rfi.value, p.d_rfi.divergent),
            d_lm: p.d_lm,
            d_fi_ideal: p.ideal_d_fi,
            d_fi_fit: p.d_fi - r.d_fi_linear.residuals[k],
            ln_d_rfi_fit: r
                .d_rfi_exponential
                .as_ref()
                .map(|f| p.d_rfi.value.ln() - f.residuals[k]),
        })
        .collect()
}

#[derive(Serialize)]
pub struct TableRow {
    column: String,
    measure: String,
    computed: f64,
    reference: f64,
    relative_deviation: f64,
    tolerance: f64,
    within_tolerance: bool,
}

impl From<&TableCell> for TableRow {
    fn from(c: &TableCell) -> Self {
        TableRow {
            column: c.column.clone(),
            measure: c.measure.clone(),
            computed: c.computed,
            reference: c.reference,
            relative_deviation: c.relative_deviation,
            tolerance: c.tolerance,
            within_tolerance: c.within_tolerance,
        }
    }
}
