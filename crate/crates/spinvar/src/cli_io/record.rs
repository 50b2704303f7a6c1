//! Result records and their deterministic serialization.

use std::io::Write;
use std::path::Path;

use crate::mat_core::SymMatrix;
use crate::optimize::TraceRow;
use crate::path_model::DiscretePath;

pub const RECORD_HEADER: &str = "spinvar-record 1";
pub const TRACE_HEADER: &str = "# spinvar-trace 1";

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Nums(Vec<f64>),
}

/// One level of a reported path, matrices as row-major upper triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub side: String,
    pub k: usize,
    pub weight: f64,
    pub q: Vec<f64>,
}

impl LevelRow {
    /// Rows for levels `Q_0 .. Q_r`, plus a `k = 0` multiplier row on side `<side>_lambda`.
    pub fn from_path(side: &str, path: &DiscretePath, lambda: Option<&SymMatrix>) -> Vec<LevelRow> {
        let r = path.r();
        let mut rows: Vec<LevelRow> = (0..=r)
            .map(|k| LevelRow {
                side: side.to_string(),
                k,
                weight: if k < r { path.weight(k) } else { 1.0 },
                q: path.q(k).upper(),
            })
            .collect();
        if let Some(l) = lambda {
            rows.push(LevelRow { side: format!("{side}_lambda"), k: 0, weight: f64::NAN, q: l.upper() });
        }
        rows
    }
}

/// Named pass/fail check with the measured quantity and its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub command: String,
    pub digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<(String, Value)>,
    pub levels: Vec<LevelRow>,
    pub checks: Vec<CheckRow>,
    /// Convergence traces keyed by side.
    pub traces: Vec<(String, Vec<TraceRow>)>,
}

impl ResultRecord {
    pub fn new(command: &str, digest: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            digest: digest.to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            levels: Vec::new(),
            checks: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, v: Value) {
        self.outputs.push((key.to_string(), v));
    }

    pub fn num(&mut self, key: &str, v: f64) {
        self.push(key, Value::Num(v));
    }

    pub fn check(&mut self, name: &str, value: f64, tol: f64, pass: bool) {
        self.checks.push(CheckRow { name: name.to_string(), value, tol, pass });
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.outputs.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

/// 17 significant digits; enough to round-trip every finite double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn json_num(v: f64) -> String {
    if v.is_finite() {
        fmt_f64(v)
    } else {
        json_str(&fmt_f64(v))
    }
}

fn json_nums(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| json_num(*x)).collect::<Vec<_>>().join(","))
}

fn json_value(v: &Value) -> String {
    match v {
        Value::Num(x) => json_num(*x),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => json_str(s),
        Value::Nums(xs) => json_nums(xs),
    }
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::Num(x) => fmt_f64(*x),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => s.clone(),
        Value::Nums(xs) => xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";"),
    }
}

/// JSON lines: a header, one line per reported level, one per check, then the summary.
pub fn to_json_lines(rec: &ResultRecord) -> String {
    let mut out = format!("{{\"format\":{}}}\n", json_str(RECORD_HEADER));
    for l in &rec.levels {
        out += &format!(
            "{{\"type\":\"level\",\"side\":{},\"k\":{},\"weight\":{},\"q\":{}}}\n",
            json_str(&l.side),
            l.k,
            json_num(l.weight),
            json_nums(&l.q)
        );
    }
    for c in &rec.checks {
        out += &format!(
            "{{\"type\":\"check\",\"name\":{},\"value\":{},\"tol\":{},\"pass\":{}}}\n",
            json_str(&c.name),
            json_num(c.value),
            json_num(c.tol),
            c.pass
        );
    }
    let outputs: Vec<String> = rec.outputs.iter().map(|(k, v)| format!("{}:{}", json_str(k), json_value(v))).collect();
    out += &format!(
        "{{\"type\":\"summary\",\"command\":{},\"digest\":{},\"seed\":{},\"tool_version\":{},\"wall_time_s\":{},\"outputs\":{{{}}}}}\n",
        json_str(&rec.command),
        json_str(&rec.digest),
        rec.seed,
        json_str(&rec.tool_version),
        json_num(rec.wall_time_s),
        outputs.join(",")
    );
    out
}

fn csv_bytes(rows: &[Vec<String>], header: &str) -> Vec<u8> {
    let mut buf = format!("{header}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(&mut buf);
        for r in rows {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory flush");
    }
    buf
}

/// CSV with columns `kind,name,value`; levels and checks carry extra columns.
pub fn to_csv(rec: &ResultRecord) -> Vec<u8> {
    let mut rows: Vec<Vec<String>> = vec![vec!["kind".into(), "name".into(), "value".into()]];
    let meta = [
        ("command", rec.command.clone()),
        ("digest", rec.digest.clone()),
        ("seed", rec.seed.to_string()),
        ("tool_version", rec.tool_version.clone()),
        ("wall_time_s", fmt_f64(rec.wall_time_s)),
    ];
    rows.extend(meta.into_iter().map(|(k, v)| vec!["meta".into(), k.into(), v]));
    rows.extend(rec.outputs.iter().map(|(k, v)| vec!["output".into(), k.clone(), csv_value(v)]));
    for c in &rec.checks {
        rows.push(vec!["check".into(), c.name.clone(), fmt_f64(c.value), fmt_f64(c.tol), c.pass.to_string()]);
    }
    for l in &rec.levels {
        let q = l.q.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
        rows.push(vec!["level".into(), format!("{}:{}", l.side, l.k), fmt_f64(l.weight), q]);
    }
    csv_bytes(&rows, &format!("# {RECORD_HEADER}"))
}

/// Convergence trace in stage order.
pub fn trace_csv(rows: &[TraceRow]) -> Vec<u8> {
    let mut out: Vec<Vec<String>> =
        vec![["stage", "eps", "iter", "value", "grad_norm", "min_increment_eig"].iter().map(|s| s.to_string()).collect()];
    for r in rows {
        out.push(vec![
            r.stage.to_string(),
            fmt_f64(r.eps),
            r.iter.to_string(),
            fmt_f64(r.value),
            fmt_f64(r.grad_norm),
            fmt_f64(r.min_increment_eig),
        ]);
    }
    csv_bytes(&out, TRACE_HEADER)
}

/// Writes the record to `path` in the given format.
pub fn emit(rec: &ResultRecord, format: Format, path: &Path) -> std::io::Result<()> {
    let bytes = match format {
        Format::JsonLines => to_json_lines(rec).into_bytes(),
        Format::Csv => to_csv(rec),
    };
    std::fs::File::create(path)?.write_all(&bytes)
}

/// Writes the record plus one trace CSV per side into `dir`; returns the written paths.
pub fn emit_all(rec: &ResultRecord, format: Format, dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let main = dir.join(format!("{}.{}", rec.command, format.extension()));
    emit(rec, format, &main)?;
    let mut written = vec![main];
    for (side, rows) in &rec.traces {
        let p = dir.join(format!("{}_trace_{}.csv", rec.command, side));
        std::fs::write(&p, trace_csv(rows))?;
        written.push(p);
    }
    Ok(written)
}
