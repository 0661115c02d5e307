//! CSV reading and writing. Output is comma separated with a header row and
//! LF line endings; numbers carry 17 significant digits so they read back
//! to the same bits.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Result, SvError};
use crate::metrics::{
    aggregate, FitRecord, ModelKind, ParamKind, ParamSummaries, PathSummary, ReplicationReport,
    Summary, SummaryKind, Truth, VolErrors, VolMetric,
};
use crate::model::{ChainOutput, ReturnSeries};
use crate::simgen::SimPath;

/// `%.17g` with trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let s = format!("{:.*}", (16 - exp) as usize, x);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn ingest_err(line: usize, msg: impl Into<String>) -> SvError {
    SvError::Ingest {
        line,
        msg: msg.into(),
    }
}

/// `ln(p_t / p_{t-1})` for consecutive prices.
pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

/// Reads a `date,close` price file into log returns. Dates must be
/// strictly ascending (ISO-8601 strings compare lexicographically).
pub fn parse_prices<R: Read>(input: R) -> Result<ReturnSeries> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| ingest_err(1, e.to_string()))?.clone();
    let date_col = column(&headers, "date").ok_or_else(|| ingest_err(1, "missing 'date' column"))?;
    let close_col = column(&headers, "close").ok_or_else(|| ingest_err(1, "missing 'close' column"))?;
    let mut prices = Vec::new();
    let mut last_date: Option<String> = None;
    let mut line = 1;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let l = e.position().map_or(i + 2, |p| p.line() as usize);
            ingest_err(l, e.to_string())
        })?;
        line = line_of(&rec, i + 2);
        let date = rec.get(date_col).ok_or_else(|| ingest_err(line, "missing date"))?;
        let raw = rec.get(close_col).ok_or_else(|| ingest_err(line, "missing close"))?;
        let price: f64 = raw
            .parse()
            .map_err(|_| ingest_err(line, format!("unparsable price '{raw}'")))?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(ingest_err(line, format!("price must be positive, got {raw}")));
        }
        if let Some(prev) = &last_date {
            if date <= prev.as_str() {
                return Err(ingest_err(line, format!("date {date} does not follow {prev}")));
            }
        }
        last_date = Some(date.to_string());
        prices.push(price);
    }
    if prices.len() < 4 {
        return Err(ingest_err(
            line,
            format!("need at least 4 prices, found {}", prices.len()),
        ));
    }
    ReturnSeries::new(log_returns(&prices)).map_err(|e| ingest_err(line, e.to_string()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| SvError::Io(format!("{}: {e}", path.display())))
}

pub fn ingest_prices(path: &Path) -> Result<ReturnSeries> {
    parse_prices(open(path)?)
}

/// A return series and, for simulated input, the true volatilities.
pub struct SeriesInput {
    pub y: ReturnSeries,
    pub h_true: Option<Vec<f64>>,
}

/// Reads either a price file (`date,close`) or a return file with a `y`
/// column, such as the output of `simulate`.
pub fn read_series(path: &Path) -> Result<SeriesInput> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    let mut rdr = reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ingest_err(1, e.to_string()))?.clone();
    if column(&headers, "close").is_some() {
        return Ok(SeriesInput {
            y: parse_prices(text.as_bytes())?,
            h_true: None,
        });
    }
    let y_col = column(&headers, "y").ok_or_else(|| ingest_err(1, "expected a 'close' or 'y' column"))?;
    let h_col = column(&headers, "h_true");
    let mut y = Vec::new();
    let mut h = Vec::new();
    let mut line = 1;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ingest_err(i + 2, e.to_string()))?;
        line = line_of(&rec, i + 2);
        let num = |c: usize| -> Result<f64> {
            let raw = rec.get(c).ok_or_else(|| ingest_err(line, "short row"))?;
            raw.parse()
                .map_err(|_| ingest_err(line, format!("unparsable number '{raw}'")))
        };
        y.push(num(y_col)?);
        if let Some(c) = h_col {
            h.push(num(c)?);
        }
    }
    Ok(SeriesInput {
        y: ReturnSeries::new(y).map_err(|e| ingest_err(line, e.to_string()))?,
        h_true: h_col.map(|_| h),
    })
}

fn table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn sim_csv(sim: &SimPath) -> String {
    let rows = sim
        .y
        .values()
        .iter()
        .zip(sim.h_true.h())
        .enumerate()
        .map(|(i, (y, h))| vec![(i + 1).to_string(), fmt_num(*y), fmt_num(*h)]);
    table("t,y,h_true", rows)
}

/// Retained draws numbered by sweep, starting after burn-in.
pub fn draws_csv(chain: &ChainOutput, burn_in: usize) -> String {
    let rows = (0..chain.rows()).map(|i| {
        vec![
            (burn_in + i + 1).to_string(),
            fmt_num(chain.alpha_draws[i]),
            fmt_num(chain.delta_draws[i]),
            fmt_num(chain.sigma_nu2_draws[i]),
        ]
    });
    table("iteration,alpha,delta,sigma_nu2", rows)
}

pub fn volatility_csv(path: &PathSummary) -> String {
    let rows = (0..path.mean.len()).map(|t| {
        vec![
            (t + 1).to_string(),
            fmt_num(path.mean[t]),
            fmt_num(path.median[t]),
            fmt_num(path.mode[t]),
        ]
    });
    table("t,h_mean,h_median,h_mode", rows)
}

/// Aggregate cells: one row per model, summary and metric.
pub fn report_csv(report: &ReplicationReport) -> String {
    let rows = report.cells.iter().map(|c| {
        vec![
            c.model.to_string(),
            c.summary.to_string(),
            c.metric.to_string(),
            fmt_num(c.value),
        ]
    });
    table("model,summary,metric,value", rows)
}

const RECORD_HEADER: &str = "replication,model,summary,alpha,delta,sigma_nu,vol_srmse,vol_mae,vol_mape";

/// Per-replication summaries, one row per replication, model and summary.
pub fn replications_csv(report: &ReplicationReport) -> String {
    let mut rows = Vec::new();
    for r in &report.records {
        for &s in SummaryKind::ALL {
            let mut row = vec![r.replication.to_string(), r.model.to_string(), s.to_string()];
            row.extend(ParamKind::ALL.iter().map(|p| fmt_num(r.params.get(*p).get(s))));
            row.extend(VolMetric::ALL.iter().map(|v| fmt_num(r.vol_for(s).get(*v))));
            rows.push(row);
        }
    }
    table(RECORD_HEADER, rows)
}

pub fn truth_csv(t: &Truth) -> String {
    table(
        "parameter,value",
        ParamKind::ALL.iter().map(|p| vec![p.to_string(), fmt_num(t.get(*p))]),
    )
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| ingest_err(line, "short row"))?;
    raw.parse()
        .map_err(|_| ingest_err(line, format!("unparsable field '{raw}'")))
}

fn parse_named<T: std::str::FromStr<Err = SvError>>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| ingest_err(line, "short row"))?;
    raw.parse().map_err(|e: SvError| ingest_err(line, e.to_string()))
}

pub fn parse_truth<R: Read>(input: R) -> Result<Truth> {
    let mut t = Truth {
        alpha: f64::NAN,
        delta: f64::NAN,
        sigma_nu: f64::NAN,
    };
    for (i, rec) in reader(input).records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ingest_err(line, e.to_string()))?;
        let p: ParamKind = parse_named(&rec, 0, line)?;
        let v: f64 = parse_field(&rec, 1, line)?;
        match p {
            ParamKind::Alpha => t.alpha = v,
            ParamKind::Delta => t.delta = v,
            ParamKind::SigmaNu => t.sigma_nu = v,
        }
    }
    if ParamKind::ALL.iter().any(|p| t.get(*p).is_nan()) {
        return Err(ingest_err(1, "truth file lacks a parameter"));
    }
    Ok(t)
}

/// Rebuilds the report from its per-replication rows and the truth.
pub fn parse_report<R: Read, S: Read>(records: R, truth: S) -> Result<ReplicationReport> {
    let truth = parse_truth(truth)?;
    let mut rdr = reader(records);
    let headers = rdr.headers().map_err(|e| ingest_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != RECORD_HEADER {
        return Err(ingest_err(1, "unexpected replication header"));
    }
    // (replication, model) -> per-summary (params, vol errors)
    type Slots = [Option<([f64; 3], [f64; 3])>; 3];
    let mut partial: Vec<(usize, ModelKind, Slots)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ingest_err(line, e.to_string()))?;
        let rep: usize = parse_field(&rec, 0, line)?;
        let model: ModelKind = parse_named(&rec, 1, line)?;
        let summary: SummaryKind = parse_named(&rec, 2, line)?;
        let mut p = [0.0; 3];
        let mut v = [0.0; 3];
        for k in 0..3 {
            p[k] = parse_field(&rec, 3 + k, line)?;
            v[k] = parse_field(&rec, 6 + k, line)?;
        }
        let slot = match partial.iter_mut().position(|e| e.0 == rep && e.1 == model) {
            Some(k) => &mut partial[k].2,
            None => {
                partial.push((rep, model, [None; 3]));
                &mut partial.last_mut().expect("just pushed").2
            }
        };
        if slot[summary as usize].replace((p, v)).is_some() {
            return Err(ingest_err(line, "duplicate row"));
        }
    }
    let mut records = Vec::with_capacity(partial.len());
    for (rep, model, slots) in partial {
        let get = |s: usize| {
            slots[s].ok_or_else(|| ingest_err(1, format!("replication {rep} {model} lacks a summary row")))
        };
        let (m, md, mo) = (get(0)?, get(1)?, get(2)?);
        let summary = |k: usize| Summary {
            mean: m.0[k],
            median: md.0[k],
            mode: mo.0[k],
        };
        let vol = |x: ([f64; 3], [f64; 3])| VolErrors {
            srmse: x.1[0],
            mae: x.1[1],
            mape: x.1[2],
        };
        records.push(FitRecord {
            replication: rep,
            model,
            params: ParamSummaries {
                alpha: summary(0),
                delta: summary(1),
                sigma_nu: summary(2),
            },
            vol: [vol(m), vol(md), vol(mo)],
        });
    }
    aggregate(records, truth)
}

pub fn read_report(dir: &Path) -> Result<ReplicationReport> {
    parse_report(open(&dir.join("replications.csv"))?, open(&dir.join("truth.csv"))?)
}

fn per_replication_plot(report: &ReplicationReport, value: impl Fn(&FitRecord) -> f64) -> String {
    let models = report.models();
    let mut header = String::from("replication");
    for m in &models {
        let _ = write!(header, ",{m}");
    }
    let reps: Vec<usize> = report
        .records
        .iter()
        .filter(|r| r.model == models[0])
        .map(|r| r.replication)
        .collect();
    let rows = reps.into_iter().map(|rep| {
        let mut row = vec![rep.to_string()];
        for m in &models {
            let r = report
                .records
                .iter()
                .find(|r| r.model == *m && r.replication == rep)
                .expect("aggregate checked coverage");
            row.push(fmt_num(value(r)));
        }
        row
    });
    table(&header, rows)
}

/// Plot data with the replication index on x and one column per model.
pub fn estimate_plot_csv(report: &ReplicationReport, param: ParamKind, summary: SummaryKind) -> String {
    per_replication_plot(report, |r| r.params.get(param).get(summary))
}

pub fn vol_error_plot_csv(report: &ReplicationReport, metric: VolMetric, summary: SummaryKind) -> String {
    per_replication_plot(report, |r| r.vol_for(summary).get(metric))
}

/// True and estimated (posterior mean) volatility of one replication.
pub fn vol_paths_csv(h_true: &[f64], series: &[(ModelKind, &[f64])]) -> String {
    let mut header = String::from("t,h_true");
    for (m, _) in series {
        let _ = write!(header, ",{m}");
    }
    let rows = (0..h_true.len()).map(|t| {
        let mut row = vec![(t + 1).to_string(), fmt_num(h_true[t])];
        row.extend(series.iter().map(|(_, h)| fmt_num(h[t])));
        row
    });
    table(&header, rows)
}
