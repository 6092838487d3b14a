//! CSV outputs. Floats use 9 significant digits, lines end with LF.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, ParseErrorKind, Result};
use crate::kernel::{Policy, Scenario};
use crate::mfg::{DistributionFlow, IterationRecord};

pub const HISTORY_HEADER: &str = "iteration,learning_rate,exploitability,mean_travel_time";
pub const FLOW_HEADER: &str = "tick,link_id,proportion";
pub const ESTIMATES_HEADER: &str = "n_players,incentive,half_width,n_samples";
pub const TIMING_HEADER: &str = "algorithm,n_players,seconds_per_10_iterations";
pub const POLICY_HEADER: &str = "tick,link_id,destination_id,successor_id,probability";

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.iteration,
            fmt_sig9(r.learning_rate),
            fmt_sig9(r.exploitability),
            fmt_sig9(r.mean_travel_time)
        );
    }
    out
}

/// Proportion on every link at every tick.
pub fn flow_csv(flow: &DistributionFlow) -> String {
    let loads = flow.loads();
    let mut out = format!("{FLOW_HEADER}\n");
    for t in 0..=loads.n_ticks() {
        for (link, &p) in loads.tick(t).iter().enumerate() {
            let _ = writeln!(out, "{t},{link},{}", fmt_sig9(p));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRow {
    pub n_players: usize,
    pub incentive: f64,
    pub half_width: f64,
    pub n_samples: usize,
}

pub fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut out = format!("{ESTIMATES_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.n_players,
            fmt_sig9(r.incentive),
            fmt_sig9(r.half_width),
            r.n_samples
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub algorithm: String,
    pub n_players: usize,
    pub seconds_per_10_iterations: f64,
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = format!("{TIMING_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.algorithm,
            r.n_players,
            fmt_sig9(r.seconds_per_10_iterations)
        );
    }
    out
}

/// Every defined row of the policy, one line per successor.
pub fn policy_csv(policy: &Policy) -> String {
    let mut out = format!("{POLICY_HEADER}\n");
    for (t, link, d, row) in policy.rows() {
        for (&s, &p) in policy.successors(link).iter().zip(row) {
            let _ = writeln!(out, "{t},{link},{d},{s},{}", fmt_sig9(p));
        }
    }
    out
}

/// Splits a CSV body into header and records; every record must have as
/// many fields as the header.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, ParseErrorKind::MalformedRow, "empty CSV"))?;
    let header: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != header.len() {
            return Err(Error::parse(
                i + 1,
                ParseErrorKind::MalformedRow,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        rows.push(fields);
    }
    Ok((header, rows))
}

/// Reads a policy written by [`policy_csv`] for `scenario`.
pub fn parse_policy_csv(text: &str, scenario: &Scenario) -> Result<Policy> {
    let (header, rows) = parse_csv(text)?;
    if header.join(",") != POLICY_HEADER {
        return Err(Error::parse(1, ParseErrorKind::MalformedRow, "not a policy file"));
    }
    let mut policy = Policy::empty(scenario);
    let mut current: Option<((usize, usize, usize), Vec<(usize, f64)>)> = None;
    let flush = |policy: &mut Policy, entry: Option<((usize, usize, usize), Vec<(usize, f64)>)>| -> Result<()> {
        if let Some(((t, link, d), pairs)) = entry {
            let succ = policy.successors(link).to_vec();
            let mut row = vec![0.0; succ.len()];
            for (s, p) in pairs {
                let k = succ.iter().position(|&x| x == s).ok_or(Error::UnknownLink(s))?;
                row[k] = p;
            }
            policy.set_row(t, link, d, &row)?;
        }
        Ok(())
    };
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        let int = |k: usize| {
            r[k].parse::<usize>()
                .map_err(|_| Error::parse(line, ParseErrorKind::NonNumeric, r[k].clone()))
        };
        let key = (int(0)?, int(1)?, int(2)?);
        let s = int(3)?;
        let p: f64 = r[4]
            .parse()
            .map_err(|_| Error::parse(line, ParseErrorKind::NonNumeric, r[4].clone()))?;
        match current.as_mut() {
            Some((k, pairs)) if *k == key => pairs.push((s, p)),
            _ => {
                flush(&mut policy, current.take())?;
                current = Some((key, vec![(s, p)]));
            }
        }
    }
    flush(&mut policy, current.take())?;
    Ok(policy)
}
