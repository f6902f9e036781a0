//! CSV and manifest output. All floats carry 17 significant digits, the
//! decimal separator is always '.', rows end with LF.

use std::io::Write;

use serde::Serialize;

use crate::cumulant::{CumulantEigenvalue, MagnitudeRow};
use crate::error::Result;
use crate::evolution::DynamicsTrace;
use crate::hamiltonian::CouplingTable;
use crate::opsize::{CoefficientTrace, DeltaTrace};

/// 17 significant digits, locale-independent.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,mean,stderr,samples` trace rows.
pub fn write_trace_csv(mut w: impl Write, trace: &DynamicsTrace) -> Result<()> {
    writeln!(w, "t,mean,stderr,samples")?;
    for (i, &t) in trace.times.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            format_float(t),
            format_float(trace.mean[i]),
            format_float(trace.stderr[i]),
            trace.samples
        )?;
    }
    Ok(())
}

/// `t,re_mean,im_mean,re_stderr,im_stderr,samples` coefficient rows.
pub fn write_coefficient_csv(
    mut w: impl Write,
    times: &[f64],
    trace: &CoefficientTrace,
) -> Result<()> {
    writeln!(w, "t,re_mean,im_mean,re_stderr,im_stderr,samples")?;
    for (i, &t) in times.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            format_float(t),
            format_float(trace.re_mean[i]),
            format_float(trace.im_mean[i]),
            format_float(trace.re_stderr[i]),
            format_float(trace.im_stderr[i]),
            trace.samples
        )?;
    }
    Ok(())
}

/// `t,delta,stderr,combined_stderr` rows for the normalized-difference trace.
pub fn write_delta_csv(mut w: impl Write, times: &[f64], delta: &DeltaTrace) -> Result<()> {
    writeln!(w, "t,delta,stderr,combined_stderr")?;
    for (i, &t) in times.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            format_float(t),
            format_float(delta.delta[i]),
            format_float(delta.stderr[i]),
            format_float(delta.combined_stderr[i])
        )?;
    }
    Ok(())
}

/// `order,m,n,N,Q,value,stderr,method` eigenvalue rows.
pub fn write_eigenvalue_csv(mut w: impl Write, rows: &[CumulantEigenvalue]) -> Result<()> {
    writeln!(w, "order,m,n,N,Q,value,stderr,method")?;
    for e in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.order,
            e.size.m,
            e.size.n,
            e.n,
            e.charge,
            format_float(e.value),
            format_float(e.stderr),
            e.method
        )?;
    }
    Ok(())
}

/// `t,prediction,truncation` reconstruction rows.
pub fn write_reconstruction_csv(
    mut w: impl Write,
    times: &[f64],
    predictions: &[f64],
    truncation: u32,
) -> Result<()> {
    writeln!(w, "t,prediction,truncation")?;
    for (i, &t) in times.iter().enumerate() {
        writeln!(w, "{},{},{}", format_float(t), format_float(predictions[i]), truncation)?;
    }
    Ok(())
}

/// `N,order,magnitude,method,stderr` magnitude rows, sorted by `(N, order)`.
pub fn write_magnitude_csv(mut w: impl Write, rows: &[MagnitudeRow]) -> Result<()> {
    writeln!(w, "N,order,magnitude,method,stderr")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n,
            r.order,
            format_float(r.magnitude),
            r.method,
            format_float(r.stderr)
        )?;
    }
    Ok(())
}

/// `I,Jidx,re,im` coupling rows over all ordered pairs, tuples dash-joined.
pub fn write_couplings_csv(mut w: impl Write, table: &CouplingTable) -> Result<()> {
    writeln!(w, "I,Jidx,re,im")?;
    for (alpha, amp) in table.ordered_entries() {
        let join = |v: &[u32]| v.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-");
        writeln!(
            w,
            "{},{},{},{}",
            join(alpha.creations()),
            join(alpha.annihilations()),
            format_float(amp.re),
            format_float(amp.im)
        )?;
    }
    Ok(())
}

/// Run manifest written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "Q")]
    pub charge: u32,
    pub q: u32,
    #[serde(rename = "J")]
    pub coupling: f64,
    pub master_seed: u64,
    pub samples: u64,
    pub t_max: f64,
    pub dt: f64,
    pub observable: String,
    pub initial_state: String,
    pub code_version: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notices: Vec<String>,
}

pub fn write_manifest(mut w: impl Write, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    writeln!(w, "{json}")?;
    Ok(())
}
