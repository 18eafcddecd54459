//! CSV output and parse-back.
//!
//! One header plus one row per record, `\n` line endings, floats printed
//! with 9 significant digits in scientific notation so a rerun of the same
//! config reproduces the file byte for byte. Wall time is deliberately not
//! a column (it would break that guarantee); parsed records carry zero
//! there.

use std::io::Write;
use std::path::Path;

use crate::runner::ResultRecord;
use crate::HarnessError;

pub const CSV_HEADER: &str = "scenario,axis_value,csi,architecture,feasible_set,\
se_bits_per_s_per_hz,power_watts,ee_bits_per_joule,iterations,converged,seed";

/// 9-significant-digit float form used in the CSV.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn record_row(r: &ResultRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.scenario,
        format_float(r.axis_value),
        r.csi,
        r.architecture,
        r.feasible_set,
        format_float(r.se_bits_per_s_per_hz),
        format_float(r.power_watts),
        format_float(r.ee_bits_per_joule),
        r.iterations,
        r.converged,
        r.seed
    )
}

/// Render records to the CSV text form.
pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&record_row(r));
        out.push('\n');
    }
    out
}

/// Write records to `path` (UTF-8, `\n` newlines).
pub fn emit_csv(records: &[ResultRecord], path: &Path) -> Result<(), HarnessError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| HarnessError::Io(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(to_csv(records).as_bytes())
        .map_err(|e| HarnessError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Parse a CSV produced by [`emit_csv`]. Wall times are not stored in the
/// file and come back as zero.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HarnessError::Io("empty CSV".into()))?;
    if header != CSV_HEADER {
        return Err(HarnessError::Io(format!("unexpected CSV header: {header}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(HarnessError::Io(format!(
                "row {}: expected 11 fields, found {}",
                i + 2,
                fields.len()
            )));
        }
        let fl = |s: &str, name: &str| {
            s.parse::<f64>()
                .map_err(|e| HarnessError::Io(format!("row {}: bad {name}: {e}", i + 2)))
        };
        records.push(ResultRecord {
            scenario: fields[0].to_string(),
            axis_value: fl(fields[1], "axis_value")?,
            csi: fields[2].to_string(),
            architecture: fields[3].to_string(),
            feasible_set: fields[4].to_string(),
            se_bits_per_s_per_hz: fl(fields[5], "se")?,
            power_watts: fl(fields[6], "power")?,
            ee_bits_per_joule: fl(fields[7], "ee")?,
            iterations: fields[8]
                .parse()
                .map_err(|e| HarnessError::Io(format!("row {}: bad iterations: {e}", i + 2)))?,
            converged: fields[9]
                .parse()
                .map_err(|e| HarnessError::Io(format!("row {}: bad converged: {e}", i + 2)))?,
            seed: fields[10]
                .parse()
                .map_err(|e| HarnessError::Io(format!("row {}: bad seed: {e}", i + 2)))?,
            wall_time_s: 0.0,
        });
    }
    Ok(records)
}

/// Read and parse a CSV file.
pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(&text)
}
