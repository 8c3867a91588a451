//! CSV and JSON writers. Floats carry 9 significant digits.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::integrator::Trajectory;
use crate::spectrum::Label;

/// Rounds to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest text for `round9(x)`; scientific notation for very small or
/// large magnitudes.
pub fn fmt9(x: f64) -> String {
    let r = round9(x);
    let a = r.abs();
    if r != 0.0 && !(1e-4..1e9).contains(&a) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

/// Serializes with every float rounded to 9 significant digits.
pub fn rounded_json<T: Serialize>(value: &T) -> Value {
    fn walk(v: Value) -> Value {
        match v {
            Value::Number(n) if n.is_f64() => {
                serde_json::Number::from_f64(round9(n.as_f64().unwrap())).map_or(Value::Null, Value::Number)
            }
            Value::Array(a) => Value::Array(a.into_iter().map(walk).collect()),
            Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, walk(v))).collect()),
            other => other,
        }
    }
    walk(serde_json::to_value(value).expect("value serializes"))
}

/// Writes through a temporary file and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&rounded_json(value))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Column layout of a trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryColumns {
    pub fock_cutoff: usize,
    pub joint: bool,
    pub dressed: Vec<Label>,
}

pub const BASE_COLUMNS: [&str; 7] = ["t", "beta_t", "mean_n", "mandel_q", "q_valid", "p_e", "leakage"];

impl TrajectoryColumns {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        if self.joint {
            h.extend((0..self.fock_cutoff).map(|n| format!("P_g_{n}")));
            h.extend((0..self.fock_cutoff).map(|n| format!("P_e_{n}")));
        }
        h.extend(self.dressed.iter().map(|l| format!("R_{l}")));
        h
    }

    fn rows(&self, traj: &Trajectory, unit: f64) -> Vec<Vec<String>> {
        traj.times
            .iter()
            .zip(&traj.records)
            .zip(&traj.leakage)
            .map(|((&t, r), &leak)| {
                let mut row = vec![
                    fmt9(t),
                    fmt9(t * unit),
                    fmt9(r.mean_n),
                    fmt9(r.mandel_q.unwrap_or(0.0)),
                    if r.mandel_q.is_some() { "1" } else { "0" }.to_string(),
                    fmt9(r.p_excited),
                    fmt9(leak),
                ];
                if self.joint {
                    row.extend(r.joint_g.iter().chain(&r.joint_e).map(|&p| fmt9(p)));
                }
                for &label in &self.dressed {
                    row.push(fmt9(r.dressed_population(label).unwrap_or(f64::NAN)));
                }
                row
            })
            .collect()
    }
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn write_trajectory(path: &Path, columns: &TrajectoryColumns, traj: &Trajectory, unit: f64) -> Result<()> {
    write_table(path, &columns.header(), &columns.rows(traj, unit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(0.1234567891234), "0.123456789");
        assert_eq!(fmt9(2.0565685424949236), "2.05656854");
        assert_eq!(fmt9(7.0710678118654752e-5), "7.07106781e-5");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(round9(452548.1540231), 452548.154);
    }

    #[test]
    fn json_rounding() {
        let v = rounded_json(&serde_json::json!({"a": 0.1234567891234, "b": [1, 2.00000000001], "c": "x"}));
        assert_eq!(v["a"].as_f64().unwrap(), 0.123456789);
        assert_eq!(v["b"][0].as_u64().unwrap(), 1);
        assert_eq!(v["b"][1].as_f64().unwrap(), 2.0);
    }

    #[test]
    fn header_layout() {
        let c = TrajectoryColumns { fock_cutoff: 3, joint: true, dressed: vec![Label::Ground, Label::plus(2)] };
        let h = c.header();
        assert_eq!(h.len(), 7 + 6 + 2);
        assert_eq!(h[7], "P_g_0");
        assert_eq!(h[10], "P_e_0");
        assert_eq!(h[14], "R_2+");
    }
}
