//! Serialization of results: CSV with 17 significant digits and JSON with a
//! stable key order.

use serde::Serialize;

use crate::evolve::{DiffusiveResult, EvolutionTrace};
use crate::grid::Comb;
use crate::spectra::BlochSweep;
use crate::stationary::Solution;

/// Formats a float so that it round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Comma-separated table with a header row.
pub fn csv_table<'a, I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn table(header: &[&str], rows: Vec<Vec<f64>>) -> String {
    csv_table(header, rows.iter().map(|r| r.as_slice()))
}

/// JSON with object keys sorted, so output is independent of field order.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn solution_csv(sol: &Solution) -> String {
    let g = sol.field.grid;
    table(
        &["x", "u1", "u2"],
        (0..g.n).map(|j| vec![g.x(j), sol.field.u1[j], sol.field.u2[j]]).collect(),
    )
}

pub fn solution_json(sol: &Solution) -> serde_json::Result<String> {
    to_json(sol)
}

pub fn solution_from_json(text: &str) -> serde_json::Result<Solution> {
    serde_json::from_str(text)
}

pub fn comb_csv(comb: &Comb) -> String {
    table(
        &["k", "log_magnitude"],
        comb.wavenumbers.iter().zip(&comb.log_magnitude).map(|(k, v)| vec![*k, *v]).collect(),
    )
}

/// One row per eigenvalue: `xi, re, im`.
pub fn sweep_csv(sweep: &BlochSweep) -> String {
    let rows = sweep
        .slices
        .iter()
        .flat_map(|s| s.eigenvalues.iter().map(move |l| vec![s.xi, l.re, l.im]))
        .collect();
    table(&["xi", "re", "im"], rows)
}

pub fn sweep_json(sweep: &BlochSweep) -> serde_json::Result<String> {
    to_json(sweep)
}

pub fn trace_csv(trace: &EvolutionTrace) -> String {
    let rows = (0..trace.times.len())
        .map(|i| vec![trace.times[i], trace.raw_l2[i], trace.perturbation_l2[i], trace.gamma[i]])
        .collect();
    table(&["t", "raw_l2", "mod_l2", "gamma"], rows)
}

pub fn diffusive_csv(res: &DiffusiveResult) -> String {
    let rows = (0..res.times.len()).map(|i| vec![res.times[i], res.raw_l2[i], res.mod_l2[i]]).collect();
    table(&["t", "raw_l2", "mod_l2"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn table_has_header_and_rows() {
        let rows = [[1.0, 2.0], [3.0, 4.0]];
        let s = csv_table(&["a", "b"], rows.iter().map(|r| r.as_slice()));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "a,b");
        assert_eq!(lines[1], "1.0000000000000000e0,2.0000000000000000e0");
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: f64,
        }
        let s = to_json(&S { zeta: 1.0, alpha: 2.0 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
    }
}
