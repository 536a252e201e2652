//! Markdown tables and number formatting for terminal and report output.

pub fn md_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n", headers.join(" | "));
    s += &format!("|{}\n", "---|".repeat(headers.len()));
    for r in rows {
        s += &format!("| {} |\n", r.join(" | "));
    }
    s
}

pub fn num(v: f64, digits: usize) -> String {
    if v.is_finite() && v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.*e}", digits.saturating_sub(1))
    } else {
        format!("{v:.digits$}")
    }
}

pub fn opt_num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| num(x, digits))
}

pub fn opt_int(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn mean_pm(mean: Option<f64>, std: Option<f64>, digits: usize) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{} ± {}", num(m, digits), num(s, digits)),
        (Some(m), None) => num(m, digits),
        _ => "DNF".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        let t = md_table(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(t, "| a | b |\n|---|---|\n| 1 | 2 |\n");
    }

    #[test]
    fn formatting() {
        assert_eq!(num(1.23456, 3), "1.235");
        assert_eq!(num(2e-5, 3), "2.00e-5");
        assert_eq!(mean_pm(Some(310.0), Some(10.0), 0), "310 ± 10");
        assert_eq!(mean_pm(None, None, 2), "DNF");
    }
}
