use std::fmt::Write;

/// One CSV field. Floats are written in scientific notation with 17
/// significant digits so that they round-trip exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn render(&self, out: &mut String) {
        match *self {
            Cell::Float(x) => out.push_str(&format_float(x)),
            Cell::Int(n) => write!(out, "{n}").expect("write to String"),
            Cell::Bool(b) => out.push_str(if b { "true" } else { "false" }),
        }
    }
}

/// Render a header and rows with `\n` line endings.
pub fn render(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (i, c) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            c.render(&mut out);
        }
        out.push('\n');
    }
    out
}
