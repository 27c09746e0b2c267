//! CPLEX LP text format, with indicator rows (`b = 1 -> ...`) and a
//! `PWLObj` section for piecewise-linear objective terms.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{MipModel, PwlTerm, Sense, VarId, VarKind, Variable};
use crate::error::{Error, Result};

const WRAP: usize = 200;

pub(crate) fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn push_wrapped(out: &mut String, line: &mut String, piece: &str) {
    if line.len() + piece.len() + 1 > WRAP {
        out.push_str(line.trim_end());
        out.push('\n');
        line.clear();
        line.push_str("   ");
    }
    line.push(' ');
    line.push_str(piece);
}

fn write_terms(out: &mut String, line: &mut String, model: &MipModel, terms: &[(VarId, f64)]) {
    if terms.is_empty() {
        push_wrapped(out, line, "0");
        return;
    }
    for (pos, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        let mag = c.abs();
        let name = &model.vars[v].name;
        let piece = if mag == 1.0 { name.clone() } else { format!("{} {name}", fmt_num(mag)) };
        if pos == 0 && sign == "+" {
            push_wrapped(out, line, &piece);
        } else {
            push_wrapped(out, line, &format!("{sign} {piece}"));
        }
    }
}

/// Flat extension so that solvers extrapolating the end slopes agree with
/// the constant continuation used here.
fn flat_extended(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    if pts.len() == 1 {
        pts.push((pts[0].0 + 1.0, pts[0].1));
        return pts;
    }
    if pts[0].1 != pts[1].1 {
        pts.insert(0, (pts[0].0 - 1.0, pts[0].1));
    }
    let k = pts.len();
    if pts[k - 1].1 != pts[k - 2].1 {
        pts.push((pts[k - 1].0 + 1.0, pts[k - 1].1));
    }
    pts
}

pub fn write_lp(model: &MipModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\Problem name: {}", model.name);
    out.push_str("Minimize\n");
    let mut line = String::from(" obj:");
    write_terms(&mut out, &mut line, model, &model.objective);
    out.push_str(&line);
    out.push('\n');
    out.push_str("Subject To\n");
    for c in &model.constraints {
        let mut line = format!(" {}:", c.name);
        write_terms(&mut out, &mut line, model, &c.terms);
        push_wrapped(&mut out, &mut line, &format!("{} {}", c.sense.symbol(), fmt_num(c.rhs)));
        out.push_str(&line);
        out.push('\n');
    }
    for ind in &model.indicators {
        let mut line = format!(" {}: {} = {} ->", ind.name, model.vars[ind.var].name, ind.value as u8);
        write_terms(&mut out, &mut line, model, &ind.terms);
        push_wrapped(&mut out, &mut line, &format!("{} {}", ind.sense.symbol(), fmt_num(ind.rhs)));
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for v in &model.vars {
        if v.lb == f64::NEG_INFINITY && v.ub == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else if v.lb == v.ub {
            let _ = writeln!(out, " {} = {}", v.name, fmt_num(v.lb));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lb), v.name, fmt_num(v.ub));
        }
    }
    for (title, kind) in [("Binaries", VarKind::Binary), ("Generals", VarKind::Integer)] {
        let names: Vec<&str> = model.vars.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
        if names.is_empty() {
            continue;
        }
        out.push_str(title);
        out.push('\n');
        let mut line = String::new();
        for name in names {
            push_wrapped(&mut out, &mut line, name);
        }
        out.push_str(&line);
        out.push('\n');
    }
    if !model.pwl.is_empty() {
        out.push_str("PWLObj\n");
        for term in &model.pwl {
            let mut line = format!(" {}:", model.vars[term.var].name);
            for (x, y) in flat_extended(&term.points) {
                push_wrapped(&mut out, &mut line, &format!("({}, {})", fmt_num(x), fmt_num(y)));
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

pub fn export_lp(model: &MipModel, path: &Path) -> Result<()> {
    std::fs::write(path, write_lp(model)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    Pwl,
}

fn section_of(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" | "bound" => Some(Section::Bounds),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "generals" | "general" | "gen" => Some(Section::Generals),
        "pwlobj" => Some(Section::Pwl),
        "end" => Some(Section::None),
        _ => None,
    }
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| Error::Format { row: line, column: 0, message: format!("expected number, found '{tok}'") }),
    }
}

fn is_num(tok: &str) -> bool {
    tok.parse::<f64>().is_ok() || matches!(tok.to_ascii_lowercase().as_str(), "inf" | "+inf" | "-inf")
}

fn parse_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

struct Reader {
    order: Vec<String>,
    index: HashMap<String, VarId>,
}

impl Reader {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        self.order.push(name.to_string());
        self.index.insert(name.to_string(), self.order.len() - 1);
        self.order.len() - 1
    }

    fn terms(&mut self, toks: &[&str], line: usize) -> Result<Vec<(VarId, f64)>> {
        let mut out = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for &t in toks {
            match t {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                _ if is_num(t) => coef = Some(parse_num(t, line)?),
                _ => {
                    let c = sign * coef.unwrap_or(1.0);
                    out.push((self.var(t), c));
                    sign = 1.0;
                    coef = None;
                }
            }
        }
        if coef.is_some_and(|c| c != 0.0) {
            return Err(Error::Format { row: line, column: 0, message: "constant terms are not supported".into() });
        }
        Ok(out)
    }
}

/// Statement tokens grouped by the `name:` label that opens them.
fn statements(lines: &[(usize, String)]) -> Vec<(usize, String, Vec<String>)> {
    let mut out: Vec<(usize, String, Vec<String>)> = Vec::new();
    for (no, line) in lines {
        for tok in line.split_whitespace() {
            if let Some(name) = tok.strip_suffix(':') {
                out.push((*no, name.to_string(), Vec::new()));
            } else if let Some(last) = out.last_mut() {
                last.2.push(tok.to_string());
            } else {
                out.push((*no, String::new(), vec![tok.to_string()]));
            }
        }
    }
    out
}

/// Parse the LP subset produced by [`write_lp`].
pub fn read_lp(text: &str) -> Result<MipModel> {
    let mut name = String::new();
    let mut by_section: HashMap<u8, Vec<(usize, String)>> = HashMap::new();
    let mut section = Section::None;
    for (no, raw) in text.lines().enumerate() {
        let no = no + 1;
        if let Some(rest) = raw.strip_prefix("\\Problem name:") {
            name = rest.trim().to_string();
            continue;
        }
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_of(line) {
            section = s;
            continue;
        }
        if section == Section::None {
            return Err(Error::Format { row: no, column: 1, message: "content outside any section".into() });
        }
        by_section.entry(section as u8).or_default().push((no, line.to_string()));
    }
    let get = |s: Section| by_section.get(&(s as u8)).cloned().unwrap_or_default();
    let mut rd = Reader { order: Vec::new(), index: HashMap::new() };

    // Bounds first so variable order follows the writer's.
    let mut bounds: HashMap<String, (Option<f64>, Option<f64>)> = HashMap::new();
    for (no, line) in get(Section::Bounds) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let (var, lb, ub) = match toks.as_slice() {
            [v, f] if f.eq_ignore_ascii_case("free") => (*v, Some(f64::NEG_INFINITY), Some(f64::INFINITY)),
            [a, s1, v, s2, b] if parse_sense(s1) == Some(Sense::Le) && parse_sense(s2) == Some(Sense::Le) => {
                (*v, Some(parse_num(a, no)?), Some(parse_num(b, no)?))
            }
            [v, "=", x] => {
                let x = parse_num(x, no)?;
                (*v, Some(x), Some(x))
            }
            [v, s, x] if !is_num(v) => match parse_sense(s) {
                Some(Sense::Le) => (*v, None, Some(parse_num(x, no)?)),
                Some(Sense::Ge) => (*v, Some(parse_num(x, no)?), None),
                _ => return Err(Error::Format { row: no, column: 0, message: format!("bad bound '{line}'") }),
            },
            [x, s, v] => match parse_sense(s) {
                Some(Sense::Le) => (*v, Some(parse_num(x, no)?), None),
                Some(Sense::Ge) => (*v, None, Some(parse_num(x, no)?)),
                _ => return Err(Error::Format { row: no, column: 0, message: format!("bad bound '{line}'") }),
            },
            _ => return Err(Error::Format { row: no, column: 0, message: format!("bad bound '{line}'") }),
        };
        rd.var(var);
        let e = bounds.entry(var.to_string()).or_default();
        if lb.is_some() {
            e.0 = lb;
        }
        if ub.is_some() {
            e.1 = ub;
        }
    }

    let mut objective = Vec::new();
    for (no, _, toks) in statements(&get(Section::Objective)) {
        let toks: Vec<&str> = toks.iter().map(String::as_str).collect();
        objective.extend(rd.terms(&toks, no)?);
    }
    objective.retain(|&(_, c)| c != 0.0);

    let mut constraints = Vec::new();
    let mut indicators = Vec::new();
    for (no, cname, toks) in statements(&get(Section::Constraints)) {
        let toks: Vec<&str> = toks.iter().map(String::as_str).collect();
        let (head, body) = match toks.iter().position(|&t| t == "->") {
            Some(p) => (Some(&toks[..p]), &toks[p + 1..]),
            None => (None, &toks[..]),
        };
        let sp = body
            .iter()
            .rposition(|t| parse_sense(t).is_some())
            .ok_or_else(|| Error::Format { row: no, column: 0, message: format!("row '{cname}' has no sense") })?;
        if sp + 2 != body.len() {
            return Err(Error::Format { row: no, column: 0, message: format!("row '{cname}' needs one right-hand side") });
        }
        let terms = rd.terms(&body[..sp], no)?;
        let sense = parse_sense(body[sp]).expect("checked");
        let rhs = parse_num(body[sp + 1], no)?;
        match head {
            Some([v, "=", val]) => {
                let var = rd.var(v);
                let value = parse_num(val, no)? != 0.0;
                indicators.push(super::Indicator { name: cname, var, value, terms, sense, rhs });
            }
            Some(_) => return Err(Error::Format { row: no, column: 0, message: format!("bad indicator '{cname}'") }),
            None => constraints.push(super::Constraint { name: cname, terms, sense, rhs }),
        }
    }

    let mut kinds: HashMap<String, VarKind> = HashMap::new();
    for (s, kind) in [(Section::Binaries, VarKind::Binary), (Section::Generals, VarKind::Integer)] {
        for (_, line) in get(s) {
            for tok in line.split_whitespace() {
                rd.var(tok);
                kinds.insert(tok.to_string(), kind);
            }
        }
    }

    let mut pwl = Vec::new();
    for (no, vname, toks) in statements(&get(Section::Pwl)) {
        let joined = toks.join(" ");
        let nums: Vec<&str> =
            joined.split(|c: char| c == '(' || c == ')' || c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if nums.is_empty() || nums.len() % 2 != 0 {
            return Err(Error::Format { row: no, column: 0, message: format!("bad breakpoints for '{vname}'") });
        }
        let points = nums.chunks(2).map(|c| Ok((parse_num(c[0], no)?, parse_num(c[1], no)?))).collect::<Result<Vec<_>>>()?;
        let var = rd.var(&vname);
        pwl.push(PwlTerm { var, points });
    }

    let vars = rd
        .order
        .iter()
        .map(|n| {
            let kind = kinds.get(n).copied().unwrap_or(VarKind::Continuous);
            let (lb, ub) = bounds.get(n).copied().unwrap_or_default();
            let default_ub = if kind == VarKind::Binary { 1.0 } else { f64::INFINITY };
            Variable { name: n.clone(), kind, lb: lb.unwrap_or(0.0), ub: ub.unwrap_or(default_ub) }
        })
        .collect();
    Ok(MipModel { name, vars, constraints, indicators, objective, pwl })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_single_variable() {
        let mut m = MipModel::new("one");
        let x = m.add_var("x", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
        m.add_row("c0", vec![(x, 1.0)], Sense::Ge, 1.0);
        m.objective = vec![(x, 1.0)];
        let golden = "\\Problem name: one\nMinimize\n obj: x\nSubject To\n c0: x >= 1\nBounds\n x free\nEnd\n";
        assert_eq!(write_lp(&m), golden);
        assert_eq!(read_lp(golden).unwrap(), m);
    }

    #[test]
    fn round_trip_with_indicators_and_pwl() {
        let mut m = MipModel::new("mix");
        let d = m.add_var("delta", VarKind::Binary, 0.0, 1.0);
        let t = m.add_var("t", VarKind::Continuous, -0.25, 1.5);
        let k = m.add_var("k", VarKind::Integer, 0.0, 7.0);
        let f = m.add_var("f", VarKind::Integer, 2.0, 2.0);
        m.add_row("r", vec![(t, 0.1), (k, -3.0), (f, 1e-12)], Sense::Le, -0.3);
        m.add_indicator("i", d, false, vec![(t, 1.0)], Sense::Ge, 0.1);
        m.pwl.push(PwlTerm { var: t, points: vec![(0.0, 0.1), (0.1, 0.0), (1.0, 0.9)] });
        let back = read_lp(&write_lp(&m)).unwrap();
        assert_eq!(back.vars, m.vars);
        assert_eq!(back.constraints, m.constraints);
        assert_eq!(back.indicators, m.indicators);
        for x in [-3.0, 0.0, 0.05, 0.1, 0.7, 1.0, 9.0] {
            assert_eq!(back.pwl[0].eval(x), m.pwl[0].eval(x));
        }
        // writing the read model again is stable
        assert_eq!(write_lp(&back), write_lp(&m));
    }

    #[test]
    fn long_rows_wrap_and_parse() {
        let mut m = MipModel::new("wide");
        let vars: Vec<_> = (0..120).map(|i| m.add_var(format!("x_{i}"), VarKind::Binary, 0.0, 1.0)).collect();
        m.add_row("sum", vars.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 20.0);
        let text = write_lp(&m);
        assert!(text.lines().all(|l| l.len() <= WRAP + 20));
        assert_eq!(read_lp(&text).unwrap(), m);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -3.0, 1e-17, 123456.789, 1e300] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }
}
